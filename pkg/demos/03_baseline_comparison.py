"""CTC baseline versus the autoregressive decoder on the same data and budget.

Run after 01:  python3 demos/03_baseline_comparison.py [data_dir]
"""
import sys
from pathlib import Path

from autosign.augment import AugConfig
from autosign.model import ModelConfig
from autosign.training import CKPT_BEST, TrainConfig, comparison_table, evaluate_checkpoint, run_training

data = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_data")
train = TrainConfig(epochs=40, lr=1e-3, scheduler=False, patience=40, augment=AugConfig(enabled=False))

rows = []
for label, kind in (("autosign", "autoregressive"), ("ctc", "ctc")):
    out = Path(f"demo_{kind}")
    # Identical encoder width and depth for both heads.
    res = run_training(train, data, out, ModelConfig(vocab_size=1, kind=kind, channels=64, d_model=64,
                                                     n_layers=2, n_heads=4))
    test = evaluate_checkpoint(out / CKPT_BEST, data, "test").wer
    rows.append((label, "pose", res.state.best_dev_wer, test))

print(comparison_table(rows), end="")

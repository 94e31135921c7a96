"""Train a small pose-prefix decoder, decode the dev split and print an error report.

Run after 01:  python3 demos/02_train_decode_report.py [data_dir] [run_dir]
"""
import logging
import sys
from pathlib import Path

from autosign.augment import AugConfig
from autosign.metrics import error_report
from autosign.model import ModelConfig, generate_beam, generate_greedy
from autosign.checkpoint import load_checkpoint
from autosign.pose_data import load_split
from autosign.training import CKPT_BEST, TrainConfig, evaluate_checkpoint, run_training

logging.basicConfig(level=logging.INFO, format="%(message)s")
data = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_data")
run = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_run")

# Much smaller than the desk default so this finishes in a few minutes.
model = ModelConfig(vocab_size=1, channels=64, d_model=64, n_layers=2, n_heads=4, dropout=0.1)
train = TrainConfig(epochs=40, lr=1e-3, scheduler=False, patience=40, augment=AugConfig(enabled=False))
result = run_training(train, data, run, model)
print(f"best dev WER {result.state.best_dev_wer:.3f} at epoch {result.state.best_epoch}")

dev = evaluate_checkpoint(run / CKPT_BEST, data, "dev")
print(error_report(dev.decodes[:3]))

# Beam search never scores below greedy under length normalization.
params, vocab, meta = load_checkpoint(run / CKPT_BEST)
sample = load_split(data, "dev", vocab, meta["modality"])[0]
print("ref   ", " ".join(sample.tokens))
print("greedy", " ".join(vocab.decode(generate_greedy(sample.pose, params).ids)))
print("beam 4", " ".join(vocab.decode(generate_beam(sample.pose, params, 4).ids)))

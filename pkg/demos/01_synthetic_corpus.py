"""Build a small synthetic pose/gloss corpus and look at what the model will see.

Run:  python3 demos/01_synthetic_corpus.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from autosign.augment import AugConfig, apply_pipeline
from autosign.pose_data import (MANIFEST_NAME, load_pose_file, prepare_pose, read_manifest, select_modality,
                                vocabulary_for)
from autosign.rng import rng_stream
from autosign.synth import SplitPlan, SynthConfig, synth_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_data")

# A corpus is a pure function of (config, seed): rerunning gives identical files.
cfg = SynthConfig(vocab_size=12, sentence_len_range=(3, 5))
plan = SplitPlan(n_train=200, n_dev=20, n_test=20, train_signers=4, dev_signers=1, test_signers=1)
splits = synth_dataset(cfg, plan, seed=0, out_dir=out)
print({k: len(v) for k, v in splits.items()})

rows = read_manifest(out / MANIFEST_NAME)
vocab = vocabulary_for(out)
print(f"vocabulary: {len(vocab)} ids, glosses {vocab.glosses[:6]} ...")

first = rows[0]
raw = load_pose_file(out / first.pose_path)
print(f"{first.sample_id} by {first.signer_id}: {' '.join(first.glosses)}")
print(f"  raw pose {raw.frames.shape}, pixel range x {raw.frames[..., 0].min():.0f}..{raw.frames[..., 0].max():.0f}")

# The default input drops the face: 25 body + 2 x 21 hand joints, 134 numbers per frame.
for modality in ("full", "body_hands", "hands_only"):
    seq = select_modality(raw, modality)
    print(f"  {modality:<11} joints={seq.num_joints:3d} input_dim={2 * seq.num_joints}")

model_view = prepare_pose(raw, "body_hands")
det = model_view.detected()
print(f"  normalized coords in [{model_view.frames[det].min():.2f}, {model_view.frames[det].max():.2f}]")

# Augmentation draws from a stream keyed on (seed, epoch, sample), so epoch 3 of
# sample s looks the same on every run.
aug = AugConfig(per_aug_apply_p=1.0)
a = apply_pipeline(model_view, aug, rng_stream(0, 3, first.sample_id))
b = apply_pipeline(model_view, aug, rng_stream(0, 3, first.sample_id))
print(f"  augmented: {model_view.num_frames} -> {a.num_frames} frames, reproducible={np.array_equal(a.frames, b.frames)}")

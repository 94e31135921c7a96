"""Teacher-forced training, dev-WER early stopping, evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as tn
from .augment import AugConfig, apply_pipeline
from .checkpoint import load_checkpoint, save_checkpoint
from .ctc import ctc_batch_loss, ctc_decode_batch
from .errors import DivergenceError
from .metrics import corpus_wer
from .model import ModelConfig, ModelParams, greedy_decode_batch, init_model, teacher_forced_loss
from .optim import AdamW, cosine_warm_restart_lr
from .pose_data import (PoseSequence, Sample, Vocabulary, ensure_dir, load_split, modality_joints,
                        normalize_sequence, pad_and_mask, vocabulary_for)
from .rng import rng_stream, substream

log = logging.getLogger("autosign")

HISTORY_HEADER = "epoch\tlr\ttrain_loss\tdev_wer"
CKPT_BEST, CKPT_LAST, HISTORY_NAME = "ckpt_best", "ckpt_last", "history.tsv"


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    eval_batch_size: int = 4
    lr: float = 1e-4
    weight_decay: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    scheduler: bool = True
    t0: int = 10
    t_mult: int = 2
    lr_min: float = 1e-6
    patience: int = 10
    seed: int = 0
    modality: str = "body_hands"
    max_frames: int | None = None
    max_decode_len: int = 32
    augment: AugConfig = field(default_factory=AugConfig)

    def validate(self) -> "TrainConfig":
        if self.epochs < 1 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("epochs and batch sizes must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.lr < 0 or self.lr_min < 0 or self.weight_decay < 0:
            raise ValueError("learning rates and weight decay must be non-negative")
        modality_joints(self.modality)
        return self

    def lr_at(self, epoch: int) -> float:
        if not self.scheduler:
            return self.lr
        return cosine_warm_restart_lr(epoch, self.lr, self.lr_min, self.t0, self.t_mult)


@dataclass
class RunState:
    epoch: int = 0
    best_dev_wer: float = math.inf
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    optimizer: AdamW | None = None

    def observe(self, epoch: int, dev_wer: float) -> bool:
        """Record a dev WER; strict improvement resets patience."""
        self.epoch = epoch
        if dev_wer < self.best_dev_wer:
            self.best_dev_wer = dev_wer
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            return True
        self.epochs_since_improvement += 1
        return False


@dataclass
class EvalResult:
    wer: float
    decodes: list[tuple[str, list[str], list[str]]]  # (sample_id, ref, hyp)


@dataclass
class HistoryRow:
    epoch: int
    lr: float
    train_loss: float
    dev_wer: float

    def to_tsv(self) -> str:
        return f"{self.epoch}\t{self.lr!r}\t{self.train_loss!r}\t{self.dev_wer!r}"


@dataclass
class TrainResult:
    best_checkpoint: Path
    history: list[HistoryRow]
    state: RunState
    params: ModelParams
    vocab: Vocabulary


def augment_sample(pose: PoseSequence, cfg: TrainConfig, epoch: int) -> PoseSequence:
    """Training-time view of a sample: augment, then normalize again so the
    model always sees [-1, 1] boxes. A fully masked draw stays all-missing."""
    out = apply_pipeline(pose, cfg.augment, rng_stream(cfg.seed, epoch, pose.sample_id))
    if out is pose or not out.detected().any():
        return out
    return normalize_sequence(out)


def _loss(batch, params: ModelParams, rng):
    if params.cfg.kind == "ctc":
        return ctc_batch_loss(batch, params, rng)
    return teacher_forced_loss(batch, params, rng)


def train_epoch(params: ModelParams, samples: Sequence[Sample], cfg: TrainConfig, state: RunState,
                epoch: int) -> float:
    """One pass over shuffled batches; returns the mean batch loss."""
    if not samples:
        raise ValueError("empty training split")
    if state.optimizer is None:
        state.optimizer = AdamW(params.parameters(), cfg.lr, cfg.betas, cfg.eps, cfg.weight_decay)
    opt = state.optimizer
    lr = cfg.lr_at(epoch)
    order = substream(cfg.seed, "shuffle", epoch).permutation(len(samples))
    losses = []
    for b, start in enumerate(range(0, len(order), cfg.batch_size)):
        chunk = [samples[i] for i in order[start:start + cfg.batch_size]]
        poses = [augment_sample(s.pose, cfg, epoch) for s in chunk]
        batch = pad_and_mask([(p, s.gloss) for p, s in zip(poses, chunk)])
        dropout_rng = substream(cfg.seed, "dropout", epoch, b)
        loss = _loss(batch, params, dropout_rng)
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
        opt.zero_grad()
        tn.backward(loss)
        opt.step(lr)
        losses.append(value)
    state.epoch = epoch
    return float(np.mean(losses))


def decode_samples(params: ModelParams, samples: Sequence[Sample], batch_size: int = 4,
                   max_len: int = 32) -> list[list[int]]:
    """Greedy decodes (gloss ids) for every sample, batch by batch."""
    outs: list[list[int]] = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        batch = pad_and_mask([(s.pose, s.gloss) for s in chunk])
        if params.cfg.kind == "ctc":
            outs.extend(ctc_decode_batch(batch.poses, batch.pose_mask, params))
        else:
            outs.extend(greedy_decode_batch(batch.poses, batch.pose_mask, params, max_len))
    return outs


def evaluate(params: ModelParams, samples: Sequence[Sample], vocab: Vocabulary, batch_size: int = 4,
             max_len: int = 32) -> EvalResult:
    """Corpus WER under greedy decoding; no dropout, no augmentation."""
    if not samples:
        raise ValueError("empty evaluation split")
    hyps = decode_samples(params, samples, batch_size, max_len)
    decodes = [(s.sample_id, list(s.tokens), vocab.decode(h)) for s, h in zip(samples, hyps)]
    return EvalResult(corpus_wer((r, h) for _, r, h in decodes), decodes)


def write_history(rows: Sequence[HistoryRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for r in rows:
            fh.write(r.to_tsv() + "\n")


def read_history(path) -> list[HistoryRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != HISTORY_HEADER:
            raise ValueError(f"{path}: unexpected history header {header!r}")
        for line in fh:
            e, lr, loss, w = line.rstrip("\n").split("\t")
            rows.append(HistoryRow(int(e), float(lr), float(loss), float(w)))
    return rows


def resolve_model_config(model_cfg: ModelConfig | None, vocab: Vocabulary, modality: str) -> ModelConfig:
    base = model_cfg or ModelConfig(vocab_size=len(vocab))
    return replace(base, vocab_size=len(vocab), input_dim=2 * modality_joints(modality)).validate()


def run_training(cfg: TrainConfig, data_root, out_dir, model_cfg: ModelConfig | None = None) -> TrainResult:
    """Train until ``cfg.epochs`` or until dev WER fails to improve for
    ``cfg.patience`` consecutive epochs. Writes history.tsv, ckpt_best and
    ckpt_last into ``out_dir``."""
    cfg.validate()
    out_dir = ensure_dir(out_dir)
    vocab = vocabulary_for(data_root)
    train = load_split(data_root, "train", vocab, cfg.modality, cfg.max_frames)
    dev = load_split(data_root, "dev", vocab, cfg.modality, cfg.max_frames)
    mcfg = resolve_model_config(model_cfg, vocab, cfg.modality)
    params = init_model(mcfg, cfg.seed)
    log.info("model %s: %d parameters, input_dim %d", mcfg.kind, params.num_parameters(), mcfg.input_dim)
    meta = {"modality": cfg.modality, "max_frames": cfg.max_frames or 0}
    state = RunState()
    history: list[HistoryRow] = []
    best_path = out_dir / CKPT_BEST
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        loss = train_epoch(params, train, cfg, state, epoch)
        dev_res = evaluate(params, dev, vocab, cfg.eval_batch_size, cfg.max_decode_len)
        improved = state.observe(epoch, dev_res.wer)
        history.append(HistoryRow(epoch, lr, loss, dev_res.wer))
        if improved:
            save_checkpoint(best_path, params, vocab, {**meta, "epoch": epoch})
        save_checkpoint(out_dir / CKPT_LAST, params, vocab, {**meta, "epoch": epoch})
        write_history(history, out_dir / HISTORY_NAME)
        log.info("epoch %d lr %.3g loss %.4f dev_wer %.4f%s", epoch, lr, loss, dev_res.wer,
                 " *" if improved else "")
        if state.epochs_since_improvement >= cfg.patience:
            log.info("early stop after epoch %d (best %d)", epoch, state.best_epoch)
            break
    return TrainResult(best_path, history, state, params, vocab)


def evaluate_checkpoint(ckpt, data_root, split: str, batch_size: int = 4, max_len: int = 32) -> EvalResult:
    params, vocab, meta = load_checkpoint(ckpt)
    max_frames = int(meta.get("max_frames", 0)) or None
    samples = load_split(data_root, split, vocab, meta.get("modality", "body_hands"), max_frames)
    return evaluate(params, samples, vocab, batch_size, max_len)


def comparison_table(rows: Sequence[tuple[str, str, float, float]]) -> str:
    """TSV in the shape of a method comparison: Method, Input, dev and test WER (%)."""
    out = ["method\tinput\tdev_wer\ttest_wer"]
    for method, modality, dev, test in rows:
        out.append(f"{method}\t{modality}\t{100 * dev:.1f}\t{100 * test:.1f}")
    return "\n".join(out) + "\n"

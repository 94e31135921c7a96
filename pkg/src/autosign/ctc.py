"""Transformer encoder + per-step linear classifier trained with CTC.

Class 0 is the blank. Gloss vocabulary id ``g`` maps to CTC class ``g + 1``
inside this module only (``to_ctc_labels`` / ``from_ctc_labels``).
"""
from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from . import tensor as tn
from .errors import ConfigError, GuardError
from .model import ModelParams, attention_mask, encode_prefix, run_blocks
from .pose_data import Batch, GlossSequence
from .tensor import Tensor

BLANK = 0
BRUTE_FORCE_MAX_T = 8


def to_ctc_labels(ids: Sequence[int]) -> list[int]:
    return [int(i) + 1 for i in ids]


def from_ctc_labels(labels: Sequence[int]) -> list[int]:
    return [int(c) - 1 for c in labels]


def encoder_forward(poses: np.ndarray, pose_mask: np.ndarray, params: ModelParams,
                    rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:
    """Per-step log-probabilities [B, T', V + 1] and the step validity mask."""
    if params.cfg.kind != "ctc":
        raise ConfigError("encoder_forward needs a ctc model")
    x, mask = encode_prefix(poses, pose_mask, params, rng)
    x = tn.dropout(x, params.cfg.dropout, rng)
    h = run_blocks(x, attention_mask(mask, causal=False), params, rng)
    logits = tn.linear(h, params["cls.w"], params["cls.b"])
    return tn.log_softmax(logits, axis=-1), mask


def min_alignment_length(labels: Sequence[int]) -> int:
    """Fewest frames that can emit ``labels``: one per label plus a blank
    between each pair of equal neighbours."""
    return len(labels) + sum(1 for a, b in zip(labels, labels[1:]) if a == b)


def ctc_loss_batch(log_probs: Tensor, lengths: Sequence[int], targets: Sequence[Sequence[int]]) -> Tensor:
    """Per-sample CTC negative log-likelihood [B] via the log-space alpha recursion.

    ``targets`` are CTC class labels (no blanks). Samples that cannot be
    aligned in their length come out as +inf.
    """
    B, T_max, C = log_probs.shape
    lengths = np.asarray(lengths, dtype=np.intp)
    L = np.array([len(t) for t in targets], dtype=np.intp)
    S = 2 * int(L.max(initial=0)) + 1
    ext = np.full((B, S), BLANK, dtype=np.intp)
    for b, tgt in enumerate(targets):
        if any(c == BLANK or c < 0 or c >= C for c in tgt):
            raise ValueError("CTC targets must be non-blank class ids")
        ext[b, 1:2 * len(tgt):2] = tgt
    s_idx = np.arange(S)
    valid_s = s_idx[None, :] < (2 * L + 1)[:, None]
    skip_ok = np.zeros((B, S), dtype=bool)
    skip_ok[:, 2:] = (s_idx[None, 2:] % 2 == 1) & (ext[:, 2:] != ext[:, :-2])
    skip_ok &= valid_s

    emit = tn.take_along_axis(log_probs, np.broadcast_to(ext[:, None, :], (B, T_max, S)), axis=2)
    neg_inf = Tensor(np.array(-np.inf))
    start = valid_s & (s_idx[None, :] < 2)
    alpha = tn.where(start, emit[:, 0, :], neg_inf)
    pad1 = Tensor(np.full((B, 1), -np.inf))
    pad2 = Tensor(np.full((B, 2), -np.inf))
    for t in range(1, T_max):
        stay = alpha
        step = tn.concat([pad1, alpha[:, :-1]], axis=1)
        if S > 2:
            skip = tn.where(skip_ok, tn.concat([pad2, alpha[:, :-2]], axis=1), neg_inf)
            merged = tn.logsumexp(tn.stack([stay, step, skip], axis=0), axis=0)
        else:
            merged = tn.logsumexp(tn.stack([stay, step], axis=0), axis=0)
        new = tn.where(valid_s, merged + emit[:, t, :], neg_inf)
        alpha = tn.where((t < lengths)[:, None], new, alpha)

    last = np.stack([2 * L, np.maximum(2 * L - 1, 0)], axis=1)
    ends = tn.take_along_axis(alpha, last, axis=1)
    ends = tn.where(np.stack([np.ones(B, bool), L > 0], axis=1), ends, neg_inf)
    nll = -tn.logsumexp(ends, axis=1)
    return nll


def ctc_loss(log_probs, target: Sequence[int] | GlossSequence) -> Tensor:
    """CTC loss of one [T', C] log-probability matrix against class labels.

    An unalignable target yields a +inf scalar rather than an exception.
    """
    lp = tn.as_tensor(log_probs)
    labels = list(target.ids if isinstance(target, GlossSequence) else target)
    return ctc_loss_batch(lp.reshape(1, *lp.shape), [lp.shape[0]], [labels]).reshape(())


def collapse(path: Sequence[int]) -> list[int]:
    out, prev = [], None
    for c in path:
        if c != prev and c != BLANK:
            out.append(int(c))
        prev = c
    return out


def brute_force_ctc(log_probs, target: Sequence[int]) -> float:
    """Test oracle: enumerate every path, keep those collapsing to ``target``.

    Returns the negative log of the summed probability, +inf when no path
    survives.
    """
    lp = np.asarray(log_probs.data if isinstance(log_probs, Tensor) else log_probs, dtype=np.float64)
    T, C = lp.shape
    if T > BRUTE_FORCE_MAX_T:
        raise GuardError(f"brute force limited to T <= {BRUTE_FORCE_MAX_T}, got {T}")
    target = [int(c) for c in target]
    probs = []
    for path in itertools.product(range(C), repeat=T):
        if collapse(path) == target:
            probs.append(math.exp(sum(lp[t, c] for t, c in enumerate(path))))
    total = math.fsum(probs)
    return math.inf if total == 0.0 else -math.log(total)


def ctc_greedy_decode(log_probs) -> list[int]:
    """Per-step argmax, merge repeats, drop blanks. Returns class labels."""
    lp = np.asarray(log_probs.data if isinstance(log_probs, Tensor) else log_probs)
    return collapse(lp.argmax(axis=-1).tolist())


def ctc_batch_loss(batch: Batch, params: ModelParams, rng: np.random.Generator | None = None) -> Tensor:
    """Training objective: summed CTC NLL over alignable samples divided by
    their total target length. Unalignable samples are skipped."""
    log_probs, mask = encoder_forward(batch.poses, batch.pose_mask, params, rng)
    lengths = mask.sum(axis=1)
    targets = []
    for row, n in zip(batch.tokens_in, batch.gloss_lengths):
        targets.append(to_ctc_labels(row[1:1 + n]))
    feasible = np.array([min_alignment_length(t) <= n for t, n in zip(targets, lengths)])
    if not feasible.any():
        raise GuardError("no sample in the batch is alignable under CTC")
    nll = ctc_loss_batch(log_probs, lengths, targets)
    denom = float(sum(len(t) for t, ok in zip(targets, feasible) if ok))
    safe = tn.where(feasible, nll, 0.0)
    return safe.sum() / denom


def ctc_decode_batch(poses: np.ndarray, pose_mask: np.ndarray, params: ModelParams) -> list[list[int]]:
    """Greedy CTC decoding to gloss vocabulary ids."""
    with tn.no_grad():
        log_probs, mask = encoder_forward(poses, pose_mask, params)
    outs = []
    for b in range(poses.shape[0]):
        n = int(mask[b].sum())
        outs.append(from_ctc_labels(ctc_greedy_decode(log_probs.data[b, :n])))
    return outs

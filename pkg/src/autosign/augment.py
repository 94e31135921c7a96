"""Training-time pose augmentations.

All functions are pure given the generator they are handed; missing (0, 0)
keypoints are never moved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pose_data import KeypointLayout, PoseSequence


@dataclass
class PartAwareConfig:
    enabled: bool = True
    hand_rot_max_deg: float = 10.0
    hand_scale_range: tuple[float, float] = (0.9, 1.1)
    face_jitter_sigma: float = 0.005
    body_jitter_sigma: float = 0.005


@dataclass
class AugConfig:
    enabled: bool = True
    jitter_sigma: float = 0.01
    scale_range: tuple[float, float] = (0.85, 1.15)
    temporal_mask_p: float = 0.15
    frame_dropout_p: float = 0.05
    time_warp_max_shift: int = 1
    per_aug_apply_p: float = 0.5
    part_aware: PartAwareConfig = field(default_factory=PartAwareConfig)

    def __post_init__(self):
        for name in ("temporal_mask_p", "frame_dropout_p", "per_aug_apply_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.frame_dropout_p >= 1.0:
            raise ValueError("frame_dropout_p must be < 1")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < min <= max")
        lo, hi = self.part_aware.hand_scale_range
        if not 0 < lo <= hi:
            raise ValueError("hand_scale_range must satisfy 0 < min <= max")
        if min(self.jitter_sigma, self.part_aware.face_jitter_sigma, self.part_aware.body_jitter_sigma) < 0:
            raise ValueError("jitter sigmas must be >= 0")
        if self.time_warp_max_shift < 0:
            raise ValueError("time_warp_max_shift must be >= 0")


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def gaussian_jitter(seq: PoseSequence, sigma: float, rng: np.random.Generator) -> PoseSequence:
    if sigma == 0:
        return seq
    det = seq.detected()
    noise = rng.normal(0.0, sigma, size=seq.frames.shape)
    return seq.replace(np.where(det[..., None], seq.frames + noise, seq.frames))


def random_scale(seq: PoseSequence, scale_range, rng: np.random.Generator) -> PoseSequence:
    """Scale all detected points by one factor about their centroid."""
    lo, hi = scale_range
    s = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return scale_about_centroid(seq, s)


def scale_about_centroid(seq: PoseSequence, s: float) -> PoseSequence:
    if s == 1.0:
        return seq
    det = seq.detected()
    if not det.any():
        return seq
    c = seq.frames[det].mean(axis=0)
    scaled = (seq.frames - c) * s + c
    return seq.replace(np.where(det[..., None], scaled, seq.frames))


def temporal_mask(seq: PoseSequence, p: float, rng: np.random.Generator) -> PoseSequence:
    """Zero whole frames (every joint becomes the missing sentinel)."""
    if p == 0:
        return seq
    drop = rng.random(seq.num_frames) < p
    frames = seq.frames.copy()
    frames[drop] = 0.0
    return seq.replace(frames)


def frame_dropout(seq: PoseSequence, p: float, rng: np.random.Generator) -> PoseSequence:
    """Delete frames independently; frame 0 survives if everything was selected."""
    if p == 0:
        return seq
    keep = rng.random(seq.num_frames) >= p
    if not keep.any():
        keep[0] = True
    return seq.replace(seq.frames[keep])


def time_warp(seq: PoseSequence, max_shift: int, rng: np.random.Generator) -> PoseSequence:
    """Per-frame index jitter: out[t] = in[clamp(t + d_t)], d_t uniform in [-max_shift, max_shift]."""
    if max_shift == 0:
        return seq
    T = seq.num_frames
    src = np.clip(np.arange(T) + rng.integers(-max_shift, max_shift + 1, size=T), 0, T - 1)
    return seq.replace(seq.frames[src])


def _transform_part(frames: np.ndarray, det: np.ndarray, sl: slice, A: np.ndarray,
                    t: np.ndarray | None = None) -> None:
    """In-place: apply x -> A (x - c_f) + c_f + t to detected points of one part,
    c_f being the per-frame centroid of the part's detected points."""
    pts, d = frames[:, sl], det[:, sl]
    cnt = d.sum(axis=1, keepdims=True)
    c = (pts * d[..., None]).sum(axis=1) / np.maximum(cnt, 1)
    moved = np.einsum("ij,tkj->tki", A, pts - c[:, None]) + c[:, None]
    if t is not None:
        moved = moved + t
    frames[:, sl] = np.where(d[..., None], moved, pts)


def part_aware_augment(seq: PoseSequence, layout: KeypointLayout, cfg: PartAwareConfig,
                       rng: np.random.Generator) -> PoseSequence:
    """Independent per-hand rotation+scale, face affine jitter, body shift.

    Parts absent from ``layout`` are skipped. A transform with zero magnitude
    is skipped outright so it is an exact identity.
    """
    frames = seq.frames.copy()
    det = seq.detected()
    max_rot = np.deg2rad(cfg.hand_rot_max_deg)
    lo, hi = cfg.hand_scale_range
    for hand in ("left_hand", "right_hand"):
        theta = float(rng.uniform(-max_rot, max_rot)) if max_rot > 0 else 0.0
        s = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        if hand in layout and (theta != 0.0 or s != 1.0):
            _transform_part(frames, det, layout.span(hand), _rotation(theta) * s)
    if cfg.face_jitter_sigma > 0:
        A = np.eye(2) + rng.normal(0.0, cfg.face_jitter_sigma, size=(2, 2))
        t = rng.normal(0.0, cfg.face_jitter_sigma, size=2)
        if "face" in layout:
            _transform_part(frames, det, layout.span("face"), A, t)
    if cfg.body_jitter_sigma > 0:
        shift = rng.normal(0.0, cfg.body_jitter_sigma, size=(seq.num_frames, 1, 2))
        if "body" in layout:
            sl = layout.span("body")
            frames[:, sl] = np.where(det[:, sl, None], frames[:, sl] + shift, frames[:, sl])
    return seq.replace(frames)


PIPELINE_ORDER = ("part_aware", "jitter", "scale", "temporal_mask", "frame_dropout", "time_warp")


def apply_pipeline(seq: PoseSequence, cfg: AugConfig, rng: np.random.Generator,
                   training: bool = True) -> PoseSequence:
    """Run the fixed-order pipeline, each stage behind its own Bernoulli gate.

    With ``training=False`` (or ``cfg.enabled`` false) the input is returned
    untouched and no random numbers are drawn.
    """
    if not training or not cfg.enabled:
        return seq
    gates = rng.random(len(PIPELINE_ORDER)) < cfg.per_aug_apply_p
    on = dict(zip(PIPELINE_ORDER, gates))
    if on["part_aware"] and cfg.part_aware.enabled:
        seq = part_aware_augment(seq, seq.layout, cfg.part_aware, rng)
    if on["jitter"]:
        seq = gaussian_jitter(seq, cfg.jitter_sigma, rng)
    if on["scale"]:
        seq = random_scale(seq, cfg.scale_range, rng)
    if on["temporal_mask"]:
        seq = temporal_mask(seq, cfg.temporal_mask_p, rng)
    if on["frame_dropout"]:
        seq = frame_dropout(seq, cfg.frame_dropout_p, rng)
    if on["time_warp"]:
        seq = time_warp(seq, cfg.time_warp_max_shift, rng)
    return seq

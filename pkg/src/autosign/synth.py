"""Synthetic pose/gloss corpus.

Each gloss owns a smooth gesture template: a few keyframes of hand position,
hand rotation, finger curl and small head/torso offsets, rendered over a
gloss-specific duration on top of a fixed rest skeleton. A sentence is the
concatenation of its glosses' templates, warped by a per-signer style
(rotation, scale and offset per body part plus a tempo factor) and finally
perturbed with Gaussian noise.

All randomness comes from Philox substreams keyed on (seed, purpose, ...),
so a sample is a pure function of its sentence, signer and noise draw.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pose_data import (FULL_LAYOUT, MANIFEST_NAME, POSE_DIR, ManifestRow, PoseSequence,
                        ensure_dir, write_manifest, write_pose_file, write_split)
from .rng import substream

GLOSS_WORDS = (
    "HE", "TEACHER", "NO", "I", "SCHOOL", "QUESTION", "FRIEND", "HOUSE", "INQUIRY", "YES",
    "YOU", "WORK", "FAMILY", "MOTHER", "FATHER", "BOOK", "WATER", "EAT", "GO", "COME",
    "TODAY", "TOMORROW", "CAR", "CITY", "DOCTOR", "HOSPITAL", "MONEY", "THANKS", "HELP", "WANT",
    "NAME", "WHERE", "WHAT", "GOOD", "BAD", "BIG", "SMALL", "DAY", "NIGHT", "PRAY",
)

N_KEYFRAMES = 4


@dataclass
class SynthConfig:
    vocab_size: int = 20
    n_samples: int = 100
    sentence_len_range: tuple[int, int] = (3, 7)
    frames_per_gloss_range: tuple[int, int] = (10, 16)
    n_signers: int = 4
    noise_sigma: float = 1.0  # pixels

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        lo, hi = self.sentence_len_range
        if not 1 <= lo <= hi:
            raise ValueError("bad sentence_len_range")
        lo, hi = self.frames_per_gloss_range
        if not 2 <= lo <= hi:
            raise ValueError("bad frames_per_gloss_range")
        if self.n_signers < 1 or self.noise_sigma < 0:
            raise ValueError("bad signer/noise settings")


def gloss_names(vocab_size: int) -> list[str]:
    if vocab_size <= len(GLOSS_WORDS):
        return list(GLOSS_WORDS[:vocab_size])
    return [f"G{i:03d}" for i in range(vocab_size)]


# ---------------------------------------------------------------------------
# skeleton


def _hand_shape(curl: float) -> np.ndarray:
    """21 hand points relative to the wrist, fingers pointing up (-y)."""
    pts = [np.zeros(2)]
    base_angles = np.deg2rad([-50, -20, 0, 15, 30])
    lengths = np.array([9.0, 11.0, 12.0, 11.0, 9.0])
    for f in range(5):
        ang = base_angles[f]
        pos = np.array([np.sin(ang), -np.cos(ang)]) * 8.0
        for j in range(4):
            bend = ang + curl * (j + 1) * 0.45 * (1 if f else -1)
            pos = pos + np.array([np.sin(bend), -np.cos(bend)]) * lengths[f] * (0.9 ** j)
            pts.append(pos.copy())
    return np.stack(pts)


def _rest_body() -> np.ndarray:
    b = np.zeros((25, 2))
    named = {
        0: (256, 120), 1: (256, 190), 2: (206, 195), 3: (186, 270), 4: (206, 340),
        5: (306, 195), 6: (326, 270), 7: (306, 340), 8: (256, 360), 9: (231, 360),
        10: (228, 440), 11: (226, 500), 12: (281, 360), 13: (284, 440), 14: (286, 500),
        15: (246, 110), 16: (266, 110), 17: (236, 118), 18: (276, 118),
        19: (296, 505), 20: (302, 505), 21: (290, 512), 22: (216, 505), 23: (210, 505), 24: (222, 512),
    }
    for i, xy in named.items():
        b[i] = xy
    return b


def _rest_face() -> np.ndarray:
    t = np.linspace(0.0, 2 * np.pi, 19, endpoint=False)
    return np.stack([256 + 28 * np.cos(t), 118 + 36 * np.sin(t)], axis=1)


REST_BODY = _rest_body()
REST_FACE = _rest_face()
R_WRIST, L_WRIST = 4, 7  # body indices
R_ELBOW, L_ELBOW = 3, 6
R_SHOULDER, L_SHOULDER = 2, 5


def _rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# templates and styles


@dataclass
class GlossTemplate:
    duration: int
    # keyframe tracks, each N_KEYFRAMES long
    right_pos: np.ndarray   # K x 2 wrist offset from rest
    left_pos: np.ndarray
    right_rot: np.ndarray   # K radians
    left_rot: np.ndarray
    right_curl: np.ndarray  # K
    left_curl: np.ndarray
    head: np.ndarray        # K x 2
    torso: np.ndarray       # K x 2


def make_template(seed: int, token: int, cfg: SynthConfig) -> GlossTemplate:
    rng = substream(seed, "template", token)
    lo, hi = cfg.frames_per_gloss_range
    K = N_KEYFRAMES
    one_handed = rng.random() < 0.3
    left_scale = 0.2 if one_handed else 1.0
    return GlossTemplate(
        duration=int(rng.integers(lo, hi + 1)),
        right_pos=rng.uniform([-90, -200], [90, 20], size=(K, 2)),
        left_pos=rng.uniform([-90, -200], [90, 20], size=(K, 2)) * left_scale,
        right_rot=rng.uniform(-1.2, 1.2, size=K),
        left_rot=rng.uniform(-1.2, 1.2, size=K) * left_scale,
        right_curl=rng.uniform(-0.2, 1.0, size=K),
        left_curl=rng.uniform(-0.2, 1.0, size=K),
        head=rng.normal(0.0, 4.0, size=(K, 2)),
        torso=rng.normal(0.0, 3.0, size=(K, 2)),
    )


@dataclass
class SignerStyle:
    tempo: float
    global_scale: float
    global_offset: np.ndarray            # 2
    part_rot: dict[str, float]
    part_scale: dict[str, float]
    part_offset: dict[str, np.ndarray]


def make_style(seed: int, signer: int) -> SignerStyle:
    rng = substream(seed, "signer", signer)
    parts = ("body", "face", "left_hand", "right_hand")
    return SignerStyle(
        tempo=float(rng.uniform(0.85, 1.15)),
        global_scale=float(rng.uniform(0.85, 1.15)),
        global_offset=rng.uniform(-30, 30, size=2),
        part_rot={p: float(rng.uniform(-0.08, 0.08)) for p in parts},
        part_scale={p: float(rng.uniform(0.92, 1.08)) for p in parts},
        part_offset={p: rng.uniform(-6, 6, size=2) for p in parts},
    )


def _interp(track: np.ndarray, n: int) -> np.ndarray:
    """Smooth (cosine-eased) interpolation of K keyframes onto n frames."""
    K = track.shape[0]
    u = np.linspace(0.0, K - 1, n)
    i0 = np.minimum(np.floor(u).astype(int), K - 2)
    frac = u - i0
    w = (1 - np.cos(np.pi * frac)) / 2
    if track.ndim == 1:
        return track[i0] * (1 - w) + track[i0 + 1] * w
    return track[i0] * (1 - w)[:, None] + track[i0 + 1] * w[:, None]


def render_gloss(tpl: GlossTemplate, n_frames: int) -> np.ndarray:
    """n_frames x 86 x 2 canonical (style-free) poses for one gloss."""
    out = np.zeros((n_frames, 86, 2))
    rp, lp = _interp(tpl.right_pos, n_frames), _interp(tpl.left_pos, n_frames)
    rr, lr = _interp(tpl.right_rot, n_frames), _interp(tpl.left_rot, n_frames)
    rc, lc = _interp(tpl.right_curl, n_frames), _interp(tpl.left_curl, n_frames)
    hd, ts = _interp(tpl.head, n_frames), _interp(tpl.torso, n_frames)
    b_sl, f_sl = FULL_LAYOUT.span("body"), FULL_LAYOUT.span("face")
    lh_sl, rh_sl = FULL_LAYOUT.span("left_hand"), FULL_LAYOUT.span("right_hand")
    for t in range(n_frames):
        body = REST_BODY + ts[t]
        body[[0, 15, 16, 17, 18]] += hd[t]
        r_wrist = REST_BODY[R_WRIST] + rp[t]
        l_wrist = REST_BODY[L_WRIST] + lp[t]
        body[R_WRIST], body[L_WRIST] = r_wrist, l_wrist
        body[R_ELBOW] = 0.5 * (body[R_SHOULDER] + r_wrist) + np.array([-25.0, 10.0])
        body[L_ELBOW] = 0.5 * (body[L_SHOULDER] + l_wrist) + np.array([25.0, 10.0])
        out[t, b_sl] = body
        out[t, f_sl] = REST_FACE + ts[t] + hd[t]
        right = _hand_shape(rc[t]) @ _rot(rr[t]).T
        left = (_hand_shape(lc[t]) * np.array([-1.0, 1.0])) @ _rot(lr[t]).T
        out[t, rh_sl] = right + r_wrist
        out[t, lh_sl] = left + l_wrist
    return out


def apply_style(frames: np.ndarray, style: SignerStyle) -> np.ndarray:
    out = frames.copy()
    for name, _, _ in FULL_LAYOUT.parts:
        sl = FULL_LAYOUT.span(name)
        pts = out[:, sl]
        center = pts.mean(axis=(0, 1))
        R = _rot(style.part_rot[name]) * style.part_scale[name]
        out[:, sl] = (pts - center) @ R.T + center + style.part_offset[name]
    anchor = np.array([256.0, 256.0])
    return (out - anchor) * style.global_scale + anchor + style.global_offset


class SynthCorpus:
    """Gloss templates and signer styles derived from one seed."""

    def __init__(self, cfg: SynthConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.words = gloss_names(cfg.vocab_size)
        self.templates = [make_template(seed, i, cfg) for i in range(cfg.vocab_size)]
        self._styles: dict[int, SignerStyle] = {}
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def style(self, signer: int) -> SignerStyle:
        if signer not in self._styles:
            self._styles[signer] = make_style(self.seed, signer)
        return self._styles[signer]

    def gloss_frames(self, token: int, signer: int) -> np.ndarray:
        key = (token, signer)
        if key not in self._cache:
            lo, hi = self.cfg.frames_per_gloss_range
            tpl = self.templates[token]
            n = int(np.clip(round(tpl.duration * self.style(signer).tempo), lo, hi))
            self._cache[key] = render_gloss(tpl, n)
        return self._cache[key]

    def render(self, sentence: list[int], signer: int, noise_rng: np.random.Generator | None) -> np.ndarray:
        frames = np.concatenate([self.gloss_frames(tok, signer) for tok in sentence], axis=0)
        frames = apply_style(frames, self.style(signer))
        if noise_rng is not None and self.cfg.noise_sigma > 0:
            frames = frames + noise_rng.normal(0.0, self.cfg.noise_sigma, size=frames.shape)
        return frames.astype(np.float32).astype(np.float64)

    def sample_sentence(self, rng: np.random.Generator) -> list[int]:
        lo, hi = self.cfg.sentence_len_range
        n = int(rng.integers(lo, hi + 1))
        sent: list[int] = []
        while len(sent) < n:
            tok = int(rng.integers(self.cfg.vocab_size))
            if not sent or tok != sent[-1] or self.cfg.vocab_size == 1:
                sent.append(tok)
        return sent


@dataclass
class SynthSample:
    sample_id: str
    signer_id: str
    glosses: tuple[str, ...]
    pose: PoseSequence


def synth_generate(cfg: SynthConfig, seed: int, out_dir=None, *, signer_offset: int = 0,
                   prefix: str = "s", corpus: SynthCorpus | None = None) -> list[SynthSample]:
    """Generate ``cfg.n_samples`` samples; signers are assigned round-robin
    from ``signer_offset``. When ``out_dir`` is given, pose files and a
    manifest are written there."""
    corpus = corpus or SynthCorpus(cfg, seed)
    samples = []
    for i in range(cfg.n_samples):
        sid = f"{prefix}{i:05d}"
        signer = signer_offset + i % cfg.n_signers
        rng = substream(seed, "sample", prefix, i)
        sentence = corpus.sample_sentence(rng)
        frames = corpus.render(sentence, signer, rng)
        pose = PoseSequence(frames, FULL_LAYOUT, f"signer{signer:02d}", sid)
        samples.append(SynthSample(sid, pose.signer_id, tuple(corpus.words[t] for t in sentence), pose))
    if out_dir is not None:
        write_samples(samples, out_dir)
    return samples


def write_samples(samples: list[SynthSample], out_dir) -> None:
    out_dir = ensure_dir(out_dir)
    ensure_dir(out_dir / POSE_DIR)
    rows = []
    for s in samples:
        rel = f"{POSE_DIR}/{s.sample_id}.pose"
        write_pose_file(s.pose, out_dir / rel)
        rows.append(ManifestRow(s.sample_id, s.signer_id, rel, s.glosses))
    write_manifest(rows, out_dir / MANIFEST_NAME)


@dataclass
class SplitPlan:
    n_train: int = 500
    n_dev: int = 100
    n_test: int = 100
    train_signers: int = 8
    dev_signers: int = 2
    test_signers: int = 2


def synth_dataset(cfg: SynthConfig, plan: SplitPlan, seed: int, out_dir) -> dict[str, list[str]]:
    """Train/dev/test corpus with disjoint signer pools (dev/test signers are unseen)."""
    corpus = SynthCorpus(cfg, seed)
    pools = [("train", plan.n_train, plan.train_signers, 0),
             ("dev", plan.n_dev, plan.dev_signers, plan.train_signers),
             ("test", plan.n_test, plan.test_signers, plan.train_signers + plan.dev_signers)]
    everything: list[SynthSample] = []
    splits: dict[str, list[str]] = {}
    for name, n, n_signers, offset in pools:
        sub = SynthConfig(cfg.vocab_size, n, cfg.sentence_len_range, cfg.frames_per_gloss_range,
                          n_signers, cfg.noise_sigma) if n else None
        part = synth_generate(sub, seed, signer_offset=offset, prefix=f"{name}_", corpus=corpus) if sub else []
        splits[name] = [s.sample_id for s in part]
        everything.extend(part)
    out_dir = Path(out_dir)
    write_samples(everything, out_dir)
    for name, ids in splits.items():
        write_split(ids, out_dir / f"{name}.txt")
    return splits

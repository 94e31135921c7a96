"""Pose/gloss data model, the binary pose format, manifests, and batching."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BatchError, ConfigError, CorruptionError, EmptyPoseError, FormatError

# ---------------------------------------------------------------------------
# keypoint layout

PART_ORDER = ("body", "face", "left_hand", "right_hand")
PART_SIZES = {"body": 25, "face": 19, "left_hand": 21, "right_hand": 21}

MODALITIES: dict[str, tuple[str, ...]] = {
    "full": ("body", "face", "left_hand", "right_hand"),
    "hands_only": ("left_hand", "right_hand"),
    "hands_face": ("face", "left_hand", "right_hand"),
    "body_hands": ("body", "left_hand", "right_hand"),
}


@dataclass(frozen=True)
class KeypointLayout:
    """Ordered, contiguous part spans. ``parts`` is a tuple of (name, start, size)."""

    parts: tuple[tuple[str, int, int], ...]

    @classmethod
    def from_parts(cls, names: Iterable[str]) -> "KeypointLayout":
        names = set(names)
        unknown = names - set(PART_ORDER)
        if unknown:
            raise ConfigError(f"unknown keypoint parts: {sorted(unknown)}")
        spans, start = [], 0
        for name in PART_ORDER:
            if name in names:
                spans.append((name, start, PART_SIZES[name]))
                start += PART_SIZES[name]
        return cls(tuple(spans))

    @classmethod
    def full(cls) -> "KeypointLayout":
        return cls.from_parts(PART_ORDER)

    @property
    def num_joints(self) -> int:
        return sum(size for _, _, size in self.parts)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.parts)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def span(self, name: str) -> slice:
        for n, start, size in self.parts:
            if n == name:
                return slice(start, start + size)
        raise KeyError(name)


FULL_LAYOUT = KeypointLayout.full()
NUM_KEYPOINTS = FULL_LAYOUT.num_joints  # 86


def modality_joints(modality: str) -> int:
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality {modality!r}; expected one of {sorted(MODALITIES)}")
    return KeypointLayout.from_parts(MODALITIES[modality]).num_joints


# ---------------------------------------------------------------------------
# sequences


@dataclass
class PoseSequence:
    """T x J x 2 keypoints. An exact (0, 0) pair marks an undetected joint."""

    frames: np.ndarray
    layout: KeypointLayout = FULL_LAYOUT
    signer_id: str = ""
    sample_id: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 2:
            raise ValueError(f"pose frames must be T x J x 2, got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("pose sequence needs at least one frame")
        if self.frames.shape[1] != self.layout.num_joints:
            raise ValueError(
                f"{self.frames.shape[1]} joints do not match layout with {self.layout.num_joints}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("pose coordinates must be finite")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_joints(self) -> int:
        return self.frames.shape[1]

    @property
    def feature_dim(self) -> int:
        return 2 * self.num_joints

    def detected(self) -> np.ndarray:
        """Boolean T x J mask of joints that are not the (0, 0) sentinel."""
        return np.any(self.frames != 0.0, axis=-1)

    def replace(self, frames: np.ndarray, layout: KeypointLayout | None = None) -> "PoseSequence":
        return PoseSequence(frames, layout or self.layout, self.signer_id, self.sample_id)


# ---------------------------------------------------------------------------
# binary pose file

MAGIC = b"PSEQ"
VERSION = 1
_HEADER = struct.Struct("<4sIII")  # 16 bytes


def write_pose_file(seq: PoseSequence, path) -> None:
    """Write ``seq`` as little-endian float32. Values are quantized to float32."""
    T, J, _ = seq.frames.shape
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, T, J))
        fh.write(payload)


def read_pose_header(path) -> tuple[int, int, int]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    return _parse_header(head, path)[1:]


def _parse_header(head: bytes, path) -> tuple[bytes, int, int, int]:
    if len(head) < _HEADER.size:
        raise CorruptionError(f"{path}: truncated header")
    magic, version, T, J = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return magic, version, T, J


def load_pose_file(path, sample_id: str = "", signer_id: str = "") -> PoseSequence:
    with open(path, "rb") as fh:
        raw = fh.read()
    _, _, T, J = _parse_header(raw[:_HEADER.size], path)
    expected = T * J * 2 * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise CorruptionError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    if J != NUM_KEYPOINTS:
        raise FormatError(f"{path}: expected {NUM_KEYPOINTS} joints, file has {J}")
    if T < 1:
        raise CorruptionError(f"{path}: zero frames")
    frames = np.frombuffer(body, dtype="<f4").reshape(T, J, 2).astype(np.float64)
    return PoseSequence(frames, FULL_LAYOUT, signer_id, sample_id)


# ---------------------------------------------------------------------------
# transforms


def normalize_sequence(seq: PoseSequence) -> PoseSequence:
    """Map the bounding box of detected keypoints onto [-1, 1] per axis.

    Statistics are pooled over the whole sequence so relative motion across
    frames survives. Missing joints stay exactly (0, 0); an axis with zero
    extent maps to 0.
    """
    det = seq.detected()
    if not det.any():
        raise EmptyPoseError(f"sequence {seq.sample_id!r} has no detected keypoints")
    out = np.zeros_like(seq.frames)
    pts = seq.frames[det]
    for axis in range(2):
        lo, hi = pts[:, axis].min(), pts[:, axis].max()
        if hi > lo:
            vals = 2.0 * ((pts[:, axis] - lo) / (hi - lo)) - 1.0
        else:
            vals = np.zeros(len(pts))
        out[..., axis][det] = vals
    return seq.replace(out)


def select_modality(seq: PoseSequence, modality: str) -> PoseSequence:
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality {modality!r}; expected one of {sorted(MODALITIES)}")
    keep = MODALITIES[modality]
    missing = [p for p in keep if p not in seq.layout]
    if missing:
        raise ConfigError(f"sequence layout lacks parts {missing}")
    new_layout = KeypointLayout.from_parts(keep)
    idx = np.concatenate([np.arange(seq.layout.span(p).start, seq.layout.span(p).stop)
                          for p in new_layout.names])
    return seq.replace(seq.frames[:, idx], new_layout)


# ---------------------------------------------------------------------------
# vocabulary

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


def whitespace_tokenize(sentence: str) -> list[str]:
    return sentence.split()


class Vocabulary:
    """Token <-> id bijection. Reserved ids 0-3; glosses from 4 in sorted order."""

    pad_id, bos_id, eos_id, unk_id = PAD, BOS, EOS, UNK

    def __init__(self, tokens: Sequence[str], tokenizer: Callable[[str], list[str]] = whitespace_tokenize):
        self.itos = list(SPECIALS) + list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary tokens must be unique")
        self.tokenizer = tokenizer

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    @property
    def glosses(self) -> list[str]:
        return self.itos[len(SPECIALS):]

    def encode(self, sentence: str | Sequence[str]) -> list[int]:
        toks = self.tokenizer(sentence) if isinstance(sentence, str) else list(sentence)
        return [self.stoi.get(t, UNK) for t in toks]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids if i not in (PAD, BOS, EOS)]

    def to_text(self) -> str:
        return "\n".join(self.glosses) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        return cls([line for line in text.splitlines() if line])


def build_vocabulary(corpus: Iterable[str | Sequence[str]],
                     tokenizer: Callable[[str], list[str]] = whitespace_tokenize) -> Vocabulary:
    uniq: set[str] = set()
    n = 0
    for sentence in corpus:
        n += 1
        uniq.update(tokenizer(sentence) if isinstance(sentence, str) else sentence)
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    uniq -= set(SPECIALS)
    return Vocabulary(sorted(uniq), tokenizer)


@dataclass(frozen=True)
class GlossSequence:
    """Gloss ids without BOS/EOS. Empty only as a decoder output."""

    ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if any(i in (PAD, BOS, EOS) for i in self.ids):
            raise ValueError("gloss sequences must not contain PAD/BOS/EOS")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    poses: np.ndarray        # B x T_max x J x 2
    pose_mask: np.ndarray    # B x T_max bool
    tokens_in: np.ndarray    # B x (L_max + 1), BOS-prefixed, PAD-filled
    tokens_out: np.ndarray   # B x (L_max + 1), EOS-suffixed, PAD-filled
    token_mask: np.ndarray   # B x (L_max + 1) bool
    sample_ids: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.poses.shape[0]

    @property
    def pose_lengths(self) -> np.ndarray:
        return self.pose_mask.sum(axis=1)

    @property
    def gloss_lengths(self) -> np.ndarray:
        return self.token_mask.sum(axis=1) - 1


def pad_and_mask(samples: Sequence[tuple[PoseSequence, GlossSequence]], vocab: Vocabulary | None = None) -> Batch:
    if not samples:
        raise BatchError("cannot batch an empty sample list")
    pad, bos, eos = (vocab.pad_id, vocab.bos_id, vocab.eos_id) if vocab else (PAD, BOS, EOS)
    J = samples[0][0].num_joints
    if any(p.num_joints != J for p, _ in samples):
        raise BatchError("inconsistent joint counts within a batch")
    B = len(samples)
    T_max = max(p.num_frames for p, _ in samples)
    L_max = max(len(g) for _, g in samples)
    poses = np.zeros((B, T_max, J, 2))
    pose_mask = np.zeros((B, T_max), dtype=bool)
    tokens_in = np.full((B, L_max + 1), pad, dtype=np.int64)
    tokens_out = np.full((B, L_max + 1), pad, dtype=np.int64)
    for i, (p, g) in enumerate(samples):
        T = p.num_frames
        poses[i, :T] = p.frames
        pose_mask[i, :T] = True
        n = len(g)
        tokens_in[i, 0] = bos
        tokens_in[i, 1:n + 1] = g.ids
        tokens_out[i, :n] = g.ids
        tokens_out[i, n] = eos
    token_mask = tokens_out != pad
    return Batch(poses, pose_mask, tokens_in, tokens_out, token_mask,
                 [p.sample_id for p, _ in samples])


# ---------------------------------------------------------------------------
# manifest, splits, dataset loading

MANIFEST_NAME = "manifest.tsv"
POSE_DIR = "poses"
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class ManifestRow:
    sample_id: str
    signer_id: str
    pose_path: str
    glosses: tuple[str, ...]


def write_manifest(rows: Iterable[ManifestRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            fh.write(f"{r.sample_id}\t{r.signer_id}\t{r.pose_path}\t{' '.join(r.glosses)}\n")


def read_manifest(path) -> list[ManifestRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
            rows.append(ManifestRow(cols[0], cols[1], cols[2], tuple(cols[3].split())))
    return rows


def write_split(ids: Iterable[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid in ids:
            fh.write(f"{sid}\n")


def read_split(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


@dataclass
class Sample:
    pose: PoseSequence
    gloss: GlossSequence
    tokens: tuple[str, ...]

    @property
    def sample_id(self) -> str:
        return self.pose.sample_id


def prepare_pose(seq: PoseSequence, modality: str, max_frames: int | None = None) -> PoseSequence:
    """Model-input preparation shared by training, evaluation and decoding:
    modality selection, truncation, per-sequence normalization."""
    if max_frames and seq.num_frames > max_frames:
        seq = seq.replace(seq.frames[:max_frames])
    return normalize_sequence(select_modality(seq, modality))


def load_split(root, split: str, vocab: Vocabulary, modality: str = "body_hands",
               max_frames: int | None = None) -> list[Sample]:
    root = Path(root)
    manifest = {r.sample_id: r for r in read_manifest(root / MANIFEST_NAME)}
    split_path = root / f"{split}.txt"
    if not split_path.exists():
        raise FormatError(f"missing split file {split_path}")
    samples = []
    for sid in read_split(split_path):
        if sid not in manifest:
            raise FormatError(f"split {split!r} names unknown sample {sid!r}")
        row = manifest[sid]
        seq = load_pose_file(root / row.pose_path, row.sample_id, row.signer_id)
        ids = vocab.encode(row.glosses)
        samples.append(Sample(prepare_pose(seq, modality, max_frames), GlossSequence(ids), row.glosses))
    return samples


def vocabulary_for(root) -> Vocabulary:
    """Vocabulary over the training split's glosses."""
    root = Path(root)
    manifest = {r.sample_id: r for r in read_manifest(root / MANIFEST_NAME)}
    train = read_split(root / "train.txt")
    return build_vocabulary(manifest[sid].glosses for sid in train)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path

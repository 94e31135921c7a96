"""Checkpoint container.

Layout (little-endian)::

    b"ASCK"  u32 version
    u32 n  + n bytes   config text, one ``key = value`` per line, sorted
    u32 n  + n bytes   vocabulary, one gloss per line (reserved ids implied)
    u32 count
    count x { u16 name_len, name, u32 ndim, ndim x u32 extent, float64 payload }

No timestamps or other run-dependent bytes, so identical parameters give
identical files.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError
from .model import ModelConfig, ModelParams
from .pose_data import Vocabulary
from .tensor import Tensor

MAGIC = b"ASCK"
VERSION = 1


def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path, params: ModelParams, vocab: Vocabulary, meta: dict[str, str] | None = None) -> None:
    cfg_text = params.cfg.to_text() + "".join(f"meta.{k} = {v}\n" for k, v in sorted((meta or {}).items()))
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_text(cfg_text), _pack_text(vocab.to_text()),
             struct.pack("<I", len(params.tensors))]
    for name, t in params.tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptionError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def load_checkpoint(path) -> tuple[ModelParams, Vocabulary, dict[str, str]]:
    buf = Path(path).read_bytes()
    rd = _Reader(buf, path)
    if rd.take(4) != MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    (version,) = rd.unpack("<I")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    kv = parse_kv(rd.text())
    vocab = Vocabulary.from_text(rd.text())
    cfg = ModelConfig.from_mapping({k[len("model."):]: v for k, v in kv.items() if k.startswith("model.")})
    meta = {k[len("meta."):]: v for k, v in kv.items() if k.startswith("meta.")}
    (count,) = rd.unpack("<I")
    tensors = {}
    for _ in range(count):
        (n,) = rd.unpack("<H")
        name = rd.take(n).decode("utf-8")
        (ndim,) = rd.unpack("<I")
        shape = rd.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(rd.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    if rd.pos != len(buf):
        raise CorruptionError(f"{path}: trailing bytes after checkpoint payload")
    return ModelParams(cfg, tensors), vocab, meta

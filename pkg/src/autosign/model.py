"""Pose-prefix decoder-only transformer.

Layout of the token stream fed to the decoder blocks::

    [ compressed pose steps (T') | BOS y1 ... yn ]

One causal mask covers the whole stream, so text positions see every valid
pose step plus earlier text, and pose steps see only earlier pose steps.
Logits are produced at text positions only.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping

import numpy as np

from . import tensor as tn
from .errors import CapacityError, ConfigError, SequenceTooShortError, ShapeError
from .pose_data import BOS, EOS, PAD, Batch, GlossSequence, PoseSequence
from .rng import substream
from .tensor import Tensor

KINDS = ("autoregressive", "ctc")


@dataclass
class ModelConfig:
    vocab_size: int
    input_dim: int = 134
    kind: str = "autoregressive"
    compressor_layers: int = 2  # 0 means a per-frame linear embedding
    channels: int = 512
    kernel: int = 3
    stride: int = 2
    padding: int = 1
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ffn_mult: int = 4
    dropout: float = 0.1
    max_prefix_len: int = 512
    max_text_len: int = 32
    ln_eps: float = 1e-5

    def validate(self) -> "ModelConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"model kind must be one of {KINDS}, got {self.kind!r}")
        if self.compressor_layers not in (0, 1, 2, 3):
            raise ConfigError("compressor_layers must be 0 (linear), 1, 2 or 3")
        positive = ("vocab_size", "input_dim", "channels", "kernel", "stride", "d_model",
                    "n_layers", "n_heads", "ffn_mult", "max_prefix_len", "max_text_len")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.padding < 0:
            raise ConfigError("padding must be >= 0")
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        return self

    def to_text(self) -> str:
        return "".join(f"model.{k} = {v}\n" for k, v in sorted(asdict(self).items()))

    @classmethod
    def from_mapping(cls, items: Mapping[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in items:
                raw = items[f.name]
                kwargs[f.name] = raw if f.type == "str" else (float(raw) if f.type == "float" else int(raw))
        return cls(**kwargs).validate()


@dataclass
class ModelParams:
    cfg: ModelConfig
    tensors: dict[str, Tensor]

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None


# ---------------------------------------------------------------------------
# initialization


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, k = cfg.d_model, cfg.kernel
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = cfg.input_dim
    for i in range(cfg.compressor_layers):
        shapes[f"comp.{i}.w"] = (cfg.channels, c_in, k)
        shapes[f"comp.{i}.b"] = (cfg.channels,)
        c_in = cfg.channels
    shapes["proj.w"] = (c_in, d)
    shapes["proj.b"] = (d,)
    shapes["prefix_pos"] = (cfg.max_prefix_len, d)
    if cfg.kind == "autoregressive":
        shapes["tok_emb"] = (cfg.vocab_size, d)
        shapes["text_pos"] = (cfg.max_text_len, d)
    f = cfg.ffn_mult * d
    for l in range(cfg.n_layers):
        p = f"h{l}."
        shapes[p + "ln1.g"] = (d,)
        shapes[p + "ln1.b"] = (d,)
        shapes[p + "attn.qkv.w"] = (d, 3 * d)
        shapes[p + "attn.qkv.b"] = (3 * d,)
        shapes[p + "attn.out.w"] = (d, d)
        shapes[p + "attn.out.b"] = (d,)
        shapes[p + "ln2.g"] = (d,)
        shapes[p + "ln2.b"] = (d,)
        shapes[p + "mlp.fc.w"] = (d, f)
        shapes[p + "mlp.fc.b"] = (f,)
        shapes[p + "mlp.proj.w"] = (f, d)
        shapes[p + "mlp.proj.b"] = (d,)
    shapes["ln_f.g"] = (d,)
    shapes["ln_f.b"] = (d,)
    if cfg.kind == "autoregressive":
        shapes["head.w"] = (d, cfg.vocab_size)
    else:
        shapes["cls.w"] = (d, cfg.vocab_size + 1)
        shapes["cls.b"] = (cfg.vocab_size + 1,)
    return shapes


def init_model(cfg: ModelConfig, seed: int = 0,
               pretrained: Mapping[str, np.ndarray] | None = None) -> ModelParams:
    """Scaled-normal init (std 0.02; residual output projections additionally
    scaled by 1/sqrt(2 * n_layers)). ``pretrained`` replaces arrays by name,
    which is how externally trained embeddings or blocks are plugged in."""
    cfg.validate()
    rng = substream(int(seed), "init")
    resid_std = 0.02 / math.sqrt(2 * cfg.n_layers)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".g"):
            arr = np.ones(shape)
        elif name.endswith(".b"):
            arr = np.zeros(shape)
        elif name.endswith("attn.out.w") or name.endswith("mlp.proj.w"):
            arr = rng.normal(0.0, resid_std, size=shape)
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        tensors[name] = Tensor(arr, requires_grad=True, name=name)
    for name, arr in (pretrained or {}).items():
        if name not in tensors:
            raise ConfigError(f"pretrained weight {name!r} has no slot in this model")
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != tensors[name].shape:
            raise ShapeError(f"pretrained {name!r} has shape {arr.shape}, expected {tensors[name].shape}")
        tensors[name] = Tensor(arr.copy(), requires_grad=True, name=name)
    return ModelParams(cfg, tensors)


# ---------------------------------------------------------------------------
# pose prefix


def compressed_length(T: int, cfg: ModelConfig) -> int:
    for _ in range(cfg.compressor_layers):
        if T + 2 * cfg.padding < cfg.kernel:
            raise SequenceTooShortError(f"sequence of {T} steps is too short for the compressor")
        T = tn.conv_out_len(T, cfg.kernel, cfg.stride, cfg.padding)
    return T


def downsample_mask(mask: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """A compressed step is valid iff its receptive-field center is a valid frame."""
    L = mask.shape[1]
    L_out = tn.conv_out_len(L, cfg.kernel, cfg.stride, cfg.padding)
    centers = np.arange(L_out) * cfg.stride - cfg.padding + cfg.kernel // 2
    inside = (centers >= 0) & (centers < L)
    out = np.zeros((mask.shape[0], L_out), dtype=bool)
    out[:, inside] = mask[:, centers[inside]]
    return out


def encode_prefix(poses: np.ndarray, pose_mask: np.ndarray, params: ModelParams,
                  rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:
    """poses [B, T, J, 2] -> (prefix [B, T', d_model], prefix_mask [B, T'])."""
    cfg = params.cfg
    poses = np.asarray(poses, dtype=np.float64)
    B, T = poses.shape[:2]
    if poses.shape[2] * 2 != cfg.input_dim:
        raise ShapeError(f"model expects input_dim {cfg.input_dim}, poses give {poses.shape[2] * 2}")
    mask = np.asarray(pose_mask, dtype=bool)
    flat = poses.reshape(B, T, -1) * mask[..., None]
    p = cfg.dropout
    if cfg.compressor_layers:
        x = Tensor(flat.transpose(0, 2, 1))
        for i in range(cfg.compressor_layers):
            x = tn.conv1d(x, params[f"comp.{i}.w"], params[f"comp.{i}.b"], cfg.stride, cfg.padding)
            x = tn.dropout(tn.gelu(x), p, rng)
            mask = downsample_mask(mask, cfg)
            x = x * mask[:, None, :]
        x = x.transpose(0, 2, 1)
    else:
        x = Tensor(flat)
    Tp = x.shape[1]
    if Tp > cfg.max_prefix_len:
        raise CapacityError(f"compressed length {Tp} exceeds max_prefix_len {cfg.max_prefix_len}")
    x = tn.linear(x, params["proj.w"], params["proj.b"])
    x = x + params["prefix_pos"][:Tp]
    return x, mask


def build_causal_mask(T_prefix: int, T_text: int) -> np.ndarray:
    n = T_prefix + T_text
    return np.tril(np.ones((n, n), dtype=bool))


def attention_mask(key_valid: np.ndarray, causal: bool) -> np.ndarray:
    """[B, N, N] boolean: query i may attend key j."""
    B, N = key_valid.shape
    allowed = np.broadcast_to(key_valid[:, None, :], (B, N, N))
    if causal:
        allowed = allowed & build_causal_mask(N, 0)[None]
    return allowed


# ---------------------------------------------------------------------------
# decoder blocks


def _attention(x: Tensor, allowed: np.ndarray, params: ModelParams, prefix: str,
               rng: np.random.Generator | None) -> Tensor:
    cfg = params.cfg
    B, N, d = x.shape
    H = cfg.n_heads
    dh = d // H
    qkv = tn.linear(x, params[prefix + "qkv.w"], params[prefix + "qkv.b"])
    qkv = qkv.reshape(B, N, 3, H, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    scores = tn.where(allowed[:, None], scores, -np.inf)
    att = tn.dropout(tn.softmax(scores, axis=-1), cfg.dropout, rng)
    out = (att @ v).transpose(0, 2, 1, 3).reshape(B, N, d)
    return tn.linear(out, params[prefix + "out.w"], params[prefix + "out.b"])


def run_blocks(x: Tensor, allowed: np.ndarray, params: ModelParams,
               rng: np.random.Generator | None = None) -> Tensor:
    """Pre-norm transformer blocks followed by the final layer norm."""
    cfg = params.cfg
    eps = cfg.ln_eps
    for l in range(cfg.n_layers):
        p = f"h{l}."
        h = tn.layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"], eps)
        x = x + tn.dropout(_attention(h, allowed, params, p + "attn.", rng), cfg.dropout, rng)
        h = tn.layer_norm(x, params[p + "ln2.g"], params[p + "ln2.b"], eps)
        h = tn.gelu(tn.linear(h, params[p + "mlp.fc.w"], params[p + "mlp.fc.b"]))
        h = tn.linear(h, params[p + "mlp.proj.w"], params[p + "mlp.proj.b"])
        x = x + tn.dropout(h, cfg.dropout, rng)
    return tn.layer_norm(x, params["ln_f.g"], params["ln_f.b"], eps)


def _text_logits(prefix: Tensor, prefix_mask: np.ndarray, tokens: np.ndarray,
                 token_mask: np.ndarray, params: ModelParams,
                 rng: np.random.Generator | None) -> Tensor:
    cfg = params.cfg
    L = tokens.shape[1]
    if L > cfg.max_text_len:
        raise CapacityError(f"text length {L} exceeds max_text_len {cfg.max_text_len}")
    text = tn.embedding_lookup(params["tok_emb"], tokens) + params["text_pos"][:L]
    x = tn.dropout(tn.concat([prefix, text], axis=1), cfg.dropout, rng)
    key_valid = np.concatenate([prefix_mask, token_mask], axis=1)
    h = run_blocks(x, attention_mask(key_valid, causal=True), params, rng)
    Tp = prefix.shape[1]
    return h[:, Tp:] @ params["head.w"]


def forward_teacher_forced(batch: Batch, params: ModelParams,
                           rng: np.random.Generator | None = None) -> Tensor:
    """Logits [B, L_max + 1, V] for every text position. ``rng=None`` is eval mode."""
    if params.cfg.kind != "autoregressive":
        raise ConfigError("forward_teacher_forced needs an autoregressive model")
    prefix, pmask = encode_prefix(batch.poses, batch.pose_mask, params, rng)
    return _text_logits(prefix, pmask, batch.tokens_in, batch.token_mask, params, rng)


def teacher_forced_loss(batch: Batch, params: ModelParams,
                        rng: np.random.Generator | None = None) -> Tensor:
    logits = forward_teacher_forced(batch, params, rng)
    return tn.masked_cross_entropy(logits, batch.tokens_out, PAD)


# ---------------------------------------------------------------------------
# generation

_BANNED = (PAD, BOS)


def _next_logprobs(prefix: Tensor, pmask: np.ndarray, tokens: np.ndarray, params: ModelParams) -> np.ndarray:
    """Log-probabilities [n, V] for the token following ``tokens`` [n, L]."""
    n = tokens.shape[0]
    if prefix.shape[0] != n:
        prefix = Tensor(np.broadcast_to(prefix.data, (n,) + prefix.shape[1:]))
        pmask = np.broadcast_to(pmask, (n,) + pmask.shape[1:])
    logits = _text_logits(prefix, pmask, tokens, np.ones(tokens.shape, dtype=bool), params, None)
    last = logits.data[:, -1].copy()
    last[:, list(_BANNED)] = -np.inf
    m = last.max(axis=-1, keepdims=True)
    return last - m - np.log(np.exp(last - m).sum(axis=-1, keepdims=True))


def _as_pose_batch(poses) -> tuple[np.ndarray, np.ndarray]:
    frames = poses.frames if isinstance(poses, PoseSequence) else np.asarray(poses, dtype=np.float64)
    if frames.ndim == 3:
        frames = frames[None]
    return frames, np.ones(frames.shape[:2], dtype=bool)


def _greedy(prefix, pmask, params, max_len) -> tuple[list[int], float, int]:
    max_len = min(max_len, params.cfg.max_text_len)
    tokens = [BOS]
    total = 0.0
    for _ in range(max_len):
        lp = _next_logprobs(prefix, pmask, np.array([tokens]), params)[0]
        tok = int(np.argmax(lp))  # first maximum, i.e. lowest id on ties
        total += float(lp[tok])
        if tok == EOS:
            return tokens[1:], total, len(tokens)
        tokens.append(tok)
    return tokens[1:], total, len(tokens) - 1


def generate_greedy(poses, params: ModelParams, max_len: int = 32) -> GlossSequence:
    """Argmax decoding from BOS until EOS or ``max_len`` tokens."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    frames, mask = _as_pose_batch(poses)
    with tn.no_grad():
        prefix, pmask = encode_prefix(frames, mask, params)
        ids, _, _ = _greedy(prefix, pmask, params, max_len)
    return GlossSequence(ids)


def greedy_decode_batch(poses: np.ndarray, pose_mask: np.ndarray, params: ModelParams,
                        max_len: int = 32) -> list[list[int]]:
    """Batched greedy decoding; row i matches ``generate_greedy`` on sample i alone."""
    max_len = min(max_len, params.cfg.max_text_len)
    B = poses.shape[0]
    with tn.no_grad():
        prefix, pmask = encode_prefix(poses, pose_mask, params)
        tokens = np.full((B, 1), BOS, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        outs: list[list[int]] = [[] for _ in range(B)]
        for _ in range(max_len):
            lp = _next_logprobs(prefix, pmask, tokens, params)
            nxt = lp.argmax(axis=-1)
            for i in np.flatnonzero(~done):
                if nxt[i] == EOS:
                    done[i] = True
                else:
                    outs[i].append(int(nxt[i]))
            if done.all():
                break
            tokens = np.concatenate([tokens, np.where(done, PAD, nxt)[:, None]], axis=1)
    return outs


def generate_beam(poses, params: ModelParams, beam_size: int = 4, max_len: int = 32) -> GlossSequence:
    """Length-normalized beam search. Finished hypotheses leave the beam;
    the greedy hypothesis always competes in the final choice, so the result
    never scores below greedy. ``beam_size=1`` reproduces greedy exactly."""
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    ids, _ = beam_search(poses, params, beam_size, max_len)
    return GlossSequence(ids)


def beam_search(poses, params: ModelParams, beam_size: int, max_len: int) -> tuple[list[int], float]:
    """Returns (ids, length-normalized log-probability)."""
    frames, mask = _as_pose_batch(poses)
    max_len = min(max_len, params.cfg.max_text_len)
    with tn.no_grad():
        prefix, pmask = encode_prefix(frames, mask, params)
        g_ids, g_lp, g_n = _greedy(prefix, pmask, params, max_len)
        alive: list[tuple[list[int], float]] = [([BOS], 0.0)]
        finished: list[tuple[list[int], float, int]] = []
        for _ in range(max_len):
            if not alive:
                break
            lp = _next_logprobs(prefix, pmask, np.array([t for t, _ in alive]), params)
            scores = np.array([s for _, s in alive])[:, None] + lp
            n_b, V = scores.shape
            beam_idx, tok_idx = np.divmod(np.arange(n_b * V), V)
            flat = scores.reshape(-1)
            order = np.lexsort((tok_idx, beam_idx, -flat))
            new_alive = []
            for j in order[:beam_size]:
                if not np.isfinite(flat[j]):
                    break
                b, tok = int(beam_idx[j]), int(tok_idx[j])
                toks = alive[b][0]
                if tok == EOS:
                    finished.append((toks[1:], float(flat[j]), len(toks)))
                else:
                    new_alive.append((toks + [tok], float(flat[j])))
            alive = new_alive
        finished.extend((t[1:], s, len(t) - 1) for t, s in alive)
    pool = [(ids, s / n) for ids, s, n in finished]
    pool.append((g_ids, g_lp / g_n))
    best = max(range(len(pool)), key=lambda i: (pool[i][1], -i))
    return pool[best]


def sequence_logprob(poses, ids, params: ModelParams, eos: bool = True) -> float:
    """Sum of next-token log-probabilities for ``ids`` (plus EOS when ``eos``)."""
    frames, mask = _as_pose_batch(poses)
    with tn.no_grad():
        prefix, pmask = encode_prefix(frames, mask, params)
        seq = [BOS] + list(ids)
        lp = 0.0
        targets = list(ids) + ([EOS] if eos else [])
        for i, tgt in enumerate(targets):
            lp += float(_next_logprobs(prefix, pmask, np.array([seq[:i + 1]]), params)[0, tgt])
    return lp

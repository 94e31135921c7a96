"""Dense float64 tensors with reverse-mode differentiation.

Every op builds its output eagerly with numpy and, when any input requires a
gradient, attaches a backward closure plus references to its inputs.
``backward`` walks the resulting graph in reverse topological order.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyTargetError, RankError, SequenceTooShortError, ShapeError

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, decoding)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d arrays to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise RankError(f"expected a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], bw: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = bw
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# tape / backward


class Tape:
    """Operations reachable from a root, in topological order (producers first)."""

    def __init__(self, ops: list[Tensor]):
        self.ops = ops

    @classmethod
    def record(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        # iterative post-order; recursion would overflow on long recurrences (CTC)
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)


def backward(loss: Tensor, retain_graph: bool = False) -> None:
    """Populate ``.grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers, so leaf parameters
    must be zeroed between steps.
    """
    if loss.data.size != 1:
        raise RankError(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = Tape.record(loss)
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(tape.ops):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if not retain_graph:
        for node in tape.ops:
            if node._backward is not None:
                node._parents = ()
                node._backward = None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(a.data / b.data, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: a._accumulate(-g))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    return _node(a.data ** p, (a,), lambda g: a._accumulate(g * p * a.data ** (p - 1)))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: a._accumulate(g * y))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore"):
        y = np.log(a.data)
    return _node(y, (a,), lambda g: a._accumulate(g / a.data))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: a._accumulate(g * (1.0 - y * y)))


def relu(a) -> Tensor:
    a = as_tensor(a)
    keep = a.data > 0
    return _node(np.where(keep, a.data, 0.0), (a,), lambda g: a._accumulate(g * keep))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a) -> Tensor:
    """Tanh-approximated GELU, as in GPT-2."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    t = x2 * 0.044715
    t += 1.0
    t *= x
    t *= _GELU_C
    np.tanh(t, out=t)
    y = t + 1.0
    y *= x
    y *= 0.5

    def bw(g):
        # d/dx = 0.5 (1 + t) + 0.5 x (1 - t^2) c (1 + 3 k x^2)
        d = x2 * (3 * 0.044715)
        d += 1.0
        d *= _GELU_C * 0.5
        d *= x
        d *= 1.0 - t * t
        d += 0.5 * (1.0 + t)
        d *= g
        a._accumulate(d)

    return _node(y, (a,), bw)


def where(cond, a, b) -> Tensor:
    """Select ``a`` where ``cond`` else ``b``; ``cond`` is a plain boolean array."""
    cond = np.asarray(cond, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.shape))

    return _node(np.where(cond, a.data, b.data), (a, b), bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout. ``rng=None`` or ``p=0`` means evaluation mode."""
    if rng is None or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------------------
# shape ops


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(old)))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _node(a.data.transpose(axes), (a,), lambda g: a._accumulate(g.transpose(inv)))


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        a._accumulate(full)

    return _node(a.data[idx], (a,), bw)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    axis = axis % ts[0].ndim
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _node(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]

    def bw(g):
        for i, t in enumerate(ts):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return _node(np.stack([t.data for t in ts], axis=axis), tuple(ts), bw)


def take_along_axis(a, indices, axis: int) -> Tensor:
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    out = np.take_along_axis(a.data, indices, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        grids = list(np.indices(indices.shape, sparse=True))
        grids[axis] = indices
        np.add.at(full, tuple(grids), g)
        a._accumulate(full)

    return _node(out, (a,), bw)


# ---------------------------------------------------------------------------
# reductions


def _expand_to(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = sorted(a % len(shape) for a in axes)
        for ax in axes:
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _node(
        np.sum(a.data, axis=axis, keepdims=keepdims),
        (a,),
        lambda g: a._accumulate(_expand_to(g, shape, axis, keepdims)),
    )


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return div(tsum(a, axis, keepdims), float(n))


def _safe_max(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    return np.where(np.isfinite(m), m, 0.0)


def softmax(a, axis: int = -1) -> Tensor:
    """Max-subtracted softmax. Entries at -inf get exactly zero weight; a row
    that is entirely -inf yields all zeros instead of NaN."""
    a = as_tensor(a)
    e = np.exp(a.data - _safe_max(a.data, axis))
    s = e.sum(axis=axis, keepdims=True)
    y = e / np.where(s == 0.0, 1.0, s)

    def bw(g):
        a._accumulate(y * (g - np.sum(g * y, axis=axis, keepdims=True)))

    return _node(y, (a,), bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = _safe_max(a.data, axis)
    s = np.exp(a.data - m).sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        lse = m + np.log(s)
        y = np.where(s > 0.0, a.data - lse, -np.inf)
    p = np.exp(y)

    def bw(g):
        a._accumulate(g - p * np.sum(g, axis=axis, keepdims=True))

    return _node(y, (a,), bw)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """log(sum(exp(a))) along ``axis``; an all -inf slice gives -inf with zero gradient."""
    a = as_tensor(a)
    m = _safe_max(a.data, axis)
    with np.errstate(divide="ignore"):
        out_k = m + np.log(np.exp(a.data - m).sum(axis=axis, keepdims=True))
    finite = np.isfinite(out_k)
    with np.errstate(invalid="ignore"):
        w = np.where(finite, np.exp(a.data - np.where(finite, out_k, 0.0)), 0.0)
    out = out_k if keepdims else np.squeeze(out_k, axis=axis)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        a._accumulate(gk * w)

    return _node(out, (a,), bw)


# ---------------------------------------------------------------------------
# layers


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    if b.ndim == 2 and a.ndim > 2:
        # [..., k] @ [k, n]: fold leading axes into one GEMM
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                a._accumulate((g2 @ b.data.T).reshape(a.shape))
            if b.requires_grad:
                b._accumulate(a2.T @ g2)

        return _node(out, (a, b), bw)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _node(a.data @ b.data, (a, b), bw)


def conv_out_len(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D cross-correlation over the last axis.

    x is [C_in, L] or [B, C_in, L]; weight is [C_out, C_in, k].
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    squeeze = x.ndim == 2
    X = x.data[None] if squeeze else x.data
    if X.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d shapes: input {x.shape}, weight {weight.shape}")
    B, c_in, L = X.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d channel mismatch: input has {c_in}, weight expects {c_in_w}")
    if stride < 1 or padding < 0:
        raise ShapeError("conv1d needs stride >= 1 and padding >= 0")
    if L + 2 * padding < k:
        raise SequenceTooShortError(f"length {L} with padding {padding} is shorter than kernel {k}")
    L_out = conv_out_len(L, k, stride, padding)

    Xp = np.pad(X, ((0, 0), (0, 0), (padding, padding))) if padding else X
    win = sliding_window_view(Xp, k, axis=2)[:, :, ::stride][:, :, :L_out]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B * L_out, c_in * k)
    W2 = weight.data.reshape(c_out, c_in * k)
    y = (cols @ W2.T).reshape(B, L_out, c_out).transpose(0, 2, 1)
    if bias is not None:
        y = y + bias.data[:, None]
    y = np.ascontiguousarray(y)
    if squeeze:
        y = y[0]

    def bw(g):
        G = g[None] if squeeze else g
        G2 = G.transpose(0, 2, 1).reshape(B * L_out, c_out)
        if weight.requires_grad:
            weight._accumulate((G2.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(G.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = (G2 @ W2).reshape(B, L_out, c_in, k)
            dXp = np.zeros((B, c_in, L + 2 * padding))
            span = stride * (L_out - 1) + 1
            for j in range(k):
                dXp[:, :, j:j + span:stride] += dcols[:, :, :, j].transpose(0, 2, 1)
            dX = dXp[:, :, padding:padding + L]
            x._accumulate(dX[0] if squeeze else dX)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(y, parents, bw)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine params must be [{d}], got {gamma.shape}, {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    y = xhat * gamma.data + beta.data

    def bw(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            x._accumulate(
                rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
            )

    return _node(y, (x, gamma, beta), bw)


def embedding_lookup(table, ids) -> Tensor:
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(f"embedding id out of range [0, {V})")
    out = table.data[ids] if ids.size else np.zeros(ids.shape + table.shape[1:])

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        table._accumulate(full)

    return _node(out, (table,), bw)


def masked_cross_entropy(logits, targets, pad_id: int) -> Tensor:
    """Mean negative log-likelihood over positions whose target is not ``pad_id``.

    Pad positions are never read, so their logits cannot influence the value.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.intp)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"logits {logits.shape} do not match targets {targets.shape}")
    V = logits.shape[-1]
    mask = targets != pad_id
    n = int(mask.sum())
    if n == 0:
        raise EmptyTargetError("no non-pad targets in batch")
    tgt = targets[mask]
    if tgt.min() < 0 or tgt.max() >= V:
        raise IndexError(f"target id out of range [0, {V})")
    rows = logits.data[mask]
    m = rows.max(axis=-1, keepdims=True)
    e = np.exp(rows - m)
    s = e.sum(axis=-1, keepdims=True)
    logp = rows - m - np.log(s)
    picked = logp[np.arange(n), tgt]
    loss = -picked.sum() / n

    def bw(g):
        d = e / s
        d[np.arange(n), tgt] -= 1.0
        full = np.zeros_like(logits.data)
        full[mask] = d * (float(g) / n)
        logits._accumulate(full)

    return _node(np.asarray(loss), (logits,), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]

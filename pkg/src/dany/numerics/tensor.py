"""Reverse-mode automatic differentiation on numpy arrays.

A ``Graph`` records every differentiable operation on an explicit tape in
execution order; ``Graph.backward`` walks the tape in exact reverse order and
accumulates gradients into the inputs. Tensors are immutable value carriers:
ops never write into their inputs, so recorded tensors are safe to share.

The default element type is float32; switch to float64 (for tight gradient
verification) with ``set_default_dtype``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Graph",
    "ShapeError",
    "NumericError",
    "GraphError",
    "set_default_dtype",
    "default_dtype",
    "parameter",
    "constant",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class NumericError(ArithmeticError):
    """An operation produced non-finite values."""


class GraphError(RuntimeError):
    """Tape misuse: backward on a consumed graph, non-scalar loss, etc."""


_DTYPE = np.float32

def set_default_dtype(name: str) -> None:
    """Select the global element type: "float32" or "float64"."""
    global _DTYPE
    if name not in ("float32", "float64"):
        raise ValueError(f"unsupported dtype {name!r}")
    _DTYPE = np.float32 if name == "float32" else np.float64


def default_dtype():
    return _DTYPE


def _asarray(data) -> np.ndarray:
    arr = np.asarray(data, dtype=_DTYPE)
    return arr


class Tensor:
    """N-dimensional value with an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # Arithmetic sugar; the free functions below do the recording.
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
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division unsupported; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def parameter(data, name: str) -> Tensor:
    """A named trainable leaf."""
    return Tensor(data, requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

class Graph:
    """Tape of recorded operations.

    Use as a context manager around a forward pass; call ``backward`` on the
    scalar loss before leaving the context (or after, the tape is kept).
    Recording order is the topological order; backward visits nodes in exact
    reverse order. A graph can be consumed by ``backward`` once.
    """

    _stack: list["Graph"] = []

    def __init__(self):
        # node: (out, inputs tuple, backward fn, per-input propagate flags)
        self._nodes = []
        self._live: set[int] = set()
        self._used = False

    def __enter__(self):
        Graph._stack.append(self)
        return self

    def __exit__(self, *exc):
        Graph._stack.pop()
        return False

    @classmethod
    def current(cls) -> "Graph | None":
        return cls._stack[-1] if cls._stack else None

    def _wants(self, tensor: Tensor) -> bool:
        return tensor.requires_grad or id(tensor) in self._live

    def backward(self, loss: Tensor) -> None:
        if self._used:
            raise GraphError("graph already consumed by backward; re-record the forward pass")
        if loss.size != 1:
            raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")
        self._used = True
        loss.grad = np.ones_like(loss.data)
        for out, inputs, bwd, needs in reversed(self._nodes):
            gout = out.grad
            if gout is None:
                continue
            grads = bwd(gout)
            for inp, need, g in zip(inputs, needs, grads):
                if not need or g is None:
                    continue
                if inp.grad is None:
                    inp.grad = g.astype(inp.data.dtype, copy=True) if g.dtype != inp.data.dtype else g.copy()
                else:
                    inp.grad = inp.grad + g


def _record(out: Tensor, inputs: tuple, backward) -> Tensor:
    g = Graph.current()
    if g is not None:
        needs = tuple(g._wants(x) for x in inputs)
        if any(needs):
            g._nodes.append((out, inputs, backward, needs))
            g._live.add(id(out))
    return out


def _finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {op}")
    return arr


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = Tensor(_finite(a.data + b.data, "add"))

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = Tensor(_finite(a.data - b.data, "sub"))

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = Tensor(_finite(a.data * b.data, "mul"))

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), bwd)


def absolute(x) -> Tensor:
    x = _t(x)
    out = Tensor(np.abs(x.data))

    def bwd(g):
        return (g * np.sign(x.data),)

    return _record(out, (x,), bwd)


def relu(x) -> Tensor:
    x = _t(x)
    out = Tensor(np.maximum(x.data, 0))

    def bwd(g):
        return (g * (x.data > 0),)

    return _record(out, (x,), bwd)


def silu(x) -> Tensor:
    x = _t(x)
    sig = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(_finite(x.data * sig, "silu"))

    def bwd(g):
        return (g * (sig * (1.0 + x.data * (1.0 - sig))),)

    return _record(out, (x,), bwd)


def softmax(x, axis: int = -1) -> Tensor:
    x = _t(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(_finite(y, "softmax"))

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (x,), bwd)


def stop_gradient(x) -> Tensor:
    """Forward identity; gradients do not flow through."""
    x = _t(x)
    return Tensor(x.data)


def reroute_gradient(value, target) -> Tensor:
    """Forward value of ``value``, bit-exact; backward sends the whole
    gradient to ``target`` instead (the straight-through estimator)."""
    value, target = _t(value), _t(target)
    if value.shape != target.shape:
        raise ShapeError(f"reroute_gradient shapes differ: {value.shape} vs {target.shape}")
    out = Tensor(value.data)

    def bwd(g):
        return None, g

    return _record(out, (value, target), bwd)


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = _t(x)
    out = Tensor(x.data.reshape(shape))

    def bwd(g):
        return (g.reshape(x.shape),)

    return _record(out, (x,), bwd)


def transpose(x, axes) -> Tensor:
    x = _t(x)
    axes = tuple(axes)
    out = Tensor(x.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (g.transpose(inv),)

    return _record(out, (x,), bwd)


def swapaxes(x, a: int, b: int) -> Tensor:
    x = _t(x)
    out = Tensor(np.swapaxes(x.data, a, b))

    def bwd(g):
        return (np.swapaxes(g, a, b),)

    return _record(out, (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _record(out, tuple(tensors), bwd)


def getitem(x, key) -> Tensor:
    x = _t(x)
    out = Tensor(x.data[key])

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _record(out, (x,), bwd)


def apply_mask(x, m) -> Tensor:
    """Elementwise gate by a constant 0/1 array (broadcastable)."""
    x = _t(x)
    m = np.asarray(m, dtype=x.data.dtype)
    out = Tensor(x.data * m)

    def bwd(g):
        return (_unbroadcast(g * m, x.shape),)

    return _record(out, (x,), bwd)


def gather_rows(table, idx) -> Tensor:
    """Rows of a (K, C) table at integer indices; backward scatter-adds."""
    table = _t(table)
    idx = np.asarray(idx)
    out = Tensor(table.data[idx])

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _record(out, (table,), bwd)


def repeat_interleave(x, repeats: int, axis: int = -1) -> Tensor:
    """Nearest-neighbor upsampling along one axis."""
    x = _t(x)
    out = Tensor(np.repeat(x.data, repeats, axis=axis))
    ax = axis % x.ndim

    def bwd(g):
        shape = list(x.shape)
        shape[ax:ax + 1] = [shape[ax], repeats]
        return (g.reshape(shape).sum(axis=ax + 1),)

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _t(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(out, (x,), bwd)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _t(x)
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))
    count = x.size if axis is None else x.shape[axis]

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / count, x.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Linear algebra and convolution
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out = Tensor(_finite(a.data @ b.data, "matmul"))

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), bwd)


def conv1d(x, w, b=None, stride: int = 1, padding="same") -> Tensor:
    """Temporal convolution: x (B, Cin, T), w (Cout, Cin, K) -> (B, Cout, T_out).

    ``padding`` is "same" (stride 1, odd K), an int, or an (left, right) pair.
    """
    x, w = _t(x), _t(w)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d expects x rank 3 and w rank 3, got {x.shape} and {w.shape}")
    B, cin, T = x.shape
    cout, cin_w, K = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv1d channel mismatch: x {x.shape} vs w {w.shape}")
    if padding == "same":
        if stride != 1 or K % 2 == 0:
            raise ShapeError("'same' padding requires stride 1 and odd kernel size")
        pl = pr = (K - 1) // 2
    elif isinstance(padding, int):
        pl = pr = padding
    else:
        pl, pr = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (pl, pr)))
    t_out = (T + pl + pr - K) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d output would be empty: input {x.shape}, kernel {w.shape}, stride {stride}")
    out_data = np.zeros((B, cout, t_out), dtype=x.data.dtype)
    for k in range(K):
        out_data += np.einsum("oi,bit->bot", w.data[:, :, k], xp[:, :, k:k + stride * t_out:stride])
    bias = _t(b) if b is not None else None
    if bias is not None:
        out_data = out_data + bias.data[None, :, None]
    out = Tensor(_finite(out_data, "conv1d"))

    def bwd(g):
        gw = np.zeros_like(w.data)
        gxp = np.zeros_like(xp)
        for k in range(K):
            sl = slice(k, k + stride * t_out, stride)
            gw[:, :, k] = np.einsum("bot,bit->oi", g, xp[:, :, sl])
            gxp[:, :, sl] += np.einsum("oi,bot->bit", w.data[:, :, k], g)
        gx = gxp[:, :, pl:pl + T]
        if bias is not None:
            return gx, gw, g.sum(axis=(0, 2))
        return gx, gw

    inputs = (x, w, bias) if bias is not None else (x, w)
    return _record(out, inputs, bwd)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def group_norm(x, gamma, beta, groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize x (B, C, T) over (C/groups, T) blocks, then per-channel affine."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    B, C, T = x.shape
    if C % groups:
        raise ShapeError(f"group_norm: {groups} groups do not divide {C} channels")
    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, T)
    out = Tensor(_finite(xhat * gamma.data[None, :, None] + beta.data[None, :, None], "group_norm"))
    n = xg.shape[2]

    def bwd(g):
        ggamma = (g * xhat).sum(axis=(0, 2))
        gbeta = g.sum(axis=(0, 2))
        gy = (g * gamma.data[None, :, None]).reshape(B, groups, -1)
        xh = xhat.reshape(B, groups, -1)
        gx = inv * (gy - gy.mean(axis=2, keepdims=True) - xh * (gy * xh).mean(axis=2, keepdims=True))
        return gx.reshape(B, C, T), ggamma, gbeta

    return _record(out, (x, gamma, beta), bwd)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis; affine parameters match that axis."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(_finite(xhat * gamma.data + beta.data, "layer_norm"))
    reduce_axes = tuple(range(x.ndim - 1))

    def bwd(g):
        ggamma = (g * xhat).sum(axis=reduce_axes)
        gbeta = g.sum(axis=reduce_axes)
        gy = g * gamma.data
        gx = inv * (gy - gy.mean(axis=-1, keepdims=True) - xhat * (gy * xhat).mean(axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return _record(out, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# Composites
# ---------------------------------------------------------------------------

def sdpa(q, k, v) -> Tensor:
    """Scaled dot-product attention over trailing (tokens, head_dim) axes.

    With a single key/value token the softmax weight is 1 and the output
    equals v exactly.
    """
    d = q.shape[-1]
    att = softmax(mul(matmul(q, swapaxes(k, -1, -2)), 1.0 / np.sqrt(d)), axis=-1)
    return matmul(att, v)


def film(x, scale, shift) -> Tensor:
    """Feature-wise affine modulation: x * (1 + scale) + shift.

    x is (B, C, T); scale/shift are (B, C) broadcast over time.
    """
    s = reshape(scale, (*scale.shape, 1))
    b = reshape(shift, (*shift.shape, 1))
    return add(mul(x, add(s, 1.0)), b)


def sinusoidal_embedding(positions, dim: int) -> Tensor:
    """Fixed sin/cos embedding of integer positions: (n,) -> (n, dim)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = positions[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return Tensor(emb)


def mse(a, b) -> Tensor:
    d = sub(a, b)
    return tmean(mul(d, d))


def l1(a, b) -> Tensor:
    return tmean(absolute(sub(a, b)))

"""Layer building blocks on top of the autodiff tape.

Weight matrices and convolution kernels are initialized uniformly at
+-1/sqrt(fan_in); normalization affine terms start at ones/zeros. Every layer
takes the RandomStream it initializes from, so construction is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tn
from .rng import RandomStream
from .tensor import Tensor, parameter

__all__ = [
    "Module",
    "Linear",
    "Conv1d",
    "GroupNorm",
    "LayerNorm",
    "SelfAttention",
    "CrossAttention",
]


class Module:
    """Composable parameter container; children discovered via attributes."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for attr, value in vars(self).items():
            key = f"{prefix}{attr}" if not prefix else f"{prefix}/{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(key))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}/{i}"))
        return out

    def load_state(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        params = self.named_parameters(prefix)
        missing = sorted(set(params) - set(state))
        if missing:
            raise KeyError(f"checkpoint missing parameters: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"parameter {name}: checkpoint shape {arr.shape} != model shape {p.data.shape}")
            p.data = arr.copy()

    def state(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters(prefix).items()}


def _uniform_fan_in(stream: RandomStream, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return stream.uniform(-bound, bound, shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, stream: RandomStream, name: str = "linear"):
        self.w = parameter(_uniform_fan_in(stream.split("w"), (in_dim, out_dim), in_dim), f"{name}.w")
        self.b = parameter(_uniform_fan_in(stream.split("b"), (out_dim,), in_dim), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return tn.add(tn.matmul(x, self.w), self.b)


class Conv1d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stream: RandomStream,
                 stride: int = 1, padding="same", name: str = "conv"):
        fan_in = in_ch * kernel
        self.w = parameter(_uniform_fan_in(stream.split("w"), (out_ch, in_ch, kernel), fan_in), f"{name}.w")
        self.b = parameter(_uniform_fan_in(stream.split("b"), (out_ch,), fan_in), f"{name}.b")
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return tn.conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int = 8, name: str = "gn"):
        groups = min(groups, channels)
        while channels % groups:
            groups -= 1
        self.groups = groups
        self.gamma = parameter(np.ones(channels), f"{name}.gamma")
        self.beta = parameter(np.zeros(channels), f"{name}.beta")

    def __call__(self, x: Tensor) -> Tensor:
        return tn.group_norm(x, self.gamma, self.beta, self.groups)


class LayerNorm(Module):
    def __init__(self, dim: int, name: str = "ln"):
        self.gamma = parameter(np.ones(dim), f"{name}.gamma")
        self.beta = parameter(np.zeros(dim), f"{name}.beta")

    def __call__(self, x: Tensor) -> Tensor:
        return tn.layer_norm(x, self.gamma, self.beta)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (B, T, W) -> (B, H, T, W/H)
    b, t, w = x.shape
    return tn.transpose(tn.reshape(x, (b, t, heads, w // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, t, d = x.shape
    return tn.reshape(tn.transpose(x, (0, 2, 1, 3)), (b, t, h * d))


class SelfAttention(Module):
    """Pre-norm multi-head self-attention over time; residual output.

    Operates on (B, C, T) blocks to match the convolutional layout.
    """

    def __init__(self, width: int, heads: int, stream: RandomStream, name: str = "attn"):
        if width % heads:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.heads = heads
        self.norm = LayerNorm(width, f"{name}.norm")
        self.qkv = Linear(width, 3 * width, stream.split("qkv"), f"{name}.qkv")
        self.proj = Linear(width, width, stream.split("proj"), f"{name}.proj")

    def __call__(self, x: Tensor) -> Tensor:
        w = x.shape[1]
        h = tn.swapaxes(x, 1, 2)  # (B, T, W)
        hn = self.norm(h)
        qkv = self.qkv(hn)
        q = _split_heads(qkv[:, :, 0:w], self.heads)
        k = _split_heads(qkv[:, :, w:2 * w], self.heads)
        v = _split_heads(qkv[:, :, 2 * w:3 * w], self.heads)
        att = _merge_heads(tn.sdpa(q, k, v))
        return tn.add(x, tn.swapaxes(self.proj(att), 1, 2))


class CrossAttention(Module):
    """Queries from the main path, keys/values from condition tokens (B, S, W)."""

    def __init__(self, width: int, heads: int, stream: RandomStream, name: str = "xattn"):
        if width % heads:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.heads = heads
        self.norm = LayerNorm(width, f"{name}.norm")
        self.q = Linear(width, width, stream.split("q"), f"{name}.q")
        self.kv = Linear(width, 2 * width, stream.split("kv"), f"{name}.kv")
        self.proj = Linear(width, width, stream.split("proj"), f"{name}.proj")

    def __call__(self, x: Tensor, tokens: Tensor) -> Tensor:
        w = x.shape[1]
        h = tn.swapaxes(x, 1, 2)
        q = _split_heads(self.q(self.norm(h)), self.heads)
        kv = self.kv(tokens)
        k = _split_heads(kv[:, :, 0:w], self.heads)
        v = _split_heads(kv[:, :, w:2 * w], self.heads)
        att = _merge_heads(tn.sdpa(q, k, v))
        return tn.add(x, tn.swapaxes(self.proj(att), 1, 2))

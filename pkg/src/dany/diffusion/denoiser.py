"""Clean-data-predicting denoiser.

U-shaped temporal network over (B, C, T) latent blocks: five residual blocks
and two self-attention layers on each side, one stride-2 stage in the middle,
additive skip connections. The timestep enters every residual block through
feature-wise scale-and-shift modulation of a sinusoidal embedding.

Named condition streams are projected to position-tagged tokens that enter
twice: channel-concatenated with the input (their temporal axis lines up with
the latent's, so slot-aligned copying is a local operation) and through
cross-attention after each self-attention layer. Absent conditions contribute
a zero block at the input and skip cross-attention, so their projection
weights never see a gradient when dropped.
"""

from __future__ import annotations

import numpy as np

from .. import numerics as num
from ..numerics import RandomStream, Tensor
from ..numerics.nn import Conv1d, CrossAttention, GroupNorm, Linear, Module, SelfAttention

__all__ = ["DenoiserNet", "predict_x0"]


class FiLMResBlock(Module):
    def __init__(self, width: int, temb_dim: int, stream: RandomStream):
        self.norm1 = GroupNorm(width)
        self.conv1 = Conv1d(width, width, 3, stream.split("conv1"))
        self.temb = Linear(temb_dim, 2 * width, stream.split("temb"))
        self.norm2 = GroupNorm(width)
        self.conv2 = Conv1d(width, width, 3, stream.split("conv2"))

    def __call__(self, x: Tensor, temb: Tensor) -> Tensor:
        w = x.shape[1]
        h = self.conv1(num.silu(self.norm1(x)))
        ss = self.temb(temb)
        h = num.film(h, ss[:, 0:w], ss[:, w:2 * w])
        h = self.conv2(num.silu(self.norm2(h)))
        return num.add(x, h)


class DenoiserNet(Module):
    def __init__(self, channels: int, width: int = 128, heads: int = 4,
                 cond_slots: dict[str, int] | None = None,
                 stream: RandomStream | None = None):
        stream = stream if stream is not None else RandomStream(0)
        self.channels = channels
        self.width = width
        self.heads = heads
        self.cond_slots = dict(cond_slots or {})

        self.time_mlp1 = Linear(width, width, stream.split("time1"))
        self.time_mlp2 = Linear(width, width, stream.split("time2"))
        self.in_conv = Conv1d(channels, width, 3, stream.split("in"))

        s = stream.split("enc")
        self.enc_res = [FiLMResBlock(width, width, s.split(f"res{i}")) for i in range(5)]
        self.enc_attn = [SelfAttention(width, heads, s.split(f"attn{i}")) for i in range(2)]
        self.down = Conv1d(width, width, 4, stream.split("down"), stride=2, padding=1)

        self.mid = FiLMResBlock(width, width, stream.split("mid"))

        s = stream.split("dec")
        self.dec_res = [FiLMResBlock(width, width, s.split(f"res{i}")) for i in range(5)]
        self.dec_attn = [SelfAttention(width, heads, s.split(f"attn{i}")) for i in range(2)]
        self.up_conv = Conv1d(width, width, 3, stream.split("up"))

        self.out_norm = GroupNorm(width)
        self.out_conv = Conv1d(width, channels, 3, stream.split("out"))

        self.cond_proj: dict[str, Linear] = {}
        self.cond_bias: dict[str, Tensor] = {}
        self.cross = []
        self.cond_fuse = None
        if self.cond_slots:
            cs = stream.split("cond")
            for name, ch in sorted(self.cond_slots.items()):
                self.cond_proj[name] = Linear(ch, width, cs.split(f"proj_{name}"), f"cond/{name}")
                self.cond_bias[name] = num.parameter(
                    cs.split(f"bias_{name}").normal((width,), 0.02), f"cond/{name}/bias")
            self.cross = [CrossAttention(width, heads, cs.split(f"xattn{i}")) for i in range(4)]
            self.cond_fuse = Conv1d(2 * width, width, 1, cs.split("fuse"), name="cond/fuse")

    # attribute walk does not see dicts; surface condition weights explicitly
    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = super().named_parameters(prefix)
        for name, layer in self.cond_proj.items():
            key = f"{prefix}/cond_proj/{name}" if prefix else f"cond_proj/{name}"
            out.update(layer.named_parameters(key))
        for name, p in self.cond_bias.items():
            key = f"{prefix}/cond_bias/{name}" if prefix else f"cond_bias/{name}"
            out[key] = p
        return out

    def _time_embedding(self, t, batch: int) -> Tensor:
        t = np.asarray(t, dtype=np.int64).reshape(-1)
        if t.size == 1:
            t = np.full(batch, t[0])
        if t.size != batch:
            raise ValueError(f"timestep batch {t.size} != input batch {batch}")
        emb = num.sinusoidal_embedding(t, self.width)
        return self.time_mlp2(num.silu(self.time_mlp1(emb)))

    def _position(self, t_len: int) -> Tensor:
        pos = num.sinusoidal_embedding(np.arange(t_len), self.width)
        return num.reshape(num.transpose(pos, (1, 0)), (1, self.width, t_len))

    def _condition_tokens(self, conditions: dict | None) -> list[Tensor]:
        if not conditions:
            return []
        unknown = sorted(set(conditions) - set(self.cond_slots))
        if unknown:
            raise ValueError(f"unknown condition slots {unknown}; declared: {sorted(self.cond_slots)}")
        tokens = []
        for name in sorted(conditions):
            cond = conditions[name]
            cond = cond if isinstance(cond, Tensor) else Tensor(cond)
            if cond.ndim != 3 or cond.shape[1] != self.cond_slots[name]:
                raise ValueError(
                    f"condition {name!r} must be (B, {self.cond_slots[name]}, T), got {cond.shape}")
            tok = self.cond_proj[name](num.swapaxes(cond, 1, 2))        # (B, T, W)
            pos = num.sinusoidal_embedding(np.arange(cond.shape[2]), self.width)
            tokens.append(num.add(num.add(tok, pos), self.cond_bias[name]))
        return tokens

    def __call__(self, x: Tensor, t, conditions: dict | None = None) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ValueError(f"input must be (B, {self.channels}, T), got {x.shape}")
        if x.shape[2] % 2:
            raise ValueError(f"temporal length {x.shape[2]} must be even for the stride-2 stage")
        temb = self._time_embedding(t, x.shape[0])
        token_list = self._condition_tokens(conditions)
        tokens = None
        if token_list:
            tokens = token_list[0] if len(token_list) == 1 else num.concat(token_list, axis=1)

        def cross(i, h):
            return self.cross[i](h, tokens) if tokens is not None else h

        h = num.add(self.in_conv(x), self._position(x.shape[2]))
        if self.cond_fuse is not None:
            if token_list and all(tok.shape[1] == x.shape[2] for tok in token_list):
                inj = token_list[0]
                for tok in token_list[1:]:
                    inj = num.add(inj, tok)
                inj = num.swapaxes(inj, 1, 2)
            else:
                inj = Tensor(np.zeros((x.shape[0], self.width, x.shape[2]), dtype=x.data.dtype))
            h = self.cond_fuse(num.concat([h, inj], axis=1))
        e1 = self.enc_res[0](h, temb)
        e2 = self.enc_res[1](e1, temb)
        a1 = cross(0, self.enc_attn[0](e2))
        e3 = self.enc_res[2](a1, temb)
        hd = self.down(e3)
        e4 = self.enc_res[3](hd, temb)
        a2 = cross(1, self.enc_attn[1](e4))
        e5 = self.enc_res[4](a2, temb)

        m = self.mid(e5, temb)

        d5 = self.dec_res[4](num.add(m, e5), temb)
        a2d = cross(2, self.dec_attn[1](num.add(d5, e4)))
        d4 = self.dec_res[3](a2d, temb)
        hu = self.up_conv(num.repeat_interleave(d4, 2, axis=-1))
        d3 = self.dec_res[2](num.add(hu, e3), temb)
        a1d = cross(3, self.dec_attn[0](num.add(d3, e2)))
        d2 = self.dec_res[1](a1d, temb)
        d1 = self.dec_res[0](num.add(d2, e1), temb)

        return self.out_conv(num.silu(self.out_norm(d1)))


def predict_x0(net: DenoiserNet, x_t, t, conditions: dict | None = None) -> np.ndarray:
    """Network estimate of the clean latent; no clipping, latents are unbounded."""
    x_t = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
    return net(x_t, t, conditions).numpy()

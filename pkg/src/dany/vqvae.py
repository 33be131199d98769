"""Dance-unit codebooks.

A pair of temporal convolutional encoders (one per body half) compresses a
relative pose sequence by a factor of 8 in time; each latent column is snapped
to its nearest codebook row, and a joint decoder reconstructs the full body
from both quantized halves. Every 8-frame window therefore becomes one
discrete "dance unit" drawn from a finite vocabulary per half.

Gradients pass straight through the quantizer: the decoder's gradient at the
quantized latent is copied to the encoder output, while the codebooks are
pulled toward encoder outputs by their own loss term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as num
from .errors import TrainingDiverged
from .motion import (
    MotionSequence,
    channels_to_frames,
    frames_to_channels,
    half_to_channels,
    split_upper_lower,
    to_relative,
)
from .numerics import RandomStream, Tensor
from .numerics.nn import Conv1d, Module
from .numerics.optim import Adam

__all__ = [
    "DOWNSAMPLE",
    "UPPER_CHANNELS",
    "LOWER_CHANNELS",
    "PoseVQVAE",
    "QuantizedPair",
    "nearest_codes",
    "quantize_latent",
    "straight_through",
    "reconstruction_l1",
    "vqvae_loss",
    "encode_quantize",
    "decode_latent",
    "train_vqvae",
]

DOWNSAMPLE = 8
UPPER_CHANNELS = 45  # 15 joints x 3
LOWER_CHANNELS = 27  # 9 joints x 3


class ResConv(Module):
    def __init__(self, width: int, stream: RandomStream):
        self.c1 = Conv1d(width, width, 3, stream.split("c1"))
        self.c2 = Conv1d(width, width, 3, stream.split("c2"))

    def __call__(self, x):
        h = self.c2(num.relu(self.c1(num.relu(x))))
        return num.add(x, h)


class HalfEncoder(Module):
    """(B, in_ch, N) -> (B, latent, N/8) through three stride-2 stages."""

    def __init__(self, in_ch: int, width: int, latent: int, stream: RandomStream):
        self.inp = Conv1d(in_ch, width, 3, stream.split("inp"))
        self.downs = [Conv1d(width, width, 4, stream.split(f"down{i}"), stride=2, padding=1)
                      for i in range(3)]
        self.blocks = [ResConv(width, stream.split(f"res{i}")) for i in range(3)]
        self.out = Conv1d(width, latent, 3, stream.split("out"))

    def __call__(self, x):
        h = self.inp(x)
        for down, block in zip(self.downs, self.blocks):
            h = block(down(h))
        return self.out(h)


class PairDecoder(Module):
    """Both quantized halves, channel-concatenated, back to 72 body channels."""

    def __init__(self, latent: int, width: int, stream: RandomStream):
        self.inp = Conv1d(2 * latent, width, 3, stream.split("inp"))
        self.ups = [Conv1d(width, width, 3, stream.split(f"up{i}")) for i in range(3)]
        self.blocks = [ResConv(width, stream.split(f"res{i}")) for i in range(3)]
        self.out = Conv1d(width, 72, 3, stream.split("out"))

    def __call__(self, h):
        h = self.inp(h)
        for up, block in zip(self.ups, self.blocks):
            h = block(up(num.repeat_interleave(h, 2, axis=-1)))
        return self.out(h)


def nearest_codes(latent: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Nearest codebook row per latent column by squared Euclidean distance.

    latent is (C, N') or (B, C, N'); returns int codes (N',) or (B, N').
    Ties break toward the lowest index. Distances are evaluated in float64 so
    the winner is stable against accumulation order.
    """
    single = latent.ndim == 2
    f = np.asarray(latent, dtype=np.float64)
    if single:
        f = f[None]
    z = np.asarray(codebook, dtype=np.float64)
    if f.shape[1] != z.shape[1]:
        raise ValueError(f"latent channels {f.shape[1]} != codebook channels {z.shape[1]}")
    # ||f - z||^2 = |f|^2 - 2 f.z + |z|^2; the |f|^2 term is constant per column
    cross = np.einsum("bcn,kc->bkn", f, z)
    d2 = (z * z).sum(axis=1)[None, :, None] - 2.0 * cross
    codes = d2.argmin(axis=1)
    return codes[0] if single else codes


def quantize_latent(f_e: Tensor, codebook: Tensor) -> tuple[np.ndarray, Tensor]:
    """Codes plus the gathered codebook rows as a (B, C, N') tensor.

    The gathered tensor is differentiable with respect to the codebook only;
    pair it with straight_through for the decoder path.
    """
    codes = nearest_codes(f_e.numpy(), codebook.numpy())
    batched = codes[None] if codes.ndim == 1 else codes
    b, n = batched.shape
    rows = num.gather_rows(codebook, batched.reshape(-1))        # (B*N', C)
    f_q = num.transpose(num.reshape(rows, (b, n, codebook.shape[1])), (0, 2, 1))
    return codes, f_q


def straight_through(f_e: Tensor, f_q: Tensor) -> Tensor:
    """Forward value of f_q, bit-exact; backward gradient copied to f_e."""
    return num.reroute_gradient(f_q, f_e)


def _diff(x: Tensor) -> Tensor:
    return num.sub(x[:, :, 1:], x[:, :, :-1])


def reconstruction_l1(recon: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error summed over positions, velocities, accelerations."""
    pos = num.l1(recon, target)
    vel = num.l1(_diff(recon), _diff(target))
    acc = num.l1(_diff(_diff(recon)), _diff(_diff(target)))
    return num.add(num.add(pos, vel), acc)


def vqvae_loss(recon: Tensor, target: Tensor, f_e: Tensor, f_q: Tensor,
               delta: float = 0.1) -> Tensor:
    """Reconstruction + codebook pull + commitment.

    The codebook term stops gradients into the encoder; the commitment term
    (weight delta) stops gradients into the codebook. Both use mean squared
    error.
    """
    rec = reconstruction_l1(recon, target)
    codebook_term = num.mse(num.stop_gradient(f_e), f_q)
    commit_term = num.mse(f_e, num.stop_gradient(f_q))
    return num.add(rec, num.add(codebook_term, num.mul(commit_term, delta)))


class PoseVQVAE(Module):
    def __init__(self, codebook_size: int = 512, latent_channels: int = 512,
                 width: int = 128, stream: RandomStream | None = None):
        stream = stream if stream is not None else RandomStream(0)
        self.codebook_size = codebook_size
        self.latent_channels = latent_channels
        self.enc_upper = HalfEncoder(UPPER_CHANNELS, width, latent_channels, stream.split("enc_upper"))
        self.enc_lower = HalfEncoder(LOWER_CHANNELS, width, latent_channels, stream.split("enc_lower"))
        self.decoder = PairDecoder(latent_channels, width, stream.split("decoder"))
        bound = 1.0 / np.sqrt(latent_channels)
        init = stream.split("codebooks")
        self.codebook_upper = num.parameter(
            init.split("upper").uniform(-bound, bound, (codebook_size, latent_channels)), "codebook/upper")
        self.codebook_lower = num.parameter(
            init.split("lower").uniform(-bound, bound, (codebook_size, latent_channels)), "codebook/lower")

    def _check_length(self, n: int) -> None:
        if n % DOWNSAMPLE:
            raise ValueError(f"sequence length {n} not divisible by the downsample rate {DOWNSAMPLE}")

    def encode(self, x: Tensor, half: str) -> Tensor:
        self._check_length(x.shape[-1])
        return (self.enc_upper if half == "upper" else self.enc_lower)(x)

    def codebook(self, half: str) -> Tensor:
        return self.codebook_upper if half == "upper" else self.codebook_lower

    def decode(self, f_upper: Tensor, f_lower: Tensor) -> Tensor:
        if f_upper.shape[-1] != f_lower.shape[-1]:
            raise ValueError(
                f"half latents disagree in length: {f_upper.shape[-1]} vs {f_lower.shape[-1]}")
        return self.decoder(num.concat([f_upper, f_lower], axis=1))

    # checkpoint names: codebooks live under codebook/*, the networks under vqvae/*
    def checkpoint_state(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self.named_parameters().items():
            if name == "codebook_upper":
                out["codebook/upper"] = p.data.copy()
            elif name == "codebook_lower":
                out["codebook/lower"] = p.data.copy()
            else:
                out[f"vqvae/{name}"] = p.data.copy()
        return out

    def load_checkpoint_state(self, state: dict[str, np.ndarray]) -> None:
        remapped = {}
        for name in self.named_parameters():
            if name == "codebook_upper":
                remapped[name] = state["codebook/upper"]
            elif name == "codebook_lower":
                remapped[name] = state["codebook/lower"]
            else:
                remapped[name] = state[f"vqvae/{name}"]
        self.load_state(remapped)


@dataclass(frozen=True)
class QuantizedPair:
    """Per-half dance-unit codes and the temporally concatenated latent."""

    codes_upper: np.ndarray    # (N',) int
    codes_lower: np.ndarray    # (N',) int
    latent: np.ndarray         # (C, 2N'): [upper | lower] on the time axis

    @property
    def units(self) -> int:
        return self.codes_upper.shape[0]


def encode_quantize(net: PoseVQVAE, relative: MotionSequence) -> QuantizedPair:
    """Relative sequence -> codes and quantized latent, halves concatenated in time."""
    upper, lower = split_upper_lower(relative.frames)
    xu = Tensor(half_to_channels(upper)[None])
    xd = Tensor(half_to_channels(lower)[None])
    feu = net.encode(xu, "upper")
    fed = net.encode(xd, "lower")
    cu = nearest_codes(feu.numpy()[0], net.codebook_upper.numpy())
    cd = nearest_codes(fed.numpy()[0], net.codebook_lower.numpy())
    latent = np.concatenate([net.codebook_upper.numpy()[cu].T,
                             net.codebook_lower.numpy()[cd].T], axis=1)
    return QuantizedPair(cu, cd, latent)


def decode_latent(net: PoseVQVAE, latent: np.ndarray, fps: int = 60) -> MotionSequence:
    """(C, 2N') latent -> relative motion sequence of 8*N' frames."""
    c, two_n = latent.shape
    if two_n % 2:
        raise ValueError(f"latent length {two_n} is not an [upper|lower] concatenation")
    half = two_n // 2
    fu = Tensor(latent[None, :, :half])
    fd = Tensor(latent[None, :, half:])
    channels = net.decode(fu, fd).numpy()[0]
    return MotionSequence(channels_to_frames(channels), fps)


def _corpus_channels(sequences: list[MotionSequence]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    uppers, lowers, targets = [], [], []
    for seq in sequences:
        rel, _ = to_relative(seq)
        upper, lower = split_upper_lower(rel.frames)
        uppers.append(half_to_channels(upper))
        lowers.append(half_to_channels(lower))
        targets.append(frames_to_channels(rel.frames))
    return np.stack(uppers), np.stack(lowers), np.stack(targets)


def train_vqvae(sequences: list[MotionSequence], epochs: int, net: PoseVQVAE,
                seed: int = 0, lr: float = 1e-3, batch_size: int = 8,
                commitment: float = 0.1, adam_betas: tuple = (0.9, 0.99),
                dead_code_epochs: int = 2, start_epoch: int = 0,
                optimizer: Adam | None = None) -> tuple[Adam, list[float]]:
    """Joint optimization of encoders, decoder, and both codebooks.

    Codebook rows unused for ``dead_code_epochs`` consecutive epochs are
    re-seeded to random encoder output columns. Returns the optimizer (for
    resumable state) and the per-epoch loss history.
    """
    xu_all, xd_all, target_all = _corpus_channels(sequences)
    n_items = xu_all.shape[0]
    opt = optimizer if optimizer is not None else Adam(
        net.named_parameters(), lr=lr, beta1=adam_betas[0], beta2=adam_betas[1])
    root = RandomStream(seed)
    history: list[float] = []
    k = net.codebook_size
    unused_upper = np.zeros(k, dtype=int)
    unused_lower = np.zeros(k, dtype=int)

    for epoch in range(start_epoch, start_epoch + epochs):
        estream = root.split(epoch)
        order = estream.permutation(n_items)
        epoch_loss = 0.0
        n_batches = 0
        used_u = np.zeros(k, dtype=bool)
        used_d = np.zeros(k, dtype=bool)
        sample_columns = {"upper": None, "lower": None}
        try:
            for lo in range(0, n_items, batch_size):
                idx = order[lo:lo + batch_size]
                xu = Tensor(xu_all[idx])
                xd = Tensor(xd_all[idx])
                target = Tensor(target_all[idx])
                with num.Graph() as g:
                    feu = net.encode(xu, "upper")
                    fed = net.encode(xd, "lower")
                    cu, fqu = quantize_latent(feu, net.codebook_upper)
                    cd, fqd = quantize_latent(fed, net.codebook_lower)
                    recon = net.decode(straight_through(feu, fqu), straight_through(fed, fqd))
                    f_e = num.concat([feu, fed], axis=2)
                    f_q = num.concat([fqu, fqd], axis=2)
                    loss = vqvae_loss(recon, target, f_e, f_q, commitment)
                    g.backward(loss)
                opt.step()
                opt.zero_grad()
                epoch_loss += loss.item()
                n_batches += 1
                used_u[np.unique(cu)] = True
                used_d[np.unique(cd)] = True
                sample_columns["upper"] = feu.numpy().transpose(0, 2, 1).reshape(-1, net.latent_channels)
                sample_columns["lower"] = fed.numpy().transpose(0, 2, 1).reshape(-1, net.latent_channels)
        except num.NumericError as exc:
            raise TrainingDiverged(f"stage-1 training diverged at epoch {epoch}: {exc}") from exc
        history.append(epoch_loss / max(n_batches, 1))

        unused_upper = np.where(used_u, 0, unused_upper + 1)
        unused_lower = np.where(used_d, 0, unused_lower + 1)
        reset_stream = estream.split("dead_code")
        for half, unused in (("upper", unused_upper), ("lower", unused_lower)):
            dead = np.flatnonzero(unused >= dead_code_epochs)
            pool = sample_columns[half]
            if dead.size and pool is not None and pool.shape[0]:
                picks = reset_stream.split(half).integers(0, pool.shape[0], dead.size)
                book = net.codebook(half)
                new = book.data.copy()
                new[dead] = pool[picks]
                book.data = new
                unused[dead] = 0
    return opt, history

"""Similarity-masked in-fill stage.

The similarity parameter picks round(N' * lambda) uniformly spaced dance-unit
slots per body half; those columns of the quantized latent are kept and the
rest are zeroed. A denoiser trained on noised masked latents fills the zeroed
slots, anchored to the codebook by a distance penalty, and the kept slots are
re-imposed (at the matching noise level) after every sampling substep, so the
output is exact on them by construction. Finally the filled columns are
snapped to their nearest codebook rows.
"""

from __future__ import annotations

import numpy as np

from . import numerics as num
from .diffusion import DenoiserNet, NoiseSchedule, ddim_sample, ddim_timesteps, forward_diffuse
from .errors import TrainingDiverged
from .numerics import RandomStream, Tensor
from .numerics.optim import SGD, StepDecay
from .vqvae import nearest_codes

__all__ = [
    "half_pattern",
    "make_mask",
    "expand_mask_to_frames",
    "select_features",
    "dpgd_loss",
    "project_codebook",
    "pregenerate",
    "train_dpgd",
]


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def half_pattern(lam: float, n_units: int) -> np.ndarray:
    """Per-half binary slot pattern: round(n_units * lambda) kept slots at
    indices floor(j * n_units / m)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"similarity parameter must lie in [0, 1], got {lam}")
    if n_units < 1:
        raise ValueError(f"need at least one unit slot, got {n_units}")
    m = _round_half_up(n_units * lam)
    pattern = np.zeros(n_units, dtype=np.float64)
    if m > 0:
        idx = (np.arange(m) * n_units) // m
        pattern[idx] = 1.0
    return pattern


def make_mask(lam: float, n_units: int) -> np.ndarray:
    """Mask over the 2*N' concatenated slots; both halves share the pattern."""
    pattern = half_pattern(lam, n_units)
    return np.concatenate([pattern, pattern])


def expand_mask_to_frames(pattern: np.ndarray, downsample: int = 8) -> np.ndarray:
    """Per-half slot pattern -> per-frame mask (each slot covers d frames)."""
    return np.repeat(np.asarray(pattern), downsample)


def select_features(latent: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the unselected columns of a (..., C, 2N') latent."""
    latent = np.asarray(latent)
    mask = np.asarray(mask, dtype=latent.dtype)
    if mask.shape[0] != latent.shape[-1]:
        raise ValueError(f"mask length {mask.shape[0]} != latent columns {latent.shape[-1]}")
    return latent * mask


def _split_books(mask: np.ndarray):
    n_units = mask.shape[0] // 2
    sel = mask > 0.5
    return n_units, sel


def _nearest_rows(latent_np: np.ndarray, book_upper: np.ndarray, book_lower: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column nearest codebook rows for a (B, C, 2N') block, upper columns
    against the upper book and lower columns against the lower book."""
    n_units = latent_np.shape[-1] // 2
    cu = nearest_codes(latent_np[:, :, :n_units], book_upper)
    cd = nearest_codes(latent_np[:, :, n_units:], book_lower)
    rows_u = book_upper[cu].transpose(0, 2, 1)
    rows_d = book_lower[cd].transpose(0, 2, 1)
    codes = np.concatenate([cu, cd], axis=-1)
    return np.concatenate([rows_u, rows_d], axis=-1), codes


def dpgd_loss(f_r: Tensor, f_q: np.ndarray, mask: np.ndarray,
              books: tuple[np.ndarray, np.ndarray], gamma: float = 0.1) -> Tensor:
    """Kept-slot reconstruction plus codebook anchoring of the filled slots.

    First term: mean squared error against the reference latent over selected
    columns. Second term: gamma times the mean (over unselected columns) of
    the squared distance to the nearest codebook row, upper/lower columns
    scored against their own frozen books. Empty regions contribute zero.
    """
    f_q = np.asarray(f_q, dtype=np.float64)
    if f_r.ndim == 2:
        f_r = num.reshape(f_r, (1, *f_r.shape))
    if f_q.ndim == 2:
        f_q = f_q[None]
    mask = np.asarray(mask, dtype=np.float64)
    n_sel = int(mask.sum())
    n_unsel = mask.shape[0] - n_sel
    batch, channels, _ = f_r.shape

    terms = []
    if n_sel:
        diff = num.apply_mask(num.sub(f_r, f_q), mask)
        terms.append(num.mul(num.tsum(num.mul(diff, diff)), 1.0 / (batch * channels * n_sel)))
    if n_unsel:
        rows, _ = _nearest_rows(f_r.numpy(), np.asarray(books[0], dtype=np.float64),
                                np.asarray(books[1], dtype=np.float64))
        diff = num.apply_mask(num.sub(f_r, rows), 1.0 - mask)
        terms.append(num.mul(num.tsum(num.mul(diff, diff)), gamma / (batch * n_unsel)))
    if not terms:
        return Tensor(0.0)
    return terms[0] if len(terms) == 1 else num.add(terms[0], terms[1])


def project_codebook(f_r: np.ndarray, books: tuple[np.ndarray, np.ndarray],
                     mask: np.ndarray) -> np.ndarray:
    """Snap unselected columns to their nearest codebook row; selected columns
    are returned untouched."""
    single = f_r.ndim == 2
    block = np.asarray(f_r, dtype=np.float64)
    if single:
        block = block[None]
    rows, _ = _nearest_rows(block, np.asarray(books[0], dtype=np.float64),
                            np.asarray(books[1], dtype=np.float64))
    keep = np.asarray(mask, dtype=np.float64)
    out = block * keep + rows * (1.0 - keep)
    return out[0] if single else out


def pregenerate(f_s: np.ndarray, mask: np.ndarray, net: DenoiserNet,
                schedule: NoiseSchedule, stream: RandomStream,
                steps: int = 10) -> np.ndarray:
    """In-fill the zeroed columns of a selected latent by DDIM sampling.

    The selected columns are overwritten after every substep with the
    selected latent noised to that substep's level (clean at the final step),
    so the output equals f_s exactly on them.
    """
    f_s = np.asarray(f_s, dtype=np.float64)
    single = f_s.ndim == 2
    block = f_s[None] if single else f_s
    sel = np.asarray(mask) > 0.5

    t_start = int(ddim_timesteps(schedule.timesteps, steps)[0])
    x_init = forward_diffuse(schedule, block, t_start,
                             stream.split("init").normal(block.shape))

    hook_stream = stream.split("reimpose")

    def reimpose(x, t_prev):
        if not sel.any():
            return x
        if t_prev == 0:
            noised = block
        else:
            noised = forward_diffuse(schedule, block, t_prev,
                                     hook_stream.split(t_prev).normal(block.shape))
        x = x.copy()
        x[:, :, sel] = noised[:, :, sel]
        return x

    out = ddim_sample(net, x_init, steps, schedule, step_hook=reimpose)
    return out[0] if single else out


def train_dpgd(latents: list[np.ndarray], schedule: NoiseSchedule, epochs: int,
               net: DenoiserNet, books: tuple[np.ndarray, np.ndarray],
               lambda_set=(0.0, 0.25, 0.5, 0.75, 1.0), gamma: float = 0.1,
               seed: int = 0, lr: float = 0.005, momentum: float = 0.9,
               lr_decay: float = 0.1, lr_decay_every: int = 50,
               batch_size: int = 8, start_epoch: int = 0,
               optimizer: SGD | None = None) -> tuple[SGD, list[float]]:
    """Teach the denoiser to rebuild full latents from noised masked ones.

    Per step: draw a similarity level for the batch, zero the unselected
    columns, diffuse to a random timestep, predict the clean latent, and score
    it against the full reference with dpgd_loss.
    """
    stacked = np.stack([np.asarray(x, dtype=np.float64) for x in latents])
    n_items = stacked.shape[0]
    lambda_set = tuple(float(v) for v in lambda_set)
    n_units = stacked.shape[-1] // 2
    opt = optimizer if optimizer is not None else SGD(net.named_parameters(), lr=lr, momentum=momentum)
    decay = StepDecay(lr, lr_decay, lr_decay_every)
    root = RandomStream(seed)
    history: list[float] = []

    for epoch in range(start_epoch, start_epoch + epochs):
        estream = root.split(epoch)
        opt.lr = decay.at(epoch)
        order = estream.permutation(n_items)
        epoch_loss, n_batches = 0.0, 0
        try:
            for b, lo in enumerate(range(0, n_items, batch_size)):
                bstream = estream.split(b)
                idx = order[lo:lo + batch_size]
                f_q = stacked[idx]
                lam = bstream.split("lam").choice(lambda_set)
                mask = make_mask(lam, n_units)
                f_s = select_features(f_q, mask)
                t = bstream.split("t").integers(1, schedule.timesteps + 1, f_q.shape[0])
                noise = bstream.split("noise").normal(f_q.shape)
                x_t = forward_diffuse(schedule, f_s, t, noise)
                with num.Graph() as g:
                    x0_hat = net(Tensor(x_t), t)
                    loss = dpgd_loss(x0_hat, f_q, mask, books, gamma)
                    g.backward(loss)
                opt.step()
                opt.zero_grad()
                epoch_loss += loss.item()
                n_batches += 1
        except num.NumericError as exc:
            raise TrainingDiverged(f"stage-2 training diverged at epoch {epoch}: {exc}") from exc
        history.append(epoch_loss / max(n_batches, 1))
    return opt, history

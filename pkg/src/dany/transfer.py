"""Condition-guided transfer stage and the end-to-end generation pipeline.

The denoiser here sees two optional condition streams: the lead dancer's
quantized latent, gated to the kept slots, and the pooled music features,
gated to the complementary slots. Training drops conditions at random so one
network serves all four condition arities; sampling composes the four
noise-space predictions with a strength knob, a joint-versus-independent
trade-off, and a per-slot weight that routes lead guidance to kept slots and
music guidance to the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as num
from .diffusion import (
    DenoiserNet,
    NoiseSchedule,
    ddim_sample,
    ddim_timesteps,
    forward_diffuse,
    predict_x0,
    x0_to_eps,
)
from .errors import TrainingDiverged
from .motion import MotionSequence, MusicFeatures, from_relative, to_relative, validate_similarity
from .numerics import RandomStream, Tensor
from .numerics.optim import SGD, StepDecay
from .pregen import make_mask, pregenerate, project_codebook, select_features
from .vqvae import DOWNSAMPLE, PoseVQVAE, decode_latent, encode_quantize, nearest_codes

__all__ = [
    "GuidanceParams",
    "DropoutSchedule",
    "pool_music",
    "mask_conditions",
    "dmtd_loss",
    "composed_eps",
    "train_dmtd",
    "GenerationResult",
    "generate_partner",
]


@dataclass(frozen=True)
class GuidanceParams:
    """Sampling knobs: strength >= 0 scales all guidance; joint_tradeoff in
    [0, 1] blends the joint two-condition branch against the per-slot
    independent branches."""

    strength: float = 9.0
    joint_tradeoff: float = 0.9

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError(f"guidance strength must be >= 0, got {self.strength}")
        if not 0.0 <= self.joint_tradeoff <= 1.0:
            raise ValueError(f"joint trade-off must lie in [0, 1], got {self.joint_tradeoff}")


@dataclass(frozen=True)
class DropoutSchedule:
    """Share of training batches with no / one / both conditions; the single-
    condition share splits evenly between lead-only and music-only."""

    uncond: float = 0.2
    single: float = 0.2
    both: float = 0.6

    def __post_init__(self):
        total = self.uncond + self.single + self.both
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"dropout shares must sum to 1, got {total}")

    def draw(self, stream: RandomStream) -> tuple[bool, bool]:
        """(use_lead, use_music) for one batch."""
        probs = [self.uncond, self.single / 2.0, self.single / 2.0, self.both]
        arity = stream.choice(["none", "lead", "music", "both"], p=probs)
        return arity in ("lead", "both"), arity in ("music", "both")


def pool_music(matrix: np.ndarray, downsample: int = DOWNSAMPLE) -> np.ndarray:
    """(D, N) music features -> (D, 2N'): mean over each d-frame window,
    duplicated across the two body-half slot groups."""
    matrix = np.asarray(matrix, dtype=np.float64)
    d, n = matrix.shape
    if n % downsample:
        raise ValueError(f"music length {n} not divisible by downsample {downsample}")
    pooled = matrix.reshape(d, n // downsample, downsample).mean(axis=2)
    return np.concatenate([pooled, pooled], axis=1)


def mask_conditions(f_l: np.ndarray, f_m: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lead gated to the kept slots, music to the complement; the supports
    are disjoint for every similarity level."""
    mask = np.asarray(mask, dtype=np.float64)
    return select_features(f_l, mask), select_features(f_m, 1.0 - mask)


def _as_batch(arr, shape) -> np.ndarray:
    """Promote (C, T) to (1, C, T) and broadcast the batch axis to match."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape[0] != shape[0]:
        arr = np.broadcast_to(arr, (shape[0], *arr.shape[1:]))
    return arr


def _region_mse(f_g: Tensor, target: np.ndarray, region: np.ndarray) -> Tensor:
    count = f_g.shape[0] * f_g.shape[1] * int(region.sum())
    diff = num.apply_mask(num.sub(f_g, target), region)
    return num.mul(num.tsum(num.mul(diff, diff)), 1.0 / count)


def dmtd_loss(f_g: Tensor, f_lead: np.ndarray, f_partner: np.ndarray,
              mask: np.ndarray, tau: float = 2.0) -> Tensor:
    """Kept slots pulled to the lead latent, the rest to the real partner
    latent with weight tau. Empty regions contribute zero."""
    if f_g.ndim == 2:
        f_g = num.reshape(f_g, (1, *f_g.shape))
    f_lead = _as_batch(f_lead, f_g.shape)
    f_partner = _as_batch(f_partner, f_g.shape)
    mask = np.asarray(mask, dtype=np.float64)
    terms = []
    if mask.sum():
        terms.append(_region_mse(f_g, f_lead, mask))
    if (1.0 - mask).sum():
        terms.append(num.mul(_region_mse(f_g, f_partner, 1.0 - mask), tau))
    if not terms:
        return Tensor(0.0)
    return terms[0] if len(terms) == 1 else num.add(terms[0], terms[1])


def composed_eps(net: DenoiserNet, x_t: np.ndarray, t: int, cond_lead: np.ndarray,
                 cond_music: np.ndarray, mask: np.ndarray, params: GuidanceParams,
                 schedule: NoiseSchedule) -> np.ndarray:
    """Blend the four condition-arity predictions in noise space.

    eps = eps_u + strength * ( chi * (eps_both - eps_u)
          + (1 - chi) * ( phi*(eps_lead - eps_u) + (1-phi)*(eps_music - eps_u) ) )

    phi is 1 on kept slots and 0 elsewhere, broadcast over channels, so the
    lead branch only steers the slots it is responsible for.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    cond_lead = _as_batch(cond_lead, x_t.shape)
    cond_music = _as_batch(cond_music, x_t.shape)

    def eps_of(conditions):
        return x0_to_eps(schedule, predict_x0(net, Tensor(x_t), t, conditions), x_t, t)

    eps_u = eps_of(None)
    if params.strength == 0.0:
        return eps_u
    eps_lm = eps_of({"lead": cond_lead, "music": cond_music})
    eps_l = eps_of({"lead": cond_lead})
    eps_m = eps_of({"music": cond_music})
    phi = np.asarray(mask, dtype=np.float64)[None, None, :]
    chi = params.joint_tradeoff
    independent = phi * (eps_l - eps_u) + (1.0 - phi) * (eps_m - eps_u)
    return eps_u + params.strength * (chi * (eps_lm - eps_u) + (1.0 - chi) * independent)


def train_dmtd(items: list[dict], schedule: NoiseSchedule, epochs: int, net: DenoiserNet,
               lambda_set=(0.0, 0.25, 0.5, 0.75, 1.0), tau: float = 2.0,
               dropout: DropoutSchedule | None = None, seed: int = 0,
               lr: float = 0.005, momentum: float = 0.9, lr_decay: float = 0.1,
               lr_decay_every: int = 50, batch_size: int = 8, start_epoch: int = 0,
               optimizer: SGD | None = None) -> tuple[SGD, list[float]]:
    """Classifier-free training of the transfer denoiser.

    Each item carries the lead latent ("lead"), pooled music ("music"), the
    real partner latent ("partner"), and per-similarity start latents
    ("start", a dict keyed by lambda, normally the stage-2 output for that
    lambda). Conditions are masked, then dropped per batch according to the
    dropout schedule; dropped conditions never enter the network, so their
    projection weights see exactly zero gradient.
    """
    dropout = dropout if dropout is not None else DropoutSchedule()
    lambda_set = tuple(float(v) for v in lambda_set)
    n_items = len(items)
    n_units = items[0]["lead"].shape[-1] // 2
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
                lam = bstream.split("lam").choice(lambda_set)
                mask = make_mask(lam, n_units)
                use_lead, use_music = dropout.draw(bstream.split("arity"))
                starts = np.stack([np.asarray(items[i]["start"][lam], dtype=np.float64) for i in idx])
                leads = np.stack([np.asarray(items[i]["lead"], dtype=np.float64) for i in idx])
                partners = np.stack([np.asarray(items[i]["partner"], dtype=np.float64) for i in idx])
                t = bstream.split("t").integers(1, schedule.timesteps + 1, starts.shape[0])
                noise = bstream.split("noise").normal(starts.shape)
                x_t = forward_diffuse(schedule, starts, t, noise)
                conditions = {}
                if use_lead:
                    conditions["lead"] = select_features(leads, mask)
                if use_music:
                    music = np.stack([np.asarray(items[i]["music"], dtype=np.float64) for i in idx])
                    conditions["music"] = select_features(music, 1.0 - mask)
                with num.Graph() as g:
                    f_g = net(Tensor(x_t), t, conditions or None)
                    loss = dmtd_loss(f_g, leads, partners, mask, tau)
                    g.backward(loss)
                opt.step()
                opt.zero_grad()
                epoch_loss += loss.item()
                n_batches += 1
        except num.NumericError as exc:
            raise TrainingDiverged(f"stage-3 training diverged at epoch {epoch}: {exc}") from exc
        history.append(epoch_loss / max(n_batches, 1))
    return opt, history


@dataclass(frozen=True)
class GenerationResult:
    motion: MotionSequence
    latent: np.ndarray = field(repr=False)      # (C, 2N') final generated latent
    pregen_latent: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)        # (2N',) kept-slot indicator
    lead_codes: np.ndarray = field(repr=False)  # (2N',) lead dance-unit indices
    out_codes: np.ndarray = field(repr=False)   # (2N',) generated dance-unit indices

    @property
    def kept_code_match(self) -> float:
        """Fraction of kept slots whose generated code equals the lead's."""
        sel = self.mask > 0.5
        if not sel.any():
            return 1.0
        return float((self.out_codes[sel] == self.lead_codes[sel]).mean())


def generate_partner(vqvae: PoseVQVAE, pregen_net: DenoiserNet, transfer_net: DenoiserNet,
                     schedule: NoiseSchedule, lead: MotionSequence, music: MusicFeatures,
                     lam: float, params: GuidanceParams | None = None, steps: int = 50,
                     pregen_steps: int = 10, seed: int = 0, snap_to_codebook: bool = True,
                     latent_scale: float = 1.0) -> GenerationResult:
    """Full pipeline: lead codes -> masked selection -> in-fill -> guided
    transfer -> decode, with the lead's root trajectory re-applied.

    ``latent_scale`` must be the factor the diffusion stages were trained
    with (latents divided by it bring their spread near the unit-variance
    noise). Codebook snapping happens in unscaled space so snapped columns
    stay bit-equal to codebook rows. Deterministic given the seed.
    """
    lam = validate_similarity(lam)
    params = params if params is not None else GuidanceParams()
    if lead.num_frames % DOWNSAMPLE:
        raise ValueError(
            f"lead length {lead.num_frames} not divisible by the downsample rate {DOWNSAMPLE}")
    if music.num_frames != lead.num_frames:
        raise ValueError(f"music frames {music.num_frames} != lead frames {lead.num_frames}")
    if latent_scale <= 0:
        raise ValueError(f"latent scale must be positive, got {latent_scale}")
    stream = RandomStream(seed)

    rel, trajectory = to_relative(lead)
    quant = encode_quantize(vqvae, rel)
    f_l = quant.latent
    lead_codes = np.concatenate([quant.codes_upper, quant.codes_lower])
    n_units = quant.units
    mask = make_mask(lam, n_units)
    books = (vqvae.codebook_upper.numpy(), vqvae.codebook_lower.numpy())

    f_l_scaled = f_l / latent_scale
    f_s = select_features(f_l_scaled, mask)
    f_r_scaled = pregenerate(f_s, mask, pregen_net, schedule, stream.split("pregen"),
                             steps=pregen_steps)
    f_r = project_codebook(f_r_scaled * latent_scale, books, mask)

    cond_lead, cond_music = mask_conditions(f_l_scaled, pool_music(music.matrix), mask)
    t_start = int(ddim_timesteps(schedule.timesteps, steps)[0])
    x_init = forward_diffuse(schedule, (f_r / latent_scale)[None], t_start,
                             stream.split("transfer_init").normal((1, *f_r.shape)))

    def guidance(x, t):
        return composed_eps(transfer_net, x, t, cond_lead[None], cond_music[None],
                            mask, params, schedule)

    f_g = ddim_sample(transfer_net, x_init, steps, schedule, guidance_fn=guidance)[0]
    f_g = f_g * latent_scale
    if snap_to_codebook:
        f_g = project_codebook(f_g, books, mask)

    out_codes = np.concatenate([
        nearest_codes(f_g[:, :n_units], books[0]),
        nearest_codes(f_g[:, n_units:], books[1]),
    ])
    rel_out = decode_latent(vqvae, f_g, fps=lead.fps)
    motion = from_relative(rel_out, trajectory)
    return GenerationResult(motion, f_g, f_r, mask, lead_codes, out_codes)

"""Deterministic DDIM sampling over a uniform integer subsample of [1, T]."""

from __future__ import annotations

import numpy as np

from ..numerics import RandomStream, Tensor
from .denoiser import DenoiserNet, predict_x0
from .schedule import NoiseSchedule, eps_to_x0, x0_to_eps

__all__ = ["ddim_timesteps", "ddim_sample"]


def ddim_timesteps(total: int, steps: int) -> np.ndarray:
    """Descending substep grid: round(i * T / steps) for i = steps..1."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if steps > total:
        raise ValueError(f"steps {steps} exceeds schedule length {total}")
    grid = np.floor(np.arange(1, steps + 1) * (total / steps) + 0.5).astype(np.int64)
    return grid[::-1].copy()


def ddim_sample(net: DenoiserNet, x_start, steps: int, schedule: NoiseSchedule,
                eta: float = 0.0, conditions: dict | None = None,
                guidance_fn=None, step_hook=None,
                stream: RandomStream | None = None) -> np.ndarray:
    """Run the reverse process from x_T down to clean data.

    ``x_start`` is either the initial noisy state or a shape tuple, in which
    case standard-normal noise is drawn from ``stream``. ``guidance_fn(x, t)``
    replaces the network's noise-space prediction when given; its output must
    keep the state's shape. ``step_hook(x, t_prev)`` can rewrite the state
    after every substep (for in-filling). With eta=0 the whole trajectory is a
    deterministic function of (x_start, net, steps).
    """
    if isinstance(x_start, tuple):
        if stream is None:
            raise ValueError("sampling from a shape requires a random stream")
        x = stream.normal(x_start)
    else:
        x = np.array(x_start, dtype=np.float64)
    if eta and stream is None:
        raise ValueError("eta > 0 requires a random stream")

    ts = ddim_timesteps(schedule.timesteps, steps)
    for i, t in enumerate(ts):
        t = int(t)
        t_prev = int(ts[i + 1]) if i + 1 < len(ts) else 0
        if guidance_fn is not None:
            eps = np.asarray(guidance_fn(x, t))
            if eps.shape != x.shape:
                raise ValueError(f"guidance changed shape {x.shape} -> {eps.shape}")
        else:
            x0_hat = predict_x0(net, Tensor(x), t, conditions)
            eps = x0_to_eps(schedule, x0_hat, x, t)
        x0_hat = eps_to_x0(schedule, eps, x, t)
        ab_prev = schedule.alpha_bar(t_prev)
        if eta:
            ab_t = schedule.alpha_bar(t)
            sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_prev)
            sigma = min(sigma, np.sqrt(1.0 - ab_prev))
        else:
            sigma = 0.0
        x = np.sqrt(ab_prev) * x0_hat + np.sqrt(max(1.0 - ab_prev - sigma ** 2, 0.0)) * eps
        if sigma:
            x = x + sigma * stream.normal(x.shape)
        if step_hook is not None:
            x = step_hook(x, t_prev)
    return x

"""Noise schedule and the closed-form forward/reverse diffusion statistics.

Timesteps are 1-based: t in [1, T]. alpha_bar(t) is the running product of
(1 - beta_s) for s <= t, with alpha_bar(0) = 1 so the final sampling jump
lands on clean data.
"""

from __future__ import annotations

import numpy as np

__all__ = ["NoiseSchedule", "forward_diffuse", "x0_to_eps", "eps_to_x0"]


class NoiseSchedule:
    def __init__(self, betas):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError(f"beta table must be a non-empty vector, got shape {betas.shape}")
        if not (betas > 0).all() or not (betas < 1).all():
            raise ValueError("beta values must lie in (0, 1)")
        if (np.diff(betas) < 0).any():
            raise ValueError("beta values must be non-decreasing")
        self.betas = betas
        # index 0 holds alpha_bar(0) = 1
        self._alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if (np.diff(self._alpha_bar) >= 0).any():
            raise ValueError("alpha_bar must be strictly decreasing")

    @classmethod
    def linear(cls, timesteps: int = 1000, start: float = 1e-4, end: float = 0.02) -> "NoiseSchedule":
        return cls(np.linspace(start, end, timesteps))

    @property
    def timesteps(self) -> int:
        return self.betas.size

    def _check_t(self, t, allow_zero: bool = False):
        t = np.asarray(t, dtype=np.int64)
        lo = 0 if allow_zero else 1
        if (t < lo).any() or (t > self.timesteps).any():
            raise ValueError(f"timestep {t} outside [{lo}, {self.timesteps}]")
        return t

    def beta(self, t):
        t = self._check_t(t)
        return self.betas[t - 1]

    def alpha_bar(self, t):
        return self._alpha_bar[self._check_t(t, allow_zero=True)]

    def sqrt_alpha_bar(self, t):
        return np.sqrt(self.alpha_bar(t))

    def sqrt_one_minus_alpha_bar(self, t):
        return np.sqrt(1.0 - self.alpha_bar(t))

    def posterior_mean(self, x0, x_t, t):
        """Mean of the reverse-step Gaussian given x0 and x_t."""
        t = self._check_t(t)
        ab_t = self.alpha_bar(t)
        ab_prev = self.alpha_bar(t - 1)
        beta_t = self.beta(t)
        alpha_t = 1.0 - beta_t
        c0 = np.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
        ct = np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
        return _bcast(c0, np.ndim(x0)) * x0 + _bcast(ct, np.ndim(x_t)) * x_t

    def posterior_variance(self, t):
        """Variance of the reverse-step Gaussian."""
        t = self._check_t(t)
        ab_t = self.alpha_bar(t)
        ab_prev = self.alpha_bar(t - 1)
        return (1.0 - ab_prev) / (1.0 - ab_t) * self.beta(t)


def _bcast(coeff, ndim: int):
    """Broadcast per-item coefficients over trailing data axes."""
    coeff = np.asarray(coeff, dtype=np.float64)
    if coeff.ndim == 0:
        return coeff
    return coeff.reshape(coeff.shape + (1,) * (ndim - coeff.ndim))


def forward_diffuse(schedule: NoiseSchedule, x0, t, noise):
    """Closed form of iterating the per-step noising kernel:
    x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise."""
    x0 = np.asarray(x0)
    noise = np.asarray(noise)
    if noise.shape != x0.shape:
        raise ValueError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
    schedule._check_t(t)
    a = _bcast(schedule.sqrt_alpha_bar(t), x0.ndim)
    b = _bcast(schedule.sqrt_one_minus_alpha_bar(t), x0.ndim)
    return a * x0 + b * noise


def x0_to_eps(schedule: NoiseSchedule, x0_hat, x_t, t):
    """Noise implied by a clean-data prediction at (x_t, t)."""
    x0_hat = np.asarray(x0_hat)
    x_t = np.asarray(x_t)
    a = _bcast(schedule.sqrt_alpha_bar(t), x_t.ndim)
    b = _bcast(schedule.sqrt_one_minus_alpha_bar(t), x_t.ndim)
    return (x_t - a * x0_hat) / b


def eps_to_x0(schedule: NoiseSchedule, eps, x_t, t):
    """Clean-data estimate implied by a noise prediction at (x_t, t)."""
    eps = np.asarray(eps)
    x_t = np.asarray(x_t)
    a = _bcast(schedule.sqrt_alpha_bar(t), x_t.ndim)
    b = _bcast(schedule.sqrt_one_minus_alpha_bar(t), x_t.ndim)
    return (x_t - b * eps) / a

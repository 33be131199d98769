"""Diffusion machinery shared by the in-fill and transfer stages."""

from .denoiser import DenoiserNet, predict_x0
from .sampling import ddim_sample, ddim_timesteps
from .schedule import NoiseSchedule, eps_to_x0, forward_diffuse, x0_to_eps

__all__ = [
    "NoiseSchedule",
    "forward_diffuse",
    "x0_to_eps",
    "eps_to_x0",
    "DenoiserNet",
    "predict_x0",
    "ddim_sample",
    "ddim_timesteps",
]

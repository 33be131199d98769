"""Configuration: full-scale defaults with a "small" profile for CI-speed
runs, a JSON config file on top, and per-key --set overrides on top of that."""

from __future__ import annotations

import copy
import json
from pathlib import Path

__all__ = ["DEFAULT_CONFIG", "SMALL_PROFILE", "load_config", "merge_config"]

DEFAULT_CONFIG = {
    "precision": "float32",
    "data": {
        "num_pairs": 340,
        "frames": 256,
        "fps": 60,
        "beat_period": 24,
        "amplitude": 0.25,
        "downsample": 8,
    },
    "diffusion": {
        "timesteps": 1000,
        "beta_start": 1e-4,
        "beta_end": 0.02,
        "model_width": 128,
        "attention_heads": 4,
    },
    "vqvae": {
        "codebook_size": 512,
        "latent_channels": 512,
        "width": 128,
        "epochs": 500,
        "batch_size": 32,
        "lr": 3e-5,
        "adam_beta1": 0.9,
        "adam_beta2": 0.99,
        "commitment": 0.1,
        "dead_code_epochs": 2,
    },
    "dpgd": {
        "epochs": 200,
        "batch_size": 64,
        "optimizer": "sgd",
        "lr": 0.005,
        "momentum": 0.9,
        "lr_decay": 0.1,
        "lr_decay_every": 50,
        "codebook_weight": 0.1,
        "sample_steps": 10,
        "lambda_set": [0.0, 0.25, 0.5, 0.75, 1.0],
    },
    "dmtd": {
        "epochs": 200,
        "batch_size": 64,
        "optimizer": "sgd",
        "lr": 0.005,
        "momentum": 0.9,
        "lr_decay": 0.1,
        "lr_decay_every": 50,
        "tradeoff": 2.0,
        # batch shares for condition dropout; the single share splits evenly
        # between lead-only and music-only
        "dropout_uncond": 0.2,
        "dropout_single": 0.2,
        "dropout_both": 0.6,
        "sample_steps": 50,
        "guidance_strength": 9.0,
        "joint_tradeoff": 0.9,
    },
}

# Desk-scale profile: small nets, short sequences, tiny corpus. The diffusion
# stages switch to Adam here; at a few hundred optimizer steps the full-scale
# SGD settings stay underfit.
SMALL_PROFILE = {
    "data": {"num_pairs": 8, "frames": 64},
    "diffusion": {"model_width": 64},
    "vqvae": {
        "codebook_size": 64,
        "latent_channels": 64,
        "width": 64,
        "batch_size": 4,
        "lr": 2e-3,
    },
    "dpgd": {"epochs": 1000, "batch_size": 2, "optimizer": "adam", "lr": 2e-3,
             "lr_decay_every": 400},
    # the full-scale guidance strength over-amplifies the small nets' branch
    # disagreements; 1.5 keeps kept-slot codes intact at this scale
    "dmtd": {"epochs": 1000, "batch_size": 2, "optimizer": "adam", "lr": 2e-3,
             "lr_decay_every": 400, "guidance_strength": 1.5},
}


def merge_config(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_set(expr: str) -> tuple[list[str], object]:
    if "=" not in expr:
        raise ValueError(f"--set expects key=value, got {expr!r}")
    key, raw = expr.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def load_config(path: str | None = None, profile: str = "default",
                overrides: list[str] | None = None) -> dict:
    """Layered config: defaults, then profile, then file, then --set pairs."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if profile == "small":
        cfg = merge_config(cfg, SMALL_PROFILE)
    elif profile != "default":
        raise ValueError(f"unknown profile {profile!r}; expected 'default' or 'small'")
    if path:
        cfg = merge_config(cfg, json.loads(Path(path).read_text(encoding="utf-8")))
    for expr in overrides or ():
        keys, value = _parse_set(expr)
        node = cfg
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return cfg

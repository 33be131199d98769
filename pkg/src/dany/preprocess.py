"""Sequence cleanup: sliding-window outlier removal, degree-1 in-filling,
and moving-average smoothing, applied per joint-coordinate channel."""

from __future__ import annotations

import numpy as np

from .motion import MotionSequence

__all__ = ["flag_outliers", "fill_missing", "moving_average", "clean_sequence"]


def flag_outliers(values: np.ndarray, window: int = 11, zmax: float = 3.0) -> np.ndarray:
    """Mark samples whose z-score inside a centered sliding window exceeds zmax.

    ``values`` is (T,) or (T, C); windows are truncated at the boundaries.
    """
    if window < 3:
        raise ValueError(f"window must be >= 3, got {window}")
    if zmax <= 0:
        raise ValueError(f"zmax must be positive, got {zmax}")
    x = np.asarray(values, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    t_total = x.shape[0]
    half = window // 2
    mask = np.zeros(x.shape, dtype=bool)
    for t in range(t_total):
        lo = max(0, t - half)
        hi = min(t_total, t + half + 1)
        win = x[lo:hi]
        mu = win.mean(axis=0)
        sd = win.std(axis=0)
        ok = sd > 0
        z = np.zeros(x.shape[1])
        z[ok] = np.abs(x[t, ok] - mu[ok]) / sd[ok]
        mask[t] = z > zmax
    return mask[:, 0] if squeeze else mask


def fill_missing(values: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Replace masked samples by linear interpolation between the nearest
    valid neighbors; runs at either end take the nearest valid value."""
    x = np.asarray(values, dtype=np.float64).copy()
    missing = np.asarray(missing, dtype=bool)
    if missing.shape != x.shape:
        raise ValueError(f"mask shape {missing.shape} does not match values {x.shape}")
    valid = np.flatnonzero(~missing)
    if valid.size == 0:
        raise ValueError("channel has no valid samples to interpolate from")
    gaps = np.flatnonzero(missing)
    if gaps.size:
        x[gaps] = np.interp(gaps, valid, x[valid])
    return x


def moving_average(values: np.ndarray, radius: int) -> np.ndarray:
    """Centered moving average of window 2*radius+1, truncated at the edges."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return np.asarray(values, dtype=np.float64).copy()
    x = np.asarray(values, dtype=np.float64)
    t_total = x.shape[0]
    cumsum = np.cumsum(x, axis=0)
    zero = np.zeros((1, *x.shape[1:]))
    cumsum = np.concatenate([zero, cumsum], axis=0)
    lo = np.maximum(np.arange(t_total) - radius, 0)
    hi = np.minimum(np.arange(t_total) + radius + 1, t_total)
    counts = (hi - lo).reshape(-1, *([1] * (x.ndim - 1)))
    return (cumsum[hi] - cumsum[lo]) / counts


def clean_sequence(seq: MotionSequence, window: int = 11, zmax: float = 3.0,
                   smooth_radius: int = 2) -> MotionSequence:
    """Outlier removal + degree-1 in-fill + smoothing on every channel."""
    n = seq.num_frames
    channels = seq.frames.reshape(n, -1)
    outliers = flag_outliers(channels, window=window, zmax=zmax)
    filled = np.empty_like(channels)
    for c in range(channels.shape[1]):
        col = channels[:, c]
        bad = outliers[:, c]
        filled[:, c] = fill_missing(col, bad) if bad.any() else col
    smoothed = moving_average(filled, smooth_radius)
    return MotionSequence(smoothed.reshape(seq.frames.shape), seq.fps)

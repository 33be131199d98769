"""Evaluation metrics for generated motion.

Sequences are summarized by raw kinematic statistics: per-frame pelvis-relative
joint positions plus their first and second time differences (216 dims). No
learned embedder is involved, so distribution distances computed here are
comparable only within this package.
"""

from __future__ import annotations

import numpy as np

from .motion import PELVIS, MotionSequence
from .pregen import expand_mask_to_frames

__all__ = [
    "motion_features",
    "sequence_feature",
    "fid",
    "mfid",
    "gendiv",
    "gendiv_features",
    "dance_beats",
    "beat_align",
    "mpjpe",
]

FEATURE_DIM = 216


def _first_difference(x: np.ndarray) -> np.ndarray:
    """Central differences inside, one-sided at the ends."""
    return np.gradient(x, axis=0)


def _second_difference(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    out = np.zeros_like(x)
    if n < 3:
        return out
    out[1:-1] = x[2:] - 2.0 * x[1:-1] + x[:-2]
    out[0] = x[2] - 2.0 * x[1] + x[0]
    out[-1] = x[-1] - 2.0 * x[-2] + x[-3]
    return out


def motion_features(frames: np.ndarray) -> np.ndarray:
    """(N, 24, 3) frames -> (N, 216) per-frame kinematic features."""
    frames = np.asarray(frames, dtype=np.float64)
    rel = frames - frames[:, PELVIS:PELVIS + 1, :]
    flat = rel.reshape(frames.shape[0], -1)
    return np.concatenate([flat, _first_difference(flat), _second_difference(flat)], axis=1)


def sequence_feature(seq: MotionSequence | np.ndarray) -> np.ndarray:
    """Sequence-level descriptor: per-frame features averaged over time."""
    frames = seq.frames if isinstance(seq, MotionSequence) else seq
    return motion_features(frames).mean(axis=0)


def _sqrt_trace_of_product(sigma_a: np.ndarray, sigma_b: np.ndarray) -> float:
    """trace((Sigma_a Sigma_b)^(1/2)) via eigen-decomposition of the
    symmetrized product sqrt(Sigma_a) Sigma_b sqrt(Sigma_a)."""
    vals_a, vecs_a = np.linalg.eigh(sigma_a)
    root_a = (vecs_a * np.sqrt(np.clip(vals_a, 0.0, None))) @ vecs_a.T
    sym = root_a @ sigma_b @ root_a
    vals = np.linalg.eigvalsh(sym)
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def fid(features_a: np.ndarray, features_b: np.ndarray, regularizer: float = 1e-6) -> float:
    """Frechet distance between the Gaussian fits of two feature sets.

    ||mu_a - mu_b||^2 + tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^(1/2)),
    with ``regularizer`` added to the covariance diagonals.
    """
    a = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError(f"need at least 2 samples per set, got {a.shape[0]} and {b.shape[0]}")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    eye = np.eye(a.shape[1]) * regularizer
    sigma_a = np.cov(a, rowvar=False) + eye
    sigma_b = np.cov(b, rowvar=False) + eye
    mean_term = float(((mu_a - mu_b) ** 2).sum())
    trace_term = float(np.trace(sigma_a) + np.trace(sigma_b)) - 2.0 * _sqrt_trace_of_product(sigma_a, sigma_b)
    return max(mean_term + trace_term, 0.0)


def mfid(generated: MotionSequence, lead: MotionSequence, partner: MotionSequence,
         pattern: np.ndarray, downsample: int = 8) -> float:
    """Average of two Frechet distances: generated-vs-lead on the kept frames
    and generated-vs-partner on the rest.

    ``pattern`` is the per-half slot pattern; each slot covers ``downsample``
    frames. Features are computed on each extracted frame subset, so splicing
    the ground truths reproduces a zero score. An empty side is dropped; both
    sides empty is an error.
    """
    frame_mask = expand_mask_to_frames(np.asarray(pattern), downsample).astype(bool)
    n = generated.num_frames
    if frame_mask.shape[0] != n:
        raise ValueError(f"mask covers {frame_mask.shape[0]} frames, sequences have {n}")
    if lead.num_frames != n or partner.num_frames != n:
        raise ValueError("mfid requires equal-length sequences")
    terms = []
    if frame_mask.any():
        terms.append(fid(motion_features(generated.frames[frame_mask]),
                         motion_features(lead.frames[frame_mask])))
    if (~frame_mask).any():
        terms.append(fid(motion_features(generated.frames[~frame_mask]),
                         motion_features(partner.frames[~frame_mask])))
    if not terms:
        raise ValueError("both frame sets are empty")
    return float(np.mean(terms))


def gendiv_features(features: np.ndarray) -> float:
    """Mean pairwise Euclidean distance over all unordered pairs of rows."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    m = feats.shape[0]
    if m < 2:
        raise ValueError(f"diversity needs at least 2 items, got {m}")
    total, count = 0.0, 0
    for i in range(m):
        diffs = feats[i + 1:] - feats[i]
        total += np.sqrt((diffs ** 2).sum(axis=1)).sum()
        count += diffs.shape[0]
    return total / count


def gendiv(sequences: list[MotionSequence]) -> float:
    """Variety of a generation batch: mean pairwise distance between
    sequence-level features."""
    if len(sequences) < 2:
        raise ValueError(f"diversity needs at least 2 sequences, got {len(sequences)}")
    return gendiv_features(np.stack([sequence_feature(s) for s in sequences]))


def dance_beats(seq: MotionSequence) -> np.ndarray:
    """Frames where the mean joint speed dips below both neighbors
    (single-neighbor comparison at the sequence ends)."""
    vel = np.gradient(seq.frames, axis=0)
    speed = np.sqrt((vel ** 2).sum(axis=2)).mean(axis=1)
    n = speed.shape[0]
    if n < 2:
        return np.array([], dtype=np.int64)
    is_min = np.zeros(n, dtype=bool)
    is_min[1:-1] = (speed[1:-1] < speed[:-2]) & (speed[1:-1] < speed[2:])
    is_min[0] = speed[0] < speed[1]
    is_min[-1] = speed[-1] < speed[-2]
    return np.flatnonzero(is_min)


def beat_align(dance: MotionSequence, music_beats: np.ndarray, sigma: float = 3.0) -> float:
    """Mean Gaussian proximity of each music beat to its nearest dance beat:
    mean_b exp(-min_d (t_d - t_b)^2 / (2 sigma^2)). No dance beats -> 0."""
    music_beats = np.asarray(music_beats, dtype=np.float64).reshape(-1)
    if music_beats.size == 0:
        raise ValueError("no music beats")
    moves = dance_beats(dance).astype(np.float64)
    if moves.size == 0:
        return 0.0
    d2 = (music_beats[:, None] - moves[None, :]) ** 2
    return float(np.exp(-d2.min(axis=1) / (2.0 * sigma ** 2)).mean())


def mpjpe(a: np.ndarray | MotionSequence, b: np.ndarray | MotionSequence) -> float:
    """Mean Euclidean joint distance over frames and joints."""
    fa = a.frames if isinstance(a, MotionSequence) else np.asarray(a, dtype=np.float64)
    fb = b.frames if isinstance(b, MotionSequence) else np.asarray(b, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ValueError(f"shapes differ: {fa.shape} vs {fb.shape}")
    return float(np.sqrt(((fa - fb) ** 2).sum(axis=-1)).mean())

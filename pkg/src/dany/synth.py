"""Synthetic lead/partner corpus.

Lead dancers are rest-pose skeletons whose joints oscillate as sums of 2-4
sinusoids phase-locked to a beat grid; the partner repeats the lead under a
per-beat-segment transform drawn from {identity, left-right mirror,
quarter-period phase shift, 0.7x amplitude scale}. Music channels are a
deterministic sinusoid bank, with an impulse train on the beat channel
aligned to the same grid. Everything is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .motion import (
    BEAT_CHANNEL,
    CHROMA,
    LEFT_RIGHT_SWAP,
    MEL,
    MUSIC_DIM,
    ONSET_FLAG,
    ONSET_STRENGTH,
    PELVIS,
    TEMPOGRAM,
    LeadPartnerPair,
    MotionSequence,
    MusicFeatures,
)
from .numerics import RandomStream

__all__ = ["SynthConfig", "REST_POSE", "synth_corpus", "beat_grid"]

# Rest pose, pelvis at origin, roughly one skeleton unit tall.
REST_POSE = np.array([
    [0.00, 0.00, 0.00],    # pelvis
    [0.09, 0.00, -0.06],   # left_hip
    [-0.09, 0.00, -0.06],  # right_hip
    [0.00, 0.01, 0.11],    # spine1
    [0.10, 0.01, -0.46],   # left_knee
    [-0.10, 0.01, -0.46],  # right_knee
    [0.00, 0.02, 0.24],    # spine2
    [0.11, 0.03, -0.86],   # left_ankle
    [-0.11, 0.03, -0.86],  # right_ankle
    [0.00, 0.02, 0.31],    # spine3
    [0.12, -0.09, -0.92],  # left_foot
    [-0.12, -0.09, -0.92], # right_foot
    [0.00, 0.00, 0.43],    # neck
    [0.07, 0.01, 0.39],    # left_collar
    [-0.07, 0.01, 0.39],   # right_collar
    [0.00, 0.03, 0.53],    # head
    [0.17, 0.01, 0.41],    # left_shoulder
    [-0.17, 0.01, 0.41],   # right_shoulder
    [0.42, 0.02, 0.41],    # left_elbow
    [-0.42, 0.02, 0.41],   # right_elbow
    [0.67, 0.03, 0.41],    # left_wrist
    [-0.67, 0.03, 0.41],   # right_wrist
    [0.76, 0.03, 0.41],    # left_hand
    [-0.76, 0.03, 0.41],   # right_hand
])

_HARMONICS = (0.5, 1.0, 2.0)
_PHASES = (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi)
_SEGMENT_OPS = ("identity", "mirror", "phase_shift", "amp_scale")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_pairs: int = 340
    n_frames: int = 256
    fps: int = 60
    beat_period: int = 24
    amplitude: float = 0.25
    downsample: int = 8


def beat_grid(n_frames: int, beat_period: int) -> np.ndarray:
    """Beat frame indices: every beat_period frames starting at 0."""
    return np.arange(0, n_frames, beat_period)


def _lead_frames(stream: RandomStream, cfg: SynthConfig) -> np.ndarray:
    t = np.arange(cfg.n_frames, dtype=np.float64)
    osc = np.zeros((cfg.n_frames, 24, 3))
    for j in range(24):
        for c in range(3):
            s = stream.split(j * 3 + c)
            n_sin = int(s.integers(2, 5))
            budget = cfg.amplitude * s.uniform(0.3, 1.0)
            weights = s.uniform(0.2, 1.0, n_sin)
            amps = budget * weights / weights.sum()
            for i in range(n_sin):
                k = _HARMONICS[int(s.integers(0, len(_HARMONICS)))]
                phase = _PHASES[int(s.integers(0, len(_PHASES)))]
                osc[:, j, c] += amps[i] * np.sin(2.0 * np.pi * k * t / cfg.beat_period + phase)
    traj_stream = stream.split("trajectory")
    traj = np.zeros((cfg.n_frames, 3))
    for c in range(3):
        s = traj_stream.split(c)
        k = _HARMONICS[int(s.integers(0, len(_HARMONICS)))]
        phase = _PHASES[int(s.integers(0, len(_PHASES)))]
        traj[:, c] = cfg.amplitude * s.uniform(0.2, 1.0) * np.sin(
            2.0 * np.pi * k * t / (4.0 * cfg.beat_period) + phase)
    return REST_POSE[None, :, :] + osc + traj[:, None, :]


def _apply_segment_op(op: str, lead: np.ndarray, lo: int, hi: int, beat_period: int) -> np.ndarray:
    segment = lead[lo:hi]
    if op == "identity":
        return segment.copy()
    pelvis = segment[:, PELVIS:PELVIS + 1, :]
    if op == "mirror":
        rel = segment - pelvis
        rel = rel[:, LEFT_RIGHT_SWAP, :]
        rel[:, :, 0] *= -1.0
        return pelvis + rel
    if op == "phase_shift":
        shift = beat_period // 4
        idx = np.clip(np.arange(lo, hi) - shift, 0, lead.shape[0] - 1)
        return lead[idx].copy()
    if op == "amp_scale":
        return pelvis + 0.7 * (segment - pelvis)
    raise ValueError(f"unknown segment op {op!r}")


def _partner_frames(stream: RandomStream, lead: np.ndarray, cfg: SynthConfig) -> tuple[np.ndarray, list[str]]:
    n = lead.shape[0]
    bounds = list(beat_grid(n, cfg.beat_period)) + [n]
    partner = np.empty_like(lead)
    ops = []
    for i in range(len(bounds) - 1):
        lo, hi = bounds[i], bounds[i + 1]
        if lo >= hi:
            continue
        op = stream.split(i).choice(_SEGMENT_OPS)
        ops.append(op)
        partner[lo:hi] = _apply_segment_op(op, lead, lo, hi, cfg.beat_period)
    return partner, ops


def _music_matrix(stream: RandomStream, cfg: SynthConfig) -> np.ndarray:
    n = cfg.n_frames
    p = float(cfg.beat_period)
    t = np.arange(n, dtype=np.float64)
    m = np.zeros((MUSIC_DIM, n))
    phase = stream.uniform(0.0, 2.0 * np.pi)

    mel_idx = np.arange(MEL.start, MEL.stop)
    m[MEL] = 0.5 * np.sin(2.0 * np.pi * (mel_idx[:, None] + 1) * t[None, :] / (4.0 * p)
                          + 0.7 * mel_idx[:, None] + phase)
    chroma_idx = np.arange(CHROMA.stop - CHROMA.start)
    m[CHROMA] = 0.5 + 0.5 * np.sin(2.0 * np.pi * t[None, :] / p
                                   + 2.0 * np.pi * chroma_idx[:, None] / 12.0 + phase)

    beats = beat_grid(n, cfg.beat_period)
    dist = np.abs(t[:, None] - beats[None, :]).min(axis=1)
    strength = np.exp(-0.5 * (dist / (p / 8.0)) ** 2)
    m[ONSET_STRENGTH] = strength
    m[ONSET_FLAG] = (strength > 0.5).astype(np.float64)

    tempo_idx = np.arange(TEMPOGRAM.stop - TEMPOGRAM.start)
    m[TEMPOGRAM] = 0.3 * np.cos(2.0 * np.pi * t[None, :] / p * (1.0 + tempo_idx[:, None] / 64.0) + phase)

    m[BEAT_CHANNEL, beats] = 1.0
    return m


def synth_corpus(seed: int = 0, num_pairs: int = 8, n_frames: int = 256, fps: int = 60,
                 beat_period: int = 24, amplitude: float = 0.25,
                 downsample: int = 8) -> list[LeadPartnerPair]:
    """Deterministic corpus of lead/partner/music triples."""
    cfg = SynthConfig(seed, num_pairs, n_frames, fps, beat_period, amplitude, downsample)
    if cfg.n_frames < 1 or cfg.n_frames % cfg.downsample != 0:
        raise ValueError(
            f"frame count {cfg.n_frames} must be a positive multiple of the "
            f"downsample rate {cfg.downsample}")
    if cfg.beat_period < 4:
        raise ValueError(f"beat period must be >= 4 frames, got {cfg.beat_period}")
    root = RandomStream(cfg.seed)
    pairs = []
    for i in range(cfg.num_pairs):
        s = root.split(i)
        lead = _lead_frames(s.split("lead"), cfg)
        partner, _ = _partner_frames(s.split("partner"), lead, cfg)
        music = _music_matrix(s.split("music"), cfg)
        pairs.append(LeadPartnerPair(
            lead=MotionSequence(lead, cfg.fps),
            partner=MotionSequence(partner, cfg.fps),
            music=MusicFeatures(music),
            identifier=f"pair{i:04d}",
        ))
    return pairs

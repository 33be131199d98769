"""Pose sequence data model.

Skeletons follow the standard 24-joint body-model layout. Sequences are
immutable value objects: frame arrays are copied on construction and marked
read-only, so instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "JOINT_NAMES",
    "PELVIS",
    "LOWER_JOINTS",
    "UPPER_JOINTS",
    "LEFT_RIGHT_SWAP",
    "MotionSequence",
    "MusicFeatures",
    "LeadPartnerPair",
    "MUSIC_DIM",
    "BEAT_CHANNEL",
    "validate_similarity",
    "to_relative",
    "from_relative",
    "split_upper_lower",
    "merge_halves",
    "half_to_channels",
    "channels_to_half",
    "frames_to_channels",
    "channels_to_frames",
    "pck",
]

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)

PELVIS = 0
LOWER_JOINTS = (0, 1, 2, 4, 5, 7, 8, 10, 11)
UPPER_JOINTS = tuple(j for j in range(24) if j not in LOWER_JOINTS)

# left<->right partner for each joint, used for mirror transforms
LEFT_RIGHT_SWAP = tuple(
    JOINT_NAMES.index(name.replace("left_", "right_")) if name.startswith("left_")
    else JOINT_NAMES.index(name.replace("right_", "left_")) if name.startswith("right_")
    else i
    for i, name in enumerate(JOINT_NAMES)
)

MUSIC_DIM = 419
# channel layout: 20 mel-cepstral, 12 chroma, onset strength, onset flag,
# 384 tempogram, beat flag
MEL = slice(0, 20)
CHROMA = slice(20, 32)
ONSET_STRENGTH = 32
ONSET_FLAG = 33
TEMPOGRAM = slice(34, 418)
BEAT_CHANNEL = 418


def _frozen_array(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MotionSequence:
    """N frames of 24 world-frame joints, (N, 24, 3) in skeleton units."""

    frames: np.ndarray
    fps: int = 60

    def __post_init__(self):
        frames = _frozen_array(self.frames)
        if frames.ndim != 3 or frames.shape[1] != 24 or frames.shape[2] != 3:
            raise ValueError(f"motion frames must be (N, 24, 3), got {frames.shape}")
        if frames.shape[0] < 1:
            raise ValueError("motion needs at least one frame")
        if not np.isfinite(frames).all():
            raise ValueError("motion frames contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class MusicFeatures:
    """419-channel per-frame music features; the beat channel is binary."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen_array(self.matrix)
        if matrix.ndim != 2 or matrix.shape[0] != MUSIC_DIM:
            raise ValueError(f"music matrix must be ({MUSIC_DIM}, N), got {matrix.shape}")
        beat = matrix[BEAT_CHANNEL]
        if not np.isin(beat, (0.0, 1.0)).all():
            raise ValueError("beat channel must be binary")
        object.__setattr__(self, "matrix", matrix)

    @property
    def num_frames(self) -> int:
        return self.matrix.shape[1]

    @property
    def beat_frames(self) -> np.ndarray:
        return np.flatnonzero(self.matrix[BEAT_CHANNEL] > 0.5)


@dataclass(frozen=True)
class LeadPartnerPair:
    lead: MotionSequence
    partner: MotionSequence
    music: MusicFeatures
    identifier: str = field(default="pair")

    def __post_init__(self):
        n = self.lead.num_frames
        if self.partner.num_frames != n or self.music.num_frames != n:
            raise ValueError(
                f"pair {self.identifier!r}: frame counts differ "
                f"(lead {n}, partner {self.partner.num_frames}, music {self.music.num_frames})"
            )

    @property
    def num_frames(self) -> int:
        return self.lead.num_frames


def validate_similarity(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"similarity parameter must lie in [0, 1], got {lam}")
    return lam


def to_relative(seq: MotionSequence) -> tuple[MotionSequence, np.ndarray]:
    """Shift each frame so the pelvis sits at the origin.

    Returns the relative sequence and the pelvis trajectory (N, 3) needed to
    invert the shift.
    """
    trajectory = seq.frames[:, PELVIS, :].copy()
    rel = seq.frames - trajectory[:, None, :]
    return MotionSequence(rel, seq.fps), trajectory


def from_relative(rel: MotionSequence, trajectory: np.ndarray) -> MotionSequence:
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.shape != (rel.num_frames, 3):
        raise ValueError(f"trajectory shape {trajectory.shape} does not match {rel.num_frames} frames")
    return MotionSequence(rel.frames + trajectory[:, None, :], rel.fps)


def split_upper_lower(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partition (N, 24, 3) frames into upper (N, 15, 3) and lower (N, 9, 3)."""
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.shape[1] != 24:
        raise ValueError(f"expected a 24-joint skeleton, got shape {frames.shape}")
    return frames[:, UPPER_JOINTS, :], frames[:, LOWER_JOINTS, :]


def merge_halves(upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    upper = np.asarray(upper)
    lower = np.asarray(lower)
    n = upper.shape[0]
    if lower.shape[0] != n:
        raise ValueError(f"half frame counts differ: {upper.shape[0]} vs {lower.shape[0]}")
    frames = np.empty((n, 24, upper.shape[2]), dtype=np.result_type(upper, lower))
    frames[:, UPPER_JOINTS, :] = upper
    frames[:, LOWER_JOINTS, :] = lower
    return frames


def half_to_channels(half: np.ndarray) -> np.ndarray:
    """(N, J_half, 3) joints -> (3*J_half, N) channel matrix for the encoders."""
    n = half.shape[0]
    return np.ascontiguousarray(half.reshape(n, -1).T)


def channels_to_half(channels: np.ndarray) -> np.ndarray:
    """(3*J_half, N) -> (N, J_half, 3); inverse of half_to_channels."""
    c, n = channels.shape
    return np.ascontiguousarray(channels.T.reshape(n, c // 3, 3))


def frames_to_channels(frames: np.ndarray) -> np.ndarray:
    """(N, 24, 3) -> (72, N) full-body channel matrix in joint order."""
    return half_to_channels(np.asarray(frames))


def channels_to_frames(channels: np.ndarray) -> np.ndarray:
    """(72, N) -> (N, 24, 3); inverse of frames_to_channels."""
    return channels_to_half(channels)


def pck(predicted: np.ndarray, reference: np.ndarray, threshold: float = 2.4) -> float:
    """Percentage of 2-D keypoints within a body-length-normalized threshold.

    The per-frame body length is the largest pairwise distance between
    reference keypoints (head-to-foot for an upright skeleton); distances are
    divided by it and scaled by 10 before comparison, so threshold 2.4 means
    within 24% of body length. The x10 scaling convention is this package's
    own choice of normalization.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if predicted.shape != reference.shape:
        raise ValueError(f"keypoint shapes differ: {predicted.shape} vs {reference.shape}")
    if predicted.ndim != 3 or predicted.shape[2] != 2:
        raise ValueError(f"expected (N, J, 2) keypoints, got {predicted.shape}")
    diffs = reference[:, :, None, :] - reference[:, None, :, :]
    body_length = np.sqrt((diffs ** 2).sum(-1)).max(axis=(1, 2))
    if (body_length <= 0).any():
        raise ValueError("zero body length in reference keypoints")
    dist = np.sqrt(((predicted - reference) ** 2).sum(-1))
    normalized = dist / body_length[:, None] * 10.0
    return float((normalized <= threshold).mean() * 100.0)

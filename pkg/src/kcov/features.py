"""Per-trial preprocessing of skeleton sequences.

Turns raw T x n x 3 joint trajectories into descriptor-ready trial
matrices: repair missing frames, center (and optionally scale) around a
root joint so exp-dot kernels stay in range, then stack positions with
finite-difference velocities and accelerations into a d x T matrix with
d = 3n * (1 + velocity + acceleration).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .covariance import TrialMatrix
from .errors import TooShortError, UnusableTrialError

NORM_NONE = "none"
NORM_CENTER = "center"
NORM_CENTER_SCALE = "center-scale"
_NORMALIZATIONS = (NORM_NONE, NORM_CENTER, NORM_CENTER_SCALE)


@dataclass(frozen=True)
class SkeletonTrial:
    """One recorded action instance: T frames of n joints in 3D."""

    trial_id: str
    label: int
    subject_id: int
    positions: np.ndarray  # (T, n, 3), sensor-native units

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 3 or pos.shape[0] < 1 or pos.shape[1] < 1:
            raise ValueError(
                f"trial {self.trial_id!r}: positions must be (T, n, 3), "
                f"got {pos.shape}"
            )
        object.__setattr__(self, "positions", pos)

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]

    @property
    def joint_count(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class FeatureConfig:
    use_velocity: bool = True
    use_acceleration: bool = True
    normalization: str = NORM_CENTER_SCALE
    root_joint_index: int = 0

    def __post_init__(self):
        if self.normalization not in _NORMALIZATIONS:
            raise ValueError(
                f"normalization must be one of {_NORMALIZATIONS}, "
                f"got {self.normalization!r}"
            )
        if self.root_joint_index < 0:
            raise ValueError("root_joint_index must be nonnegative")


def clean_missing(trial: SkeletonTrial) -> SkeletonTrial:
    """Repair frames that are all-zero or non-finite by linear interpolation.

    All-zero frames are how depth sensors report a lost skeleton.  Interior
    gaps are interpolated between the nearest valid frames; leading and
    trailing gaps copy the nearest valid frame.  Trials with fewer than two
    valid frames are rejected.
    """
    pos = trial.positions
    frames = pos.shape[0]
    flat = pos.reshape(frames, -1)
    finite = np.isfinite(flat).all(axis=1)
    with np.errstate(invalid="ignore"):
        all_zero = (flat == 0.0).all(axis=1)
    valid = finite & ~all_zero
    n_valid = int(valid.sum())
    if n_valid < 2:
        raise UnusableTrialError(
            f"trial {trial.trial_id!r} has {n_valid} valid frames (need >= 2)"
        )
    if n_valid == frames:
        return trial
    idx = np.arange(frames)
    repaired = flat.copy()
    bad = ~valid
    for c in range(flat.shape[1]):
        repaired[bad, c] = np.interp(idx[bad], idx[valid], flat[valid, c])
    return dataclasses.replace(trial, positions=repaired.reshape(pos.shape))


def normalize(trial: SkeletonTrial, cfg: FeatureConfig) -> SkeletonTrial:
    """Center joints on the per-frame root; optionally divide by body scale.

    The scale is the trial-median distance of the non-root joints from the
    root (falling back to 1 when it is zero), so uniformly rescaled
    coordinates normalize to the same trial.
    """
    if cfg.normalization == NORM_NONE:
        return trial
    if cfg.root_joint_index >= trial.joint_count:
        raise ValueError(
            f"root joint index {cfg.root_joint_index} out of range for "
            f"{trial.joint_count} joints"
        )
    pos = trial.positions
    centered = pos - pos[:, cfg.root_joint_index : cfg.root_joint_index + 1, :]
    if cfg.normalization == NORM_CENTER_SCALE and trial.joint_count > 1:
        dists = np.linalg.norm(
            np.delete(centered, cfg.root_joint_index, axis=1), axis=2
        )
        scale = float(np.median(dists))
        if scale > 0.0:
            centered = centered / scale
    return dataclasses.replace(trial, positions=centered)


def _velocity(pos: np.ndarray) -> np.ndarray:
    # central differences inside, one-sided at the ends
    v = np.empty_like(pos)
    v[1:-1] = 0.5 * (pos[2:] - pos[:-2])
    v[0] = pos[1] - pos[0]
    v[-1] = pos[-1] - pos[-2]
    return v


def _acceleration(pos: np.ndarray) -> np.ndarray:
    # second central difference inside, boundary rows copy nearest interior
    a = np.empty_like(pos)
    a[1:-1] = pos[2:] - 2.0 * pos[1:-1] + pos[:-2]
    a[0] = a[1]
    a[-1] = a[-2]
    return a


def assemble_trial_matrix(trial: SkeletonTrial, cfg: FeatureConfig) -> TrialMatrix:
    """Build the d x T trial matrix: normalized positions, then velocity and
    acceleration blocks when enabled."""
    if cfg.use_acceleration and trial.frame_count < 3:
        raise TooShortError(
            f"trial {trial.trial_id!r} has T = {trial.frame_count} frames; "
            "acceleration needs T >= 3"
        )
    if cfg.use_velocity and trial.frame_count < 2:
        raise TooShortError(
            f"trial {trial.trial_id!r} has T = {trial.frame_count} frames; "
            "velocity needs T >= 2"
        )
    pos = normalize(trial, cfg).positions
    frames = pos.shape[0]
    blocks = [pos]
    if cfg.use_velocity:
        blocks.append(_velocity(pos))
    if cfg.use_acceleration:
        blocks.append(_acceleration(pos))
    rows = np.concatenate([b.reshape(frames, -1).T for b in blocks], axis=0)
    return TrialMatrix(
        rows,
        joint_count=trial.joint_count,
        trial_id=trial.trial_id,
        label=trial.label,
    )

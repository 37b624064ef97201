"""Shared fixtures: synthetic skeleton corpora and SPD matrix helpers."""

import numpy as np
import pytest

from kcov.features import SkeletonTrial

# Per-class motion patterns: oscillation frequency, which joints move, and
# the dominant axis.  Distinct enough that a working pipeline separates the
# classes; the noise keeps the problem honest.
CLASS_PATTERNS = {
    1: dict(freq=1.0, active=(1, 2), axis=0),
    2: dict(freq=2.5, active=(2, 3), axis=1),
    3: dict(freq=4.0, active=(3, 4), axis=2),
}


def make_oscillation_trials(seed=0, joints=5, frames=40, subjects=range(1, 11),
                            per_class=4, noise=0.05):
    """Synthetic skeleton trials: three classes of joint oscillations."""
    rng = np.random.default_rng(seed)
    trials = []
    for subj in subjects:
        amp = 1.0 + 0.15 * rng.normal()
        for label, pat in CLASS_PATTERNS.items():
            for inst in range(per_class):
                t = np.arange(frames) / frames
                pos = np.zeros((frames, joints, 3))
                for j in range(joints):
                    pos[:, j, :] = np.array([0.5 * j, 0.3 * j, 0.1 * j])
                for j in pat["active"]:
                    if j >= joints:
                        continue
                    wave = amp * np.sin(2 * np.pi * pat["freq"] * t + 0.6 * j)
                    pos[:, j, pat["axis"]] += wave
                    pos[:, j, (pat["axis"] + 1) % 3] += 0.5 * amp * np.cos(
                        2 * np.pi * pat["freq"] * t
                    )
                pos += rng.normal(scale=noise, size=pos.shape)
                trials.append(
                    SkeletonTrial(
                        trial_id=f"s{subj:02d}_a{label:02d}_e{inst:02d}",
                        label=label,
                        subject_id=subj,
                        positions=pos,
                    )
                )
    return trials


def random_spd(rng, dim, lo=0.1, hi=10.0):
    a = rng.normal(size=(dim, dim))
    q, _ = np.linalg.qr(a)
    vals = rng.uniform(lo, hi, size=dim)
    return (q * vals) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

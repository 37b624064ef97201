"""Timing harness for the descriptor's cost envelope.

The kernelized covariance is built in O(m T + m^2 T) time for m probes and
T frames, so doubling both m and T should cost at most a factor of 8; the
check below allows 10 to absorb timing noise.  All data is synthetic and
seeded, but wall-clock measurements are inherently non-deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .covariance import ExpDotKernel, Kernel, kernelized_covariance

RATIO_BOUND = 10.0


@dataclass(frozen=True)
class BenchResult:
    probes: int
    frames: int
    runs: int
    base_seconds: float
    doubled_seconds: float

    @property
    def ratio(self) -> float:
        return self.doubled_seconds / self.base_seconds

    @property
    def within_bound(self) -> bool:
        return self.ratio <= RATIO_BOUND


def _time_descriptor(kernel: Kernel, data: np.ndarray, probes: int,
                     runs: int) -> float:
    kernelized_covariance(kernel, data, probes)  # warm-up
    start = time.perf_counter()
    for _ in range(runs):
        kernelized_covariance(kernel, data, probes)
    return (time.perf_counter() - start) / runs


def complexity_check(kernel: Kernel | None = None, probes: int = 128,
                     frames: int = 256, runs: int = 20,
                     seed: int = 0) -> BenchResult:
    """Mean descriptor time at (m, T) and (2m, 2T) over ``runs`` repetitions."""
    if kernel is None:
        kernel = ExpDotKernel(sigma=1.0)
    rng = np.random.default_rng(seed)
    data = rng.normal(scale=0.5, size=(2 * probes, 2 * frames))
    base = _time_descriptor(kernel, data[:, :frames], probes, runs)
    doubled = _time_descriptor(kernel, data, 2 * probes, runs)
    return BenchResult(
        probes=probes,
        frames=frames,
        runs=runs,
        base_seconds=base,
        doubled_seconds=doubled,
    )

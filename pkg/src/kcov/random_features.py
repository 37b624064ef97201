"""Random feature maps for dot-product kernels: the Monte-Carlo validator.

The production descriptor path is exact, so these maps never touch it;
they exist to check the theory empirically.  Each of the M features draws
a random degree N from the geometric law P(N = n) proportional to
p^-(n+1) (exactly p^-(n+1) at the default p = 2, the one base where that
expression already sums to 1) and N independent Rademacher sign vectors
w_1..w_N, then maps

    x  ->  scale * prod_j <w_j, x>,

with the full map Psi(x) = (1/sqrt(M)) [Psi_1(x), ..., Psi_M(x)].
Because E[w_i w_j] = delta_ij, each factor satisfies
E[<w,x><w,z>] = <x,z>, and choosing scale^2 = a_N / q_N (q_N the actual
degree law) makes <Psi(x), Psi(z)> an unbiased estimator of
k(x,z) = sum_l a_l <x,z>^l.

Degrees with a_N = 0 would produce identically-zero features, so they are
rejection-resampled; the scales fold the renormalization of the restricted
law back in, which keeps the estimator unbiased for finite-support kernels
(linear, polynomial) as well.  At p = 2 with a full-support kernel the
scale reduces to the plain sqrt(a_N * p^(N+1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import Kernel, kernel_eval
from .errors import DimMismatchError, InvalidBaseError

_MASK64 = (1 << 64) - 1


def replicate_seed(seed: int, index: int) -> int:
    """Derive a per-replicate seed via a splitmix64-style 64-bit mix.

    Replicates seeded this way are independent of execution order, so
    replicate loops can run concurrently without changing results.
    """
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class DegreeGroup:
    """All features sharing one sampled degree, with their sign tensors."""

    degree: int
    indices: np.ndarray  # positions within the M-vector
    signs: np.ndarray  # (group_size, degree, dim) of +-1


@dataclass(frozen=True)
class RandomFeatureMap:
    """One sampled realization of the stochastic feature map."""

    kernel: Kernel
    dim: int
    feature_count: int
    base: float
    seed: int
    degrees: np.ndarray  # (M,)
    scales: np.ndarray  # (M,) sqrt(a_N / q_N)
    groups: tuple[DegreeGroup, ...]


@dataclass(frozen=True)
class EstimatorReport:
    """Monte-Carlo verdict on E[<Psi(x),Psi(z)>] = k(x,z)."""

    target: float
    estimate_mean: float
    estimate_stderr: float
    replicates: int
    within_3se: bool


def _geometric_mass(degree: int, p: float) -> float:
    # normalized law g_n = (p-1) / p^(n+1); equals p^-(n+1) at p = 2
    return (p - 1.0) * p ** (-(degree + 1))


def _support_mass(kernel: Kernel, p: float) -> float:
    sup = kernel.support()
    if sup is None:
        return 1.0
    return sum(_geometric_mass(n, p) for n in sup)


def _sample_degrees(kernel: Kernel, count: int, p: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF geometric draws, rejection-resampling degrees with a_N = 0."""
    log_inv_p = -math.log(p)
    degrees = np.empty(count, dtype=np.int64)
    pending = np.arange(count)
    while pending.size:
        u = rng.random(pending.size)
        cand = np.floor(np.log1p(-u) / log_inv_p).astype(np.int64)
        ok = kernel.allowed_degrees(cand)
        degrees[pending[ok]] = cand[ok]
        pending = pending[~ok]
    return degrees


def sample_map(kernel: Kernel, dim: int, feature_count: int, p: float = 2.0,
               seed: int = 0) -> RandomFeatureMap:
    """Draw a feature map; a deterministic function of (seed, M, p, kernel, d)."""
    if p <= 1.0:
        raise InvalidBaseError(f"degree-distribution base must exceed 1, got {p}")
    if dim < 1 or feature_count < 1:
        raise ValueError("dim and feature_count must be positive")
    rng = np.random.default_rng(seed)
    degrees = _sample_degrees(kernel, feature_count, p, rng)
    mass = _support_mass(kernel, p)
    unique, inverse = np.unique(degrees, return_inverse=True)
    # scale_n = sqrt(a_n / q_n) with q_n = g_n / mass
    per_degree = np.array(
        [
            math.sqrt(kernel.coefficient(int(n)) * mass / _geometric_mass(int(n), p))
            for n in unique
        ]
    )
    scales = per_degree[inverse]
    groups = []
    for n in unique:
        idx = np.nonzero(degrees == n)[0]
        signs = (
            rng.integers(0, 2, size=(idx.size, int(n), dim), dtype=np.int8) * 2 - 1
        ).astype(np.float64)
        groups.append(DegreeGroup(degree=int(n), indices=idx, signs=signs))
    return RandomFeatureMap(
        kernel=kernel,
        dim=dim,
        feature_count=feature_count,
        base=p,
        seed=seed,
        degrees=degrees,
        scales=scales,
        groups=tuple(groups),
    )


def apply_map(fmap: RandomFeatureMap, x) -> np.ndarray:
    """Psi(x): component m is (1/sqrt(M)) * scale_m * prod_j <w_mj, x>.

    A degree-0 feature contributes its scale alone (empty product = 1).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (fmap.dim,):
        raise DimMismatchError(
            f"expected a vector of length {fmap.dim}, got shape {x.shape}"
        )
    out = np.empty(fmap.feature_count)
    for group in fmap.groups:
        out[group.indices] = (group.signs @ x).prod(axis=1)
    return fmap.scales * out / math.sqrt(fmap.feature_count)


def estimate_kernel(kernel: Kernel, x, z, feature_count: int, replicates: int,
                    seed: int = 0, p: float = 2.0) -> EstimatorReport:
    """Estimate k(x, z) over independent maps and test unbiasedness at 3 SE."""
    if replicates < 30:
        raise ValueError("need at least 30 replicates for a standard error")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    target = kernel_eval(kernel, x, z)
    estimates = np.empty(replicates)
    for r in range(replicates):
        fmap = sample_map(kernel, x.size, feature_count, p=p,
                          seed=replicate_seed(seed, r))
        estimates[r] = float(apply_map(fmap, x) @ apply_map(fmap, z))
    mean = float(estimates.mean())
    stderr = float(estimates.std(ddof=1) / math.sqrt(replicates))
    return EstimatorReport(
        target=target,
        estimate_mean=mean,
        estimate_stderr=stderr,
        replicates=replicates,
        within_3se=bool(abs(mean - target) <= 3.0 * stderr),
    )


def rademacher_moment_check(dim: int, samples: int, seed: int = 0) -> bool:
    """Empirically verify E[w_i w_j] = delta_ij for Rademacher sign vectors.

    Checks the leading min(dim, 8) components against a 4/sqrt(samples)
    band (the diagonal is exact since every entry squares to 1).
    """
    if samples < 10_000:
        raise ValueError("need at least 10^4 samples for a meaningful check")
    k = min(dim, 8)
    if k < 1:
        raise ValueError("dim must be positive")
    rng = np.random.default_rng(seed)
    w = (rng.integers(0, 2, size=(samples, k), dtype=np.int8) * 2 - 1).astype(
        np.float64
    )
    emp = (w.T @ w) / samples
    return bool(np.abs(emp - np.eye(k)).max() <= 4.0 / math.sqrt(samples))

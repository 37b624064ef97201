"""Dense symmetric-matrix numerics: eigendecomposition, matrix log/exp, norms.

Everything operates on plain float64 numpy arrays.  Inputs are symmetrized
on entry, (A + A^T)/2, because covariance products accumulate asymmetric
rounding.  The eigensolver is a cyclic Jacobi sweep: for the small
dimensions SPD descriptors live at (d <= ~100) it reaches machine
precision, and its output is a deterministic function of the input bits,
which golden tests and the persistence layer rely on.

Conventions fixed here and assumed everywhere downstream:
  * eigenvalues sorted descending,
  * eigenvector sign chosen so the largest-magnitude component of each
    column is nonnegative.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import (
    DimMismatchError,
    NoConvergenceError,
    NonFiniteError,
    NotPositiveDefiniteError,
)

# Jacobi iteration limits: convergence is declared when the off-diagonal
# Frobenius mass drops below OFFDIAG_TOL * ||A||_F.
SWEEP_BUDGET = 100
OFFDIAG_TOL = 1e-12


class EigenDecomposition(NamedTuple):
    """Eigenvalues (descending) and the matching orthogonal column basis."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetrize(a) -> np.ndarray:
    """Return (A + A^T)/2 as a fresh float64 array.

    Raises NonFiniteError if any entry is NaN/Inf and DimMismatchError for
    non-square input.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimMismatchError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimMismatchError("matrix dimension must be >= 1")
    if not np.isfinite(a).all():
        raise NonFiniteError("matrix contains NaN or Inf entries")
    return 0.5 * (a + a.T)


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return math.sqrt(float((a * a).sum()))


def frobenius_distance(a, b) -> float:
    """sqrt(sum_ij (a_ij - b_ij)^2); zero iff the matrices are equal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return frobenius_norm(a - b)


def _offdiag_norm(w: np.ndarray) -> float:
    off = w.copy()
    np.fill_diagonal(off, 0.0)
    return frobenius_norm(off)


def _sort_and_fix_signs(values: np.ndarray, vectors: np.ndarray) -> EigenDecomposition:
    n = values.size
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    lead = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(n)]
    vectors[:, lead < 0.0] *= -1.0
    return EigenDecomposition(values, vectors)


def eig_sym(a) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Deterministic for identical input bits.  Raises NoConvergenceError if
    the off-diagonal mass has not dropped below OFFDIAG_TOL * ||A||_F
    within SWEEP_BUDGET sweeps (does not happen for finite symmetric input
    at these dimensions; the guard exists so a regression cannot hang).
    """
    w = symmetrize(a)
    n = w.shape[0]
    v = np.eye(n)
    norm = frobenius_norm(w)
    if n == 1 or norm == 0.0:
        return _sort_and_fix_signs(np.diag(w).copy(), v)
    tol = OFFDIAG_TOL * norm
    # Entries below tol/n can never push the off-diagonal mass above tol,
    # so they are skipped instead of rotated.
    rot_tol = tol / n
    for _ in range(SWEEP_BUDGET):
        if _offdiag_norm(w) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                if abs(apq) <= rot_tol:
                    continue
                app = w[p, p]
                aqq = w[q, q]
                theta = 0.5 * (aqq - app) / apq
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                colp = w[:, p].copy()
                colq = w[:, q].copy()
                newp = c * colp - s * colq
                newq = s * colp + c * colq
                newp[p] = app - t * apq
                newq[q] = aqq + t * apq
                newp[q] = 0.0
                newq[p] = 0.0
                w[:, p] = newp
                w[p, :] = newp
                w[:, q] = newq
                w[q, :] = newq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NoConvergenceError(
            f"Jacobi iteration did not converge within {SWEEP_BUDGET} sweeps"
        )
    return _sort_and_fix_signs(np.diag(w).copy(), v)


def _apply_spectral(values, vectors, fn) -> np.ndarray:
    return symmetrize((vectors * fn(values)) @ vectors.T)


def logm_spd(a, epsilon: float = 0.0) -> np.ndarray:
    """Matrix logarithm of a + epsilon*I for symmetric positive definite input.

    Computed as V diag(log(lambda_i + epsilon)) V^T.  Raises
    NotPositiveDefiniteError (reporting the minimum eigenvalue) when the
    shifted spectrum is not strictly positive.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    values, vectors = eig_sym(a)
    shifted = values + epsilon
    min_val = float(values.min())
    if float(shifted.min()) <= 0.0:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite after shift: "
            f"min eigenvalue {min_val:.6e}, epsilon {epsilon:.6e}",
            min_eigenvalue=min_val,
        )
    return _apply_spectral(shifted, vectors, np.log)


def expm_sym(a) -> np.ndarray:
    """Matrix exponential V diag(exp(lambda_i)) V^T of a symmetric matrix."""
    values, vectors = eig_sym(a)
    with np.errstate(over="ignore"):
        exp_values = np.exp(values)
    if not np.isfinite(exp_values).all():
        raise NonFiniteError(
            f"matrix exponential overflowed (max eigenvalue {values.max():.3e})"
        )
    return _apply_spectral(values, vectors, np.exp)

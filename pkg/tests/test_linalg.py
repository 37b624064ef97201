"""Symmetric eigendecomposition, matrix log/exp and Frobenius distance.

Reference values come from analytic 2x2 cases and from numpy.linalg
(LAPACK) as an independent oracle for the Jacobi solver.
"""

import math

import numpy as np
import pytest

from conftest import random_spd
from kcov.errors import (
    DimMismatchError,
    NoConvergenceError,
    NonFiniteError,
    NotPositiveDefiniteError,
)
from kcov.linalg import (
    eig_sym,
    expm_sym,
    frobenius_distance,
    logm_spd,
    symmetrize,
)


class TestEigSym:
    def test_already_diagonal(self):
        vals, vecs = eig_sym(np.diag([3.0, 1.0]))
        np.testing.assert_array_equal(vals, [3.0, 1.0])
        np.testing.assert_array_equal(vecs, np.eye(2))

    def test_analytic_2x2_flip(self):
        vals, vecs = eig_sym([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(vals, [1.0, -1.0], atol=1e-15)
        s = 1.0 / math.sqrt(2.0)
        np.testing.assert_allclose(vecs[:, 0], [s, s], atol=1e-15)
        np.testing.assert_allclose(vecs[:, 1], [s, -s], atol=1e-15)

    def test_reconstruction_8x8(self, rng):
        a = rng.normal(size=(8, 8))
        a = a + a.T
        vals, vecs = eig_sym(a)
        rec = (vecs * vals) @ vecs.T
        assert np.linalg.norm(rec - a) / np.linalg.norm(a) < 1e-8

    def test_matches_lapack_and_sorted(self, rng):
        for _ in range(15):
            dim = int(rng.integers(2, 30))
            a = rng.normal(size=(dim, dim))
            a = a + a.T
            vals, vecs = eig_sym(a)
            assert (np.diff(vals) <= 1e-12).all()
            ref = np.sort(np.linalg.eigvalsh(a))[::-1]
            np.testing.assert_allclose(vals, ref, atol=1e-9 * max(1, abs(ref).max()))
            orth = np.linalg.norm(vecs.T @ vecs - np.eye(dim))
            assert orth < 1e-10

    def test_sign_convention(self, rng):
        a = rng.normal(size=(6, 6))
        a = a + a.T
        _, vecs = eig_sym(a)
        lead = np.abs(vecs).argmax(axis=0)
        assert (vecs[lead, np.arange(6)] >= 0.0).all()

    def test_deterministic(self, rng):
        a = rng.normal(size=(10, 10))
        a = a + a.T
        v1, e1 = eig_sym(a)
        v2, e2 = eig_sym(a)
        assert np.array_equal(v1, v2) and np.array_equal(e1, e2)

    def test_zero_and_1x1(self):
        vals, vecs = eig_sym(np.zeros((3, 3)))
        np.testing.assert_array_equal(vals, np.zeros(3))
        vals, vecs = eig_sym([[5.0]])
        assert vals[0] == 5.0 and vecs[0, 0] == 1.0

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteError):
            eig_sym([[np.nan, 0.0], [0.0, 1.0]])

    def test_nonsquare_rejected(self):
        with pytest.raises(DimMismatchError):
            eig_sym(np.ones((2, 3)))

    def test_sweep_budget_exhaustion(self, rng, monkeypatch):
        import kcov.linalg as linalg_mod

        monkeypatch.setattr(linalg_mod, "SWEEP_BUDGET", 0)
        a = rng.normal(size=(4, 4))
        with pytest.raises(NoConvergenceError):
            eig_sym(a + a.T)


class TestLogmSpd:
    def test_identity(self):
        np.testing.assert_array_equal(logm_spd(np.eye(4), 0.0), np.zeros((4, 4)))

    def test_analytic_diagonal(self):
        out = logm_spd(np.diag([math.e, math.e**2]), 0.0)
        np.testing.assert_allclose(out, np.diag([1.0, 2.0]), atol=1e-14)

    def test_scaled_identity(self):
        for c in (0.1, 2.0, 17.5):
            out = logm_spd(c * np.eye(3), 0.0)
            np.testing.assert_allclose(out, math.log(c) * np.eye(3), atol=1e-14)

    def test_roundtrip_6x6(self, rng):
        a = random_spd(rng, 6)
        back = expm_sym(logm_spd(a, 0.0))
        assert np.linalg.norm(back - a) / np.linalg.norm(a) < 1e-8

    def test_epsilon_shift(self):
        # rank-deficient input becomes loggable with a positive shift
        a = np.diag([1.0, 0.0])
        out = logm_spd(a, 1e-6)
        np.testing.assert_allclose(
            out, np.diag([math.log(1.0 + 1e-6), math.log(1e-6)]), rtol=1e-12
        )

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefiniteError) as info:
            logm_spd(np.diag([1.0, -2.0]), 0.0)
        assert info.value.min_eigenvalue == pytest.approx(-2.0)

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError):
            logm_spd(np.eye(2), -1.0)

    def test_output_symmetric(self, rng):
        out = logm_spd(random_spd(rng, 7), 0.0)
        assert np.array_equal(out, out.T)


class TestExpmSym:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(expm_sym(np.zeros((3, 3))), np.eye(3))

    def test_analytic_diagonal(self):
        out = expm_sym(np.diag([1.0, 2.0]))
        np.testing.assert_allclose(out, np.diag([math.e, math.e**2]), rtol=1e-14)

    def test_result_spd(self, rng):
        a = rng.normal(size=(5, 5))
        out = expm_sym(a + a.T)
        assert np.linalg.eigvalsh(out).min() > 0.0

    def test_overflow(self):
        with pytest.raises(NonFiniteError):
            expm_sym(np.diag([1000.0, 0.0]))


class TestFrobeniusDistance:
    def test_identical(self, rng):
        a = rng.normal(size=(4, 4))
        assert frobenius_distance(a, a) == 0.0

    def test_analytic(self):
        assert frobenius_distance(np.eye(2), np.zeros((2, 2))) == pytest.approx(
            math.sqrt(2.0)
        )

    def test_matches_bruteforce(self, rng):
        a = rng.normal(size=(5, 5))
        b = rng.normal(size=(5, 5))
        brute = math.sqrt(
            sum((a[i, j] - b[i, j]) ** 2 for i in range(5) for j in range(5))
        )
        assert frobenius_distance(a, b) == pytest.approx(brute, rel=1e-14)

    def test_metric_properties(self, rng):
        for _ in range(20):
            a, b, c = (rng.normal(size=(4, 4)) for _ in range(3))
            dab = frobenius_distance(a, b)
            assert abs(dab - frobenius_distance(b, a)) <= 1e-12
            assert dab <= frobenius_distance(a, c) + frobenius_distance(c, b) + 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            frobenius_distance(np.eye(2), np.eye(3))


def test_symmetrize_averages():
    a = np.array([[1.0, 2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(symmetrize(a), [[1.0, 1.0], [1.0, 3.0]])

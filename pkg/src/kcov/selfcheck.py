"""Executable invariant suite behind the CLI ``selfcheck`` command.

Every check re-verifies one documented invariant of a module, preferring
independent oracles (dense centering matrices, brute-force summation,
LAPACK eigenvalues) over the code paths under test.  Checks are seeded and
deterministic; a fixed seed gives a fixed verdict.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import covariance, datasets, features, linalg, random_features, svm
from .covariance import (
    CenteringMatrix,
    ExpDotKernel,
    LinearKernel,
    PolynomialKernel,
    TrialMatrix,
)
from .features import FeatureConfig, SkeletonTrial


class CheckFailed(Exception):
    pass


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_trial(rng, d_range=(3, 60), t_range=(2, 200)) -> np.ndarray:
    d = int(rng.integers(d_range[0], d_range[1] + 1))
    t = int(rng.integers(t_range[0], t_range[1] + 1))
    return rng.normal(size=(d, t))


def _random_spd(rng, dim) -> np.ndarray:
    a = rng.normal(size=(dim, dim))
    q, _ = np.linalg.qr(a)
    vals = rng.uniform(0.1, 10.0, size=dim)
    return (q * vals) @ q.T


# --- spd_linalg ------------------------------------------------------------


def check_eig_reconstruction(seed) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        dim = int(rng.integers(2, 40))
        a = rng.normal(size=(dim, dim))
        a = a + a.T
        vals, vecs = linalg.eig_sym(a)
        if not (np.diff(vals) <= 1e-12).all():
            raise CheckFailed("eigenvalues not sorted descending")
        rec = (vecs * vals) @ vecs.T
        err = np.linalg.norm(rec - a) / max(1.0, np.linalg.norm(a))
        worst = max(worst, err)
    if worst >= 1e-8:
        raise CheckFailed(f"reconstruction error {worst:.3e} >= 1e-8")
    return f"worst relative reconstruction error {worst:.2e} over 20 matrices"


def check_log_exp_roundtrip(seed) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        a = _random_spd(rng, int(rng.integers(2, 30)))
        back = linalg.expm_sym(linalg.logm_spd(a, 0.0))
        worst = max(worst, np.linalg.norm(back - a) / np.linalg.norm(a))
    if worst >= 1e-8:
        raise CheckFailed(f"roundtrip error {worst:.3e} >= 1e-8")
    return f"worst relative roundtrip error {worst:.2e} over 20 SPD matrices"


def check_log_scaled_identity(seed) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(10):
        c = float(rng.uniform(0.01, 50.0))
        dim = int(rng.integers(1, 12))
        out = linalg.logm_spd(c * np.eye(dim), 0.0)
        if not np.allclose(out, math.log(c) * np.eye(dim), atol=1e-12):
            raise CheckFailed(f"logm({c:.3f} I) deviates from log(c) I")
    return "logm(c I) = log(c) I for 10 random scales"


def check_frobenius_metric(seed) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(25):
        dim = int(rng.integers(1, 10))
        a, b, c = (rng.normal(size=(dim, dim)) for _ in range(3))
        dab = linalg.frobenius_distance(a, b)
        dba = linalg.frobenius_distance(b, a)
        dac = linalg.frobenius_distance(a, c)
        dcb = linalg.frobenius_distance(c, b)
        if abs(dab - dba) > 1e-12:
            raise CheckFailed("distance is not symmetric")
        if dab > dac + dcb + 1e-12:
            raise CheckFailed("triangle inequality violated")
    return "symmetry and triangle inequality hold on 25 random triples"


# --- descriptor ------------------------------------------------------------


def check_linear_reduction(seed) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(200):
        x = TrialMatrix(_random_trial(rng))
        classical = covariance.classical_covariance(x).matrix
        kernelized = covariance.kernelized_covariance(LinearKernel(), x).matrix
        gap = np.linalg.norm(kernelized - classical)
        bound = 1e-10 * (1.0 + np.linalg.norm(classical))
        worst = max(worst, gap / bound)
        if gap > bound:
            raise CheckFailed(f"linear kernel deviates from covariance by {gap:.3e}")
    return f"200 trials, worst gap at {worst:.2e} of tolerance"


def check_descriptor_psd(seed) -> str:
    rng = np.random.default_rng(seed)
    kernels = [
        LinearKernel(),
        PolynomialKernel(degree=2),
        PolynomialKernel(degree=3),
        ExpDotKernel(sigma=1.0),
        ExpDotKernel(sigma=2.0),
    ]
    for k in range(40):
        x = TrialMatrix(_random_trial(rng, (3, 20), (2, 40)) * 0.5)
        kern = kernels[k % len(kernels)]
        s = covariance.kernelized_covariance(kern, x).matrix
        d = s.shape[0]
        min_eig = float(np.linalg.eigvalsh(s).min())
        if min_eig < -1e-8 * np.trace(s) / d:
            raise CheckFailed(
                f"{kern.name} descriptor has min eigenvalue {min_eig:.3e}"
            )
    return "40 random descriptors across 5 kernels are PSD within tolerance"


def check_frame_permutation_invariance(seed) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(10):
        x = _random_trial(rng, (3, 12), (3, 40)) * 0.5
        perm = rng.permutation(x.shape[1])
        for kern in (LinearKernel(), ExpDotKernel(sigma=1.0)):
            s1 = covariance.kernelized_covariance(kern, TrialMatrix(x)).matrix
            s2 = covariance.kernelized_covariance(kern, TrialMatrix(x[:, perm])).matrix
            if np.abs(s1 - s2).max() > 1e-12:
                raise CheckFailed("permuting frames changed the descriptor")
    return "descriptors invariant to frame permutation on 10 trials"


def check_structured_centering(seed) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(20):
        t = int(rng.integers(2, 40))
        m = rng.normal(size=(int(rng.integers(1, 10)), t))
        p = CenteringMatrix(t)
        gap = np.abs(p.apply(m) - m @ p.dense()).max()
        if gap > 1e-12:
            raise CheckFailed(f"structured centering deviates by {gap:.3e}")
    return "mean-subtraction path matches dense centering on 20 cases"


def check_summation_vs_matrix_form(seed) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(20):
        x = _random_trial(rng, (2, 10), (2, 40))
        mu = x.mean(axis=1, keepdims=True)
        centered = x - mu
        by_sum = sum(
            np.outer(centered[:, t], centered[:, t]) for t in range(x.shape[1])
        ) / (x.shape[1] - 1)
        by_matrix = covariance.classical_covariance(TrialMatrix(x)).matrix
        if np.abs(by_sum - by_matrix).max() > 1e-12:
            raise CheckFailed("summation and matrix forms disagree")
    return "summation and matrix forms agree within 1e-12 on 20 trials"


def check_expdot_gram_entrywise(seed) -> str:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 9))
    sigma = 1.5
    k = covariance.gram_probe_matrix(ExpDotKernel(sigma=sigma), x)
    if not np.array_equal(k, np.exp(x / sigma**2)):
        raise CheckFailed("exp-dot probe matrix is not the elementwise map")
    return "exp-dot probe responses equal exp(X/sigma^2) exactly"


# --- rand_features ----------------------------------------------------------


def check_linear_unbiasedness(seed) -> str:
    rng = np.random.default_rng(seed)
    hits = 0
    pairs = 3
    for k in range(pairs):
        x = rng.normal(size=6)
        x /= max(1.0, np.linalg.norm(x))
        z = rng.normal(size=6)
        z /= max(1.0, np.linalg.norm(z))
        rep = random_features.estimate_kernel(
            LinearKernel(), x, z, 256, 500, seed=seed + k
        )
        hits += rep.within_3se
    if hits < pairs - 1:
        raise CheckFailed(f"only {hits}/{pairs} pairs within 3 standard errors")
    return f"{hits}/{pairs} pairs within 3 standard errors (M=256, R=500)"


def check_variance_decay(seed) -> str:
    rng = np.random.default_rng(seed)
    kern = ExpDotKernel(sigma=1.0)
    small, large = [], []
    for k in range(20):
        x = rng.normal(size=5)
        x /= max(1.0, np.linalg.norm(x))
        z = rng.normal(size=5)
        z /= max(1.0, np.linalg.norm(z))
        small.append(
            random_features.estimate_kernel(kern, x, z, 64, 60, seed=seed + k)
            .estimate_stderr
        )
        large.append(
            random_features.estimate_kernel(kern, x, z, 1024, 60, seed=seed + k)
            .estimate_stderr
        )
    if not np.mean(large) < np.mean(small):
        raise CheckFailed("standard error did not shrink from M=64 to M=1024")
    return (
        f"mean stderr {np.mean(small):.2e} (M=64) -> {np.mean(large):.2e} (M=1024)"
    )


def check_map_determinism(seed) -> str:
    kern = ExpDotKernel(sigma=1.0)
    m1 = random_features.sample_map(kern, 4, 128, seed=seed)
    m2 = random_features.sample_map(kern, 4, 128, seed=seed)
    same = np.array_equal(m1.degrees, m2.degrees) and np.array_equal(
        m1.scales, m2.scales
    )
    same = same and all(
        np.array_equal(g1.signs, g2.signs) for g1, g2 in zip(m1.groups, m2.groups)
    )
    x = np.linspace(-0.5, 0.5, 4)
    same = same and np.array_equal(
        random_features.apply_map(m1, x), random_features.apply_map(m2, x)
    )
    if not same:
        raise CheckFailed("identical seeds produced different maps")
    return "identical seeds give bitwise-identical maps and applications"


def check_degree_law(seed) -> str:
    draws = 10**6
    fmap = random_features.sample_map(ExpDotKernel(sigma=1.0), 1, draws, seed=seed)
    counts = np.bincount(fmap.degrees, minlength=11)
    worst = 0.0
    for n in range(11):
        p = 2.0 ** -(n + 1)
        expected = draws * p
        se = math.sqrt(draws * p * (1.0 - p))
        dev = abs(counts[n] - expected) / se
        worst = max(worst, dev)
        if dev > 3.0:
            raise CheckFailed(f"degree {n} frequency is {dev:.2f} SE off")
    return f"degree frequencies within 3 SE of 2^-(N+1) (worst {worst:.2f} SE)"


def check_rademacher_moments(seed) -> str:
    if not random_features.rademacher_moment_check(8, 10**6, seed=seed):
        raise CheckFailed("empirical E[w_i w_j] deviates from identity")
    return "E[w_i w_j] = delta_ij within 4/sqrt(10^6)"


# --- features ---------------------------------------------------------------


def _random_skeleton(rng, frames=12, joints=4) -> SkeletonTrial:
    return SkeletonTrial(
        trial_id="synth",
        label=1,
        subject_id=1,
        positions=rng.normal(size=(frames, joints, 3)),
    )


def check_assembled_shape(seed) -> str:
    rng = np.random.default_rng(seed)
    trial = _random_skeleton(rng)
    for vel in (False, True):
        for acc in (False, True):
            cfg = FeatureConfig(
                use_velocity=vel, use_acceleration=acc, normalization="none"
            )
            tm = features.assemble_trial_matrix(trial, cfg)
            want = 3 * trial.joint_count * (1 + vel + acc)
            if tm.dim != want or tm.frames != trial.frame_count:
                raise CheckFailed(f"assembled shape {tm.data.shape}, wanted {want} rows")
    return "assembled matrices have 3n(1+vel+acc) rows and T columns"


def check_differentiation_linearity(seed) -> str:
    rng = np.random.default_rng(seed)
    cfg = FeatureConfig(normalization="none")
    a = _random_skeleton(rng)
    b = _random_skeleton(rng)
    both = SkeletonTrial("sum", 1, 1, a.positions + b.positions)
    lhs = features.assemble_trial_matrix(both, cfg).data
    rhs = (
        features.assemble_trial_matrix(a, cfg).data
        + features.assemble_trial_matrix(b, cfg).data
    )
    if np.abs(lhs - rhs).max() > 1e-12:
        raise CheckFailed("velocity/acceleration stacking is not linear")
    return "assembly is linear in the position tracks"


def check_center_root_zeroes(seed) -> str:
    rng = np.random.default_rng(seed)
    trial = _random_skeleton(rng)
    cfg = FeatureConfig(
        use_velocity=False, use_acceleration=False, normalization="center",
        root_joint_index=2,
    )
    tm = features.assemble_trial_matrix(trial, cfg)
    root_rows = tm.data[6:9]
    if np.abs(root_rows).max() != 0.0:
        raise CheckFailed("root joint rows are not identically zero")
    return "root-centering zeroes the root joint rows exactly"


def check_pipeline_determinism(seed) -> str:
    rng = np.random.default_rng(seed)
    trial = _random_skeleton(rng)
    cfg = FeatureConfig()
    a = features.assemble_trial_matrix(trial, cfg).data
    b = features.assemble_trial_matrix(trial, cfg).data
    if not np.array_equal(a, b):
        raise CheckFailed("same trial and config produced different matrices")
    return "identical trial + config give bitwise-identical matrices"


# --- classifier ---------------------------------------------------------------


def _toy_descriptors(rng, per_class=8, classes=(1, 2, 3)):
    descs, labels = [], []
    for c_idx, label in enumerate(classes):
        base = np.diag(np.arange(1.0, 5.0) + 3.0 * c_idx)
        for k in range(per_class):
            jitter = rng.normal(scale=0.05, size=base.shape)
            mat = linalg.symmetrize(base + jitter @ jitter.T)
            desc = covariance.SpdDescriptor(
                matrix=mat,
                kernel=LinearKernel(),
                trial_id=f"c{label}-{k}",
                label=label,
            )
            descs.append(covariance.regularize_and_log(desc, 1e-5))
            labels.append(label)
    return descs, np.asarray(labels)


def check_gram_invariants(seed) -> str:
    rng = np.random.default_rng(seed)
    descs, _ = _toy_descriptors(rng)
    gram = svm.log_euclidean_gram(descs, gamma=0.5)
    v = gram.values
    if not np.array_equal(v, v.T):
        raise CheckFailed("Gram matrix is not symmetric")
    if np.abs(np.diag(v) - 1.0).max() != 0.0:
        raise CheckFailed("Gram diagonal is not exactly 1")
    if float(np.linalg.eigvalsh(v).min()) < -1e-8:
        raise CheckFailed("Gram matrix violates the PSD tolerance")
    return "Gram is symmetric, unit-diagonal, PSD within 1e-8"


def check_smo_feasibility(seed) -> str:
    rng = np.random.default_rng(seed)
    descs, labels = _toy_descriptors(rng)
    gram = svm.log_euclidean_gram(descs, gamma=0.5)
    c = 10.0
    model = svm.svm_train(gram, labels, c)
    for mach in model.machines:
        alphas = np.abs(mach.coef)
        if (alphas < -1e-12).any() or (alphas > c + 1e-9).any():
            raise CheckFailed("dual variables escape the box [0, C]")
        if abs(mach.coef.sum()) > 1e-6:
            raise CheckFailed(f"sum alpha_i y_i = {mach.coef.sum():.2e} > 1e-6")
    pred = svm.svm_predict(model, gram.values)
    acc = float((pred == labels).mean())
    if acc < 1.0:
        raise CheckFailed(f"training accuracy {acc:.3f} on separable toy data")
    return "duals feasible, equality constraint met, toy data separated"


def check_label_permutation_equivariance(seed) -> str:
    rng = np.random.default_rng(seed)
    descs, labels = _toy_descriptors(rng)
    gram = svm.log_euclidean_gram(descs, gamma=0.5)
    mapping = {1: 7, 2: 3, 3: 5}
    base = svm.svm_predict(svm.svm_train(gram, labels, 10.0), gram.values)
    relab = np.asarray([mapping[int(l)] for l in labels])
    perm = svm.svm_predict(svm.svm_train(gram, relab, 10.0), gram.values)
    if not np.array_equal(np.asarray([mapping[int(l)] for l in base]), perm):
        raise CheckFailed("relabeling classes did not permute predictions")
    return "relabeling classes permutes predictions identically"


def check_gamma_monotonicity(seed) -> str:
    rng = np.random.default_rng(seed)
    descs, _ = _toy_descriptors(rng, per_class=1, classes=(1, 2))
    prev = None
    for gamma in (0.125, 0.5, 2.0, 8.0):
        entry = svm.log_euclidean_gram(descs, gamma=gamma).values[0, 1]
        if prev is not None and not entry < prev:
            raise CheckFailed("off-diagonal Gram entry not decreasing in gamma")
        prev = entry
    return "off-diagonal Gram entry strictly decreases in gamma"


# --- dataset_io ---------------------------------------------------------------


def _synthetic_trials(rng, subjects=(1, 2, 3, 4), per=2):
    trials = []
    for s in subjects:
        for k in range(per):
            trials.append(
                SkeletonTrial(
                    trial_id=f"s{s:02d}e{k:02d}",
                    label=(k % 2) + 1,
                    subject_id=s,
                    positions=rng.normal(size=(5, 3, 3)),
                )
            )
    return trials


def check_split_partition(seed) -> str:
    rng = np.random.default_rng(seed)
    trials = _synthetic_trials(rng)
    profile = datasets.DatasetProfile(
        name="synt",
        joint_count=3,
        root_joint_index=0,
        split_rule=datasets.SplitRule(kind="odd_even_subjects"),
        class_filter=(1,),
    )
    index = datasets.apply_split(datasets.build_trial_index(trials), profile)
    sides = [e.assignment for e in index.entries]
    if sorted(
        len(index.subset(s)) for s in (datasets.TRAIN, datasets.TEST, datasets.REJECTED)
    ) != sorted([2, 2, 4]):
        raise CheckFailed(f"unexpected split sizes from assignments {sides}")
    if len(index.entries) != len(trials):
        raise CheckFailed("split gained or lost trials")
    return "train/test/rejected partition the loaded trials"


def check_load_order_independence(seed) -> str:
    rng = np.random.default_rng(seed)
    trials = _synthetic_trials(rng)
    shuffled = list(trials)
    rng.shuffle(shuffled)
    a = datasets.build_trial_index(trials)
    b = datasets.build_trial_index(shuffled)
    if a != b:
        raise CheckFailed("index depends on input ordering")
    return "trial index is independent of load order"


def check_canonical_roundtrip(seed) -> str:
    rng = np.random.default_rng(seed)
    trials = _synthetic_trials(rng)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "trials.jsonl"
        datasets.write_canonical(path, trials, dataset="synt")
        back = datasets.load_canonical(path)
    if len(back) != len(trials):
        raise CheckFailed("roundtrip changed the trial count")
    for t0, t1 in zip(trials, back):
        if t0.trial_id != t1.trial_id or not np.array_equal(
            t0.positions, t1.positions
        ):
            raise CheckFailed(f"roundtrip altered trial {t0.trial_id!r}")
    return "canonical write -> load preserves every value bit-exactly"


# ---------------------------------------------------------------------------


CHECKS: tuple[tuple[str, Callable[[int], str]], ...] = (
    ("linalg.eig-reconstruction", check_eig_reconstruction),
    ("linalg.log-exp-roundtrip", check_log_exp_roundtrip),
    ("linalg.log-scaled-identity", check_log_scaled_identity),
    ("linalg.frobenius-metric", check_frobenius_metric),
    ("descriptor.linear-reduction", check_linear_reduction),
    ("descriptor.psd", check_descriptor_psd),
    ("descriptor.frame-permutation", check_frame_permutation_invariance),
    ("descriptor.structured-centering", check_structured_centering),
    ("descriptor.summation-vs-matrix", check_summation_vs_matrix_form),
    ("descriptor.expdot-entrywise", check_expdot_gram_entrywise),
    ("randfeat.linear-unbiasedness", check_linear_unbiasedness),
    ("randfeat.variance-decay", check_variance_decay),
    ("randfeat.determinism", check_map_determinism),
    ("randfeat.degree-law", check_degree_law),
    ("randfeat.rademacher-moments", check_rademacher_moments),
    ("features.assembled-shape", check_assembled_shape),
    ("features.differentiation-linearity", check_differentiation_linearity),
    ("features.center-root-zeroes", check_center_root_zeroes),
    ("features.determinism", check_pipeline_determinism),
    ("classifier.gram-invariants", check_gram_invariants),
    ("classifier.smo-feasibility", check_smo_feasibility),
    ("classifier.label-permutation", check_label_permutation_equivariance),
    ("classifier.gamma-monotonicity", check_gamma_monotonicity),
    ("datasets.split-partition", check_split_partition),
    ("datasets.load-order-independence", check_load_order_independence),
    ("datasets.canonical-roundtrip", check_canonical_roundtrip),
)


def run_selfcheck(seed: int = 0, inject_failure: bool = False) -> list[CheckResult]:
    """Run every registered invariant check with seeds derived from ``seed``."""
    results = []
    for k, (name, fn) in enumerate(CHECKS):
        try:
            detail = fn(seed + 1000 * k)
            results.append(CheckResult(name=name, passed=True, detail=detail))
        except CheckFailed as exc:
            results.append(CheckResult(name=name, passed=False, detail=str(exc)))
    if inject_failure:
        results.append(
            CheckResult(
                name="harness.injected-failure",
                passed=False,
                detail="deliberate failure requested via --inject-failure",
            )
        )
    return results

"""SPD-aware kernel SVM: log-Euclidean Gram matrices, a sequential minimal
optimization solver for precomputed kernels, one-vs-one voting, and grid
cross-validation.

Descriptors are compared through their matrix logarithms: the Gram entry
for trials a, b is exp(-gamma * ||log A - log B||_F^2), the Gaussian of
the log-Euclidean distance (a linear variant <log A, log B> is available
for ablations).  The SVM works directly on such precomputed Gram blocks;
multiclass decisions are one-vs-one majority votes with deterministic
tie-breaking.
"""

from __future__ import annotations

import dataclasses
import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .covariance import Kernel, SpdDescriptor, _pack_kernel, _unpack_kernel
from .errors import (
    DegenerateLabelsError,
    DimMismatchError,
    EmptyFoldError,
    MalformedFileError,
    NotPositiveDefiniteError,
    ShapeMismatchError,
)
from .features import FeatureConfig, SkeletonTrial, assemble_trial_matrix
from . import covariance

MODEL_MAGIC = b"KSVM1"

# Gram matrices assembled here must satisfy min eigenvalue >= -PSD_TOL.
PSD_TOL = 1e-8

# SMO termination: maximal KKT violation below this.
SMO_TOL = 1e-3
SMO_KERNEL_EVAL_BUDGET = 10_000_000


@dataclass(frozen=True)
class PipelineProvenance:
    """Everything needed to rebuild a prediction-time Gram row: the
    descriptor kernel, log regularizer scale, probe count (0 = data dim)
    and the feature configuration."""

    kernel: Kernel
    eps_scale: float
    probes: int
    feature_config: FeatureConfig


@dataclass(frozen=True)
class GramMatrix:
    ids: tuple[str, ...]
    values: np.ndarray  # (N, N), symmetric, unit diagonal
    gamma: float
    provenance: Optional[PipelineProvenance] = None


@dataclass(frozen=True)
class BinaryMachine:
    """One trained one-vs-one machine: +1 votes class_a, -1 votes class_b."""

    class_a: int
    class_b: int
    support: np.ndarray  # indices into the training set
    coef: np.ndarray  # alpha_i * y_i at the support indices
    bias: float
    c: float


@dataclass(frozen=True)
class SvmModel:
    classes: tuple[int, ...]
    machines: tuple[BinaryMachine, ...]
    training_ids: tuple[str, ...]
    gamma: float
    provenance: Optional[PipelineProvenance] = None


@dataclass(frozen=True)
class CvCell:
    sigma: Optional[float]
    gamma: float
    c: float
    mean_accuracy: float
    fold_accuracies: tuple[float, ...]


@dataclass(frozen=True)
class CvReport:
    sigma_grid: tuple
    gamma_grid: tuple[float, ...]
    c_grid: tuple[float, ...]
    cells: tuple[CvCell, ...]
    selected: CvCell
    folds: tuple[tuple[str, ...], ...]  # trial ids per fold


# ---------------------------------------------------------------------------
# Gram assembly
# ---------------------------------------------------------------------------


def _stacked_logs(descriptors: Sequence[SpdDescriptor]) -> np.ndarray:
    logs = []
    dim = None
    for desc in descriptors:
        if desc.log_matrix is None:
            raise ValueError(
                f"descriptor {desc.trial_id!r} has no cached log matrix; "
                "run regularize_and_log before Gram assembly"
            )
        if dim is None:
            dim = desc.log_matrix.shape[0]
        elif desc.log_matrix.shape[0] != dim:
            raise DimMismatchError(
                f"descriptor {desc.trial_id!r} has dim "
                f"{desc.log_matrix.shape[0]}, expected {dim}"
            )
        logs.append(desc.log_matrix.ravel())
    return np.stack(logs)


def log_sqdist_matrix(descriptors: Sequence[SpdDescriptor]) -> np.ndarray:
    """Pairwise squared Frobenius distances between cached log matrices."""
    vecs = _stacked_logs(descriptors)
    sq = (vecs * vecs).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (vecs @ vecs.T)
    d2 = np.maximum(d2, 0.0)
    np.fill_diagonal(d2, 0.0)
    return 0.5 * (d2 + d2.T)


def _check_psd(values: np.ndarray, what: str) -> None:
    # Cholesky of G + PSD_TOL*I succeeds iff min eigenvalue > -PSD_TOL
    try:
        np.linalg.cholesky(values + PSD_TOL * np.eye(values.shape[0]))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"{what} violates the PSD tolerance {PSD_TOL:g}"
        ) from None


def _gram_from_sqdist(d2: np.ndarray, gamma: float) -> np.ndarray:
    values = np.exp(-gamma * d2)
    _check_psd(values, "log-Euclidean Gram matrix")
    return values


def log_euclidean_gram(descriptors: Sequence[SpdDescriptor], gamma: float,
                       provenance: Optional[PipelineProvenance] = None) -> GramMatrix:
    """Gram matrix exp(-gamma * ||log A - log B||_F^2); unit diagonal, PSD."""
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    d2 = log_sqdist_matrix(descriptors)
    values = _gram_from_sqdist(d2, gamma)
    ids = tuple(d.trial_id for d in descriptors)
    return GramMatrix(ids=ids, values=values, gamma=gamma, provenance=provenance)


def log_linear_gram(descriptors: Sequence[SpdDescriptor],
                    provenance: Optional[PipelineProvenance] = None) -> GramMatrix:
    """Ablation variant: entries <log A, log B> (no unit diagonal)."""
    vecs = _stacked_logs(descriptors)
    values = vecs @ vecs.T
    values = 0.5 * (values + values.T)
    _check_psd(values, "log-linear Gram matrix")
    ids = tuple(d.trial_id for d in descriptors)
    return GramMatrix(ids=ids, values=values, gamma=0.0, provenance=provenance)


def gram_rows_between(test: Sequence[SpdDescriptor],
                      train: Sequence[SpdDescriptor], gamma: float) -> np.ndarray:
    """Prediction-time kernel block: rows = test trials, columns = train."""
    all_vecs = _stacked_logs(list(test) + list(train))
    te = all_vecs[: len(test)]
    tr = all_vecs[len(test):]
    d2 = (
        (te * te).sum(axis=1)[:, None]
        + (tr * tr).sum(axis=1)[None, :]
        - 2.0 * (te @ tr.T)
    )
    return np.exp(-gamma * np.maximum(d2, 0.0))


# ---------------------------------------------------------------------------
# SMO solver (binary, precomputed kernel)
# ---------------------------------------------------------------------------


def _smo_solve(kernel: np.ndarray, y: np.ndarray, c: float,
               tol: float = SMO_TOL) -> tuple[np.ndarray, float]:
    """Soft-margin dual by SMO with maximal-violating-pair selection.

    Minimizes (1/2) a^T Q a - e^T a with Q_ij = y_i y_j K_ij subject to
    0 <= a <= C and y^T a = 0.  Returns (alpha, bias); the decision value
    of a point x is sum_i alpha_i y_i K(x, x_i) + bias.
    """
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    # two kernel rows are read per iteration
    max_iter = max(int(SMO_KERNEL_EVAL_BUDGET // (2 * n)), 100)
    for _ in range(max_iter):
        v = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            break
        vi = np.where(up, v, -np.inf)
        i = int(np.argmax(vi))
        m_up = vi[i]
        vj = np.where(low, v, np.inf)
        j = int(np.argmin(vj))
        m_low = vj[j]
        if m_up - m_low <= tol:
            break
        eta = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        if eta <= 0.0:
            eta = 1e-12
        # E_i - E_j is bias-free and equals m_low - m_up here
        new_aj = alpha[j] + y[j] * (m_low - m_up) / eta
        if y[i] != y[j]:
            lo = max(0.0, alpha[j] - alpha[i])
            hi = min(c, c + alpha[j] - alpha[i])
        else:
            lo = max(0.0, alpha[i] + alpha[j] - c)
            hi = min(c, alpha[i] + alpha[j])
        new_aj = min(max(new_aj, lo), hi)
        d_aj = new_aj - alpha[j]
        if d_aj == 0.0:
            break
        d_ai = -y[i] * y[j] * d_aj
        alpha[i] += d_ai
        alpha[j] = new_aj
        grad += y * (kernel[:, i] * (y[i] * d_ai) + kernel[:, j] * (y[j] * d_aj))
    v = -y * grad
    free = (alpha > 0.0) & (alpha < c)
    if free.any():
        bias = float(v[free].mean())
    else:
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        hi = v[up].max() if up.any() else 0.0
        lo = v[low].min() if low.any() else 0.0
        bias = float(0.5 * (hi + lo))
    return alpha, bias


def svm_train(gram: GramMatrix, labels, c: float) -> SvmModel:
    """One-vs-one SVM over a precomputed Gram matrix.

    Deterministic given a fixed input order.  Supports with alpha below
    1e-12 are dropped; they cannot move a decision value at float64
    resolution.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != len(gram.ids):
        raise ShapeMismatchError(
            f"{labels.size} labels for {len(gram.ids)} Gram rows"
        )
    if not c > 0.0:
        raise ValueError("box constraint c must be positive")
    classes = sorted(int(l) for l in set(labels.tolist()))
    if len(classes) < 2:
        raise DegenerateLabelsError("need at least two classes to train")
    machines = []
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            a, b = classes[ai], classes[bi]
            idx = np.nonzero((labels == a) | (labels == b))[0]
            if not ((labels[idx] == a).any() and (labels[idx] == b).any()):
                raise DegenerateLabelsError(f"pair ({a}, {b}) has an empty side")
            y = np.where(labels[idx] == a, 1.0, -1.0)
            sub = gram.values[np.ix_(idx, idx)]
            alpha, bias = _smo_solve(sub, y, c)
            keep = alpha > 1e-12
            machines.append(
                BinaryMachine(
                    class_a=a,
                    class_b=b,
                    support=idx[keep],
                    coef=(alpha * y)[keep],
                    bias=bias,
                    c=c,
                )
            )
    return SvmModel(
        classes=tuple(classes),
        machines=tuple(machines),
        training_ids=gram.ids,
        gamma=gram.gamma,
        provenance=gram.provenance,
    )


def svm_decision_values(model: SvmModel, gram_rows: np.ndarray) -> np.ndarray:
    """Per-machine decision values; rows = test points, cols = machines."""
    gram_rows = np.asarray(gram_rows, dtype=np.float64)
    if gram_rows.ndim != 2 or gram_rows.shape[1] != len(model.training_ids):
        raise ShapeMismatchError(
            f"kernel block has shape {gram_rows.shape}, expected "
            f"(n_test, {len(model.training_ids)})"
        )
    cols = [
        gram_rows[:, mach.support] @ mach.coef + mach.bias
        for mach in model.machines
    ]
    return np.stack(cols, axis=1)


def svm_predict(model: SvmModel, gram_rows: np.ndarray) -> np.ndarray:
    """Majority vote across the one-vs-one machines.

    Ties go to the class with the largest summed |decision value| among
    the machines it won, then to the smallest label.
    """
    decisions = svm_decision_values(model, gram_rows)
    n_test = decisions.shape[0]
    class_pos = {cls: k for k, cls in enumerate(model.classes)}
    votes = np.zeros((n_test, len(model.classes)), dtype=np.int64)
    strength = np.zeros((n_test, len(model.classes)))
    for col, mach in enumerate(model.machines):
        dec = decisions[:, col]
        wins_a = dec > 0.0
        ia, ib = class_pos[mach.class_a], class_pos[mach.class_b]
        votes[wins_a, ia] += 1
        votes[~wins_a, ib] += 1
        strength[wins_a, ia] += np.abs(dec[wins_a])
        strength[~wins_a, ib] += np.abs(dec[~wins_a])
    best = votes == votes.max(axis=1, keepdims=True)
    tie_key = np.where(best, strength, -np.inf)
    winner = (tie_key == tie_key.max(axis=1, keepdims=True)) & best
    # argmax picks the first (= smallest) label among remaining ties
    picked = np.argmax(winner, axis=1)
    class_arr = np.asarray(model.classes, dtype=np.int64)
    return class_arr[picked]


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

DEFAULT_SIGMA_GRID = (0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-8, 3))
DEFAULT_C_GRID = (1.0, 10.0, 100.0)
DEFAULT_FOLDS = 5


def make_subject_folds(trials: Sequence[SkeletonTrial], n_folds: int = DEFAULT_FOLDS
                       ) -> list[list[int]]:
    """Partition trial indices into folds by subject, round-robin over the
    sorted subject ids.  Subjects are never split across folds, so no
    identity leaks between a fold's train and validation sides."""
    if n_folds < 2:
        raise ValueError("need at least two folds")
    subjects = sorted({t.subject_id for t in trials})
    n_folds = min(n_folds, len(subjects))
    if n_folds < 2:
        raise EmptyFoldError("need trials from at least two subjects")
    groups: dict[int, list[int]] = {s: [] for s in subjects}
    for k, trial in enumerate(trials):
        groups[trial.subject_id].append(k)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for rank, subject in enumerate(subjects):
        folds[rank % n_folds].extend(groups[subject])
    return folds


def _validate_folds(trials, folds) -> None:
    if len(folds) < 2:
        raise ValueError("need at least two folds")
    seen: set[int] = set()
    for k, fold in enumerate(folds):
        if len(fold) == 0:
            raise EmptyFoldError(f"fold {k} is empty")
        overlap = seen.intersection(fold)
        if overlap:
            raise ValueError(f"trial indices {sorted(overlap)} appear in two folds")
        seen.update(fold)
    if seen != set(range(len(trials))):
        raise ValueError("folds do not partition the trial list")
    subject_fold: dict[int, int] = {}
    for k, fold in enumerate(folds):
        for idx in fold:
            s = trials[idx].subject_id
            if subject_fold.setdefault(s, k) != k:
                raise ValueError(f"subject {s} is split across folds")


def cross_validate(trials: Sequence[SkeletonTrial],
                   folds: Sequence[Sequence[int]],
                   cfg: FeatureConfig,
                   kernel: Kernel,
                   sigma_grid: Sequence[float] = DEFAULT_SIGMA_GRID,
                   gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
                   c_grid: Sequence[float] = DEFAULT_C_GRID,
                   probes: Optional[int] = None,
                   eps_scale: float = covariance.DEFAULT_EPS_SCALE) -> CvReport:
    """Grid search over (sigma, gamma, C) with subject-partitioned folds.

    The full pipeline (descriptor -> log -> Gram -> SVM) is evaluated per
    fold and cell; stages that do not depend on a grid axis are computed
    once and reused, which changes nothing observable.  The sigma axis
    applies to the exp-dot kernel's bandwidth and collapses to a single
    pass for kernels without one.  The selected cell maximizes the mean
    fold accuracy; ties break toward the smallest (sigma, gamma, C).
    """
    _validate_folds(trials, folds)
    gammas = tuple(sorted(float(g) for g in gamma_grid))
    cs = tuple(sorted(float(c) for c in c_grid))
    if kernel.name == "expdot":
        sigmas: tuple = tuple(sorted(float(s) for s in sigma_grid))
    else:
        sigmas = (None,)
    labels = np.asarray([t.label for t in trials], dtype=np.int64)
    fold_arrays = [np.asarray(sorted(fold), dtype=np.int64) for fold in folds]
    all_idx = np.arange(len(trials))
    cells = []
    for sigma in sigmas:
        k_cell = dataclasses.replace(kernel, sigma=sigma) if sigma is not None else kernel
        descriptors = [
            covariance.regularize_and_log(
                covariance.kernelized_covariance(
                    k_cell, assemble_trial_matrix(t, cfg), probes
                ),
                eps_scale,
            )
            for t in trials
        ]
        d2 = log_sqdist_matrix(descriptors)
        for gamma in gammas:
            fold_results: dict[float, list[float]] = {c: [] for c in cs}
            for va in fold_arrays:
                tr = np.setdiff1d(all_idx, va)
                gram_tr = GramMatrix(
                    ids=tuple(trials[k].trial_id for k in tr),
                    values=_gram_from_sqdist(d2[np.ix_(tr, tr)], gamma),
                    gamma=gamma,
                )
                rows_va = np.exp(-gamma * d2[np.ix_(va, tr)])
                for c in cs:
                    model = svm_train(gram_tr, labels[tr], c)
                    pred = svm_predict(model, rows_va)
                    fold_results[c].append(float((pred == labels[va]).mean()))
            for c in cs:
                accs = tuple(fold_results[c])
                cells.append(
                    CvCell(
                        sigma=sigma,
                        gamma=gamma,
                        c=c,
                        mean_accuracy=float(np.mean(accs)),
                        fold_accuracies=accs,
                    )
                )
    selected = cells[0]
    for cell in cells[1:]:
        if cell.mean_accuracy > selected.mean_accuracy:
            selected = cell
    fold_ids = tuple(
        tuple(trials[k].trial_id for k in fold) for fold in fold_arrays
    )
    return CvReport(
        sigma_grid=sigmas,
        gamma_grid=gammas,
        c_grid=cs,
        cells=tuple(cells),
        selected=selected,
        folds=fold_ids,
    )


# ---------------------------------------------------------------------------
# persistence ("KSVM1" container)
# ---------------------------------------------------------------------------
#
# Layout, little-endian:
#   magic "KSVM1"
#   gamma f64
#   provenance: flag u8 (0 absent / 1 present); when present:
#     kernel (tag u8, nparam u8, params f64[]), eps_scale f64, probes i32,
#     use_velocity u8, use_acceleration u8,
#     normalization u8 (0 none / 1 center / 2 center-scale),
#     root_joint_index i32
#   n_classes u32, classes i32[]
#   n_train u32, per id: len u32 + UTF-8 bytes
#   n_machines u32, per machine:
#     class_a i32, class_b i32, c f64, bias f64,
#     n_support u32, support u32[], coef f64[]

_NORM_TAGS = {"none": 0, "center": 1, "center-scale": 2}
_NORM_NAMES = {v: k for k, v in _NORM_TAGS.items()}


def save_model(path, model: SvmModel) -> None:
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<d", model.gamma))
    prov = model.provenance
    if prov is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<B", 1))
        buf.write(_pack_kernel(prov.kernel))
        buf.write(struct.pack("<di", prov.eps_scale, prov.probes))
        cfg = prov.feature_config
        buf.write(
            struct.pack(
                "<BBBi",
                int(cfg.use_velocity),
                int(cfg.use_acceleration),
                _NORM_TAGS[cfg.normalization],
                cfg.root_joint_index,
            )
        )
    buf.write(struct.pack("<I", len(model.classes)))
    buf.write(struct.pack(f"<{len(model.classes)}i", *model.classes))
    buf.write(struct.pack("<I", len(model.training_ids)))
    for ident in model.training_ids:
        raw = ident.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    buf.write(struct.pack("<I", len(model.machines)))
    for mach in model.machines:
        buf.write(struct.pack("<iidd", mach.class_a, mach.class_b, mach.c, mach.bias))
        buf.write(struct.pack("<I", mach.support.size))
        buf.write(np.ascontiguousarray(mach.support, dtype="<u4").tobytes())
        buf.write(np.ascontiguousarray(mach.coef, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise MalformedFileError("model file truncated")
    return raw


def load_model(path) -> SvmModel:
    with open(path, "rb") as fh:
        if fh.read(5) != MODEL_MAGIC:
            raise MalformedFileError(f"{path}: bad magic, not a model file")
        (gamma,) = struct.unpack("<d", _read_exact(fh, 8))
        (has_prov,) = struct.unpack("<B", _read_exact(fh, 1))
        provenance = None
        if has_prov:
            kernel = _unpack_kernel(fh)
            eps_scale, probes = struct.unpack("<di", _read_exact(fh, 12))
            vel, acc, norm_tag, root = struct.unpack("<BBBi", _read_exact(fh, 7))
            provenance = PipelineProvenance(
                kernel=kernel,
                eps_scale=eps_scale,
                probes=probes,
                feature_config=FeatureConfig(
                    use_velocity=bool(vel),
                    use_acceleration=bool(acc),
                    normalization=_NORM_NAMES[norm_tag],
                    root_joint_index=root,
                ),
            )
        (n_classes,) = struct.unpack("<I", _read_exact(fh, 4))
        classes = struct.unpack(f"<{n_classes}i", _read_exact(fh, 4 * n_classes))
        (n_train,) = struct.unpack("<I", _read_exact(fh, 4))
        ids = []
        for _ in range(n_train):
            (ln,) = struct.unpack("<I", _read_exact(fh, 4))
            ids.append(_read_exact(fh, ln).decode("utf-8"))
        (n_mach,) = struct.unpack("<I", _read_exact(fh, 4))
        machines = []
        for _ in range(n_mach):
            a, b, c, bias = struct.unpack("<iidd", _read_exact(fh, 24))
            (n_sup,) = struct.unpack("<I", _read_exact(fh, 4))
            support = np.frombuffer(_read_exact(fh, 4 * n_sup), dtype="<u4").astype(
                np.int64
            )
            coef = np.frombuffer(_read_exact(fh, 8 * n_sup), dtype="<f8").astype(
                np.float64
            )
            machines.append(
                BinaryMachine(
                    class_a=a, class_b=b, support=support, coef=coef, bias=bias, c=c
                )
            )
    return SvmModel(
        classes=tuple(int(cl) for cl in classes),
        machines=tuple(machines),
        training_ids=tuple(ids),
        gamma=gamma,
        provenance=provenance,
    )

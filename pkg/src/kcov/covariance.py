"""Covariance descriptors of multivariate time series, classical and kernelized.

A trial is a d x T matrix X whose column t is the feature vector observed
at frame t.  The sampling covariance is S(X) = X P X^T with P the T x T
centering operator (diagonal 1/T, off-diagonal -1/(T^2 - T)); this equals
the familiar unbiased estimator (1/(T-1)) sum_t (x(t)-mu)(x(t)-mu)^T.

The kernelized descriptor replaces raw coordinates by kernel responses
against the canonical basis probes e_1..e_m of the data space: with
K_is = k(x(s), e_i) the descriptor is S(k) = K P K^T.  For kernels of the
dot-product family

    k(x, z) = sum_l a_l <x, z>^l,   a_l >= 0,

the probe response k(x(s), e_i) is a scalar function of the single entry
X_is, so K is an elementwise map of X and the whole construction costs
O(m T + m^2 T) per trial.  With the linear kernel and m = d it reproduces
S(X) exactly; richer kernels let the same d x d matrix capture non-linear
dependencies between coordinates.
"""

from __future__ import annotations

import dataclasses
import io
import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional, Sequence

import numpy as np

from . import linalg
from .errors import (
    DegenerateTrialError,
    DimMismatchError,
    MalformedFileError,
    NonFiniteError,
    ProbeCountExceedsDimError,
)

DESCRIPTOR_MAGIC = b"KCOV1"


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


class Kernel:
    """A symmetric PD dot-product kernel k(x, z) = sum_l a_l <x, z>^l.

    Subclasses fix the coefficient sequence a_l and provide the scalar map
    u -> k restricted to u = <x, z>, which is all the descriptor pipeline
    and the random-feature sampler need.
    """

    name: str = ""

    def scalar(self, u):
        """Evaluate k through the dot product: k(x, z) = scalar(<x, z>)."""
        raise NotImplementedError

    def coefficient(self, degree: int) -> float:
        """Series coefficient a_degree (>= 0 for every degree)."""
        raise NotImplementedError

    def support(self) -> Optional[tuple[int, ...]]:
        """Degrees with a_l > 0, or None when every degree contributes."""
        raise NotImplementedError

    def allowed_degrees(self, degrees: np.ndarray) -> np.ndarray:
        sup = self.support()
        if sup is None:
            return np.ones(degrees.shape, dtype=bool)
        return np.isin(degrees, np.asarray(sup))


@dataclass(frozen=True)
class LinearKernel(Kernel):
    """k(x, z) = <x, z>; the classical covariance in kernel clothing."""

    name = "linear"

    def scalar(self, u):
        return np.array(u, dtype=np.float64)

    def coefficient(self, degree: int) -> float:
        return 1.0 if degree == 1 else 0.0

    def support(self):
        return (1,)


@dataclass(frozen=True)
class PolynomialKernel(Kernel):
    """k(x, z) = <x, z>^degree + offset (offset is the degree-0 coefficient)."""

    degree: int
    offset: float = 0.0

    name = "poly"

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("polynomial degree must be a positive integer")
        if self.offset < 0.0:
            raise ValueError("polynomial offset must be nonnegative")

    def scalar(self, u):
        return np.asarray(u, dtype=np.float64) ** self.degree + self.offset

    def coefficient(self, degree: int) -> float:
        if degree == self.degree:
            return 1.0
        if degree == 0:
            return float(self.offset)
        return 0.0

    def support(self):
        if self.offset > 0.0:
            return (0, self.degree)
        return (self.degree,)


@dataclass(frozen=True)
class ExpDotKernel(Kernel):
    """k(x, z) = exp(<x, z> / sigma^2); a_l = 1 / (sigma^(2l) l!)."""

    sigma: float

    name = "expdot"

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")

    def scalar(self, u):
        return np.exp(np.asarray(u, dtype=np.float64) / (self.sigma * self.sigma))

    def coefficient(self, degree: int) -> float:
        try:
            return 1.0 / (self.sigma ** (2 * degree) * math.factorial(degree))
        except (OverflowError, ZeroDivisionError):
            # sigma^(2l) or l! left float range; finish in log space
            log_c = -2.0 * degree * math.log(self.sigma) - math.lgamma(degree + 1.0)
            if log_c > 709.0:
                return math.inf
            return math.exp(log_c) if log_c > -745.0 else 0.0

    def support(self):
        return None


def kernel_by_name(name: str, *, sigma: float = 1.0, degree: int = 2,
                   offset: float = 0.0) -> Kernel:
    """Build a kernel from its registry name (CLI and persistence tags)."""
    if name == "linear":
        return LinearKernel()
    if name == "poly":
        return PolynomialKernel(degree=degree, offset=offset)
    if name == "expdot":
        return ExpDotKernel(sigma=sigma)
    raise ValueError(f"unknown kernel {name!r} (expected linear, poly or expdot)")


def kernel_eval(kernel: Kernel, x, z) -> float:
    """k(x, z) for two vectors.

    Raises NonFiniteError if the value overflows (e.g. exp-dot on
    unnormalized coordinates), which signals missing normalization
    upstream rather than silently saturating.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape or x.ndim != 1:
        raise DimMismatchError(f"vector shapes differ: {x.shape} vs {z.shape}")
    if not (np.isfinite(x).all() and np.isfinite(z).all()):
        raise NonFiniteError("kernel arguments contain NaN/Inf")
    with np.errstate(over="ignore"):
        value = float(kernel.scalar(float(x @ z)))
    if not math.isfinite(value):
        raise NonFiniteError(
            f"kernel value overflowed for <x,z> = {float(x @ z):.6e}; "
            "normalize the features"
        )
    return value


# ---------------------------------------------------------------------------
# centering operator and trial matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CenteringMatrix:
    """The T x T operator P with P_ss = 1/T and P_st = -1/(T^2 - T), s != t.

    Never stored densely on the production path: right-multiplication by P
    equals subtracting each row's mean and dividing by T - 1, which costs
    O(d T) instead of O(d T^2).  ``dense`` builds the explicit entries and
    exists for oracles and self-checks only.
    """

    frames: int

    def __post_init__(self):
        if self.frames < 2:
            raise DegenerateTrialError("centering operator needs T >= 2 frames")

    def apply(self, m) -> np.ndarray:
        """Return m @ P for any matrix with T columns."""
        m = np.asarray(m, dtype=np.float64)
        if m.shape[-1] != self.frames:
            raise DimMismatchError(
                f"matrix has {m.shape[-1]} columns, centering expects {self.frames}"
            )
        return (m - m.mean(axis=-1, keepdims=True)) / (self.frames - 1)

    def dense(self) -> np.ndarray:
        t = self.frames
        p = np.full((t, t), -1.0 / (t * t - t))
        np.fill_diagonal(p, 1.0 / t)
        return p


def centering_apply(p: CenteringMatrix, m) -> np.ndarray:
    return p.apply(m)


@dataclass(frozen=True)
class TrialMatrix:
    """A d x T feature-by-frame matrix for one trial.

    ``joint_count`` records n when the rows come from stacked 3D joints
    (d is then a multiple of 3n); 0 means synthetic/unknown provenance.
    Covariance estimation additionally requires T >= 2, enforced by the
    descriptor operations so that degenerate trials fail loudly there.
    """

    data: np.ndarray
    joint_count: int = 0
    trial_id: str = ""
    label: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimMismatchError(f"trial matrix must be 2-D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise NonFiniteError(f"trial {self.trial_id!r} contains NaN/Inf entries")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SpdDescriptor:
    """A d x d covariance-style descriptor plus its cached regularized log.

    ``matrix`` is None for records loaded from a descriptor file, which
    persist only the log representation.  ``epsilon`` is the diagonal
    shift that was applied inside the matrix logarithm.
    """

    matrix: Optional[np.ndarray]
    kernel: Kernel
    trial_id: str = ""
    label: int = 0
    epsilon: float = 0.0
    log_matrix: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        ref = self.matrix if self.matrix is not None else self.log_matrix
        return ref.shape[0]


def _as_matrix(x) -> tuple[np.ndarray, str, int, int]:
    if isinstance(x, TrialMatrix):
        return x.data, x.trial_id, x.label, x.joint_count
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimMismatchError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr, "", 0, 0


# ---------------------------------------------------------------------------
# descriptor construction
# ---------------------------------------------------------------------------


def classical_covariance(x) -> SpdDescriptor:
    """Sampling covariance S(X) = X P X^T of a trial matrix.

    Equal to (1/(T-1)) sum_t (x(t) - mu)(x(t) - mu)^T; symmetric PSD.
    """
    data, trial_id, label, _ = _as_matrix(x)
    if data.shape[1] < 2:
        raise DegenerateTrialError(
            f"trial {trial_id!r} has T = {data.shape[1]} < 2 frames"
        )
    p = CenteringMatrix(data.shape[1])
    s = linalg.symmetrize(p.apply(data) @ data.T)
    return SpdDescriptor(matrix=s, kernel=LinearKernel(), trial_id=trial_id,
                         label=label)


def gram_probe_matrix(kernel: Kernel, x, m: Optional[int] = None) -> np.ndarray:
    """The m x T probe response matrix K with K_is = k(x(s), e_i).

    Probes are the first m canonical basis vectors of the d-dimensional
    data space (m defaults to d), so K is the kernel's scalar map applied
    elementwise to the first m rows of X: exp(X_is / sigma^2) for the
    exp-dot kernel, X restricted to m rows for the linear kernel.
    """
    data, trial_id, _, _ = _as_matrix(x)
    d = data.shape[0]
    if m is None:
        m = d
    if m < 1:
        raise ProbeCountExceedsDimError("probe count must be >= 1")
    if m > d:
        raise ProbeCountExceedsDimError(
            f"requested {m} probes but the data space has dimension {d}"
        )
    with np.errstate(over="ignore"):
        k = np.array(kernel.scalar(data[:m]), dtype=np.float64)
    if not np.isfinite(k).all():
        raise NonFiniteError(
            f"probe responses overflowed for trial {trial_id!r}; "
            "normalize the features or increase sigma"
        )
    return k


def kernelized_covariance(kernel: Kernel, x, m: Optional[int] = None) -> SpdDescriptor:
    """Kernelized covariance S(k) = K P K^T with canonical-basis probes.

    Symmetric PSD; with the linear kernel and m = d this equals
    ``classical_covariance`` exactly (same centering path).
    """
    data, trial_id, label, _ = _as_matrix(x)
    if data.shape[1] < 2:
        raise DegenerateTrialError(
            f"trial {trial_id!r} has T = {data.shape[1]} < 2 frames"
        )
    k = gram_probe_matrix(kernel, x, m)
    p = CenteringMatrix(data.shape[1])
    s = linalg.symmetrize(p.apply(k) @ k.T)
    return SpdDescriptor(matrix=s, kernel=kernel, trial_id=trial_id, label=label)


# Trace-relative scale keeps the log regularizer unit-free; the floor makes
# the all-zero descriptor (constant trial) loggable instead of a hard error.
DEFAULT_EPS_SCALE = 1e-5
_TRACE_FLOOR = 1e-12


def regularize_and_log(s: SpdDescriptor, eps_scale: float = DEFAULT_EPS_SCALE) -> SpdDescriptor:
    """Attach log_matrix = logm(matrix + eps I) with eps = eps_scale * trace/d.

    The descriptor of a trial with T <= d frames is rank deficient, so the
    matrix logarithm needs a strictly positive shift; scaling by trace/d
    keeps the shift proportional to the descriptor's energy.
    """
    if eps_scale < 0.0:
        raise ValueError("eps_scale must be nonnegative")
    if s.matrix is None:
        raise ValueError("descriptor has no dense matrix to regularize")
    d = s.matrix.shape[0]
    base = float(np.trace(s.matrix)) / d
    if base <= 0.0:
        base = _TRACE_FLOOR
    epsilon = eps_scale * base
    log_matrix = linalg.logm_spd(s.matrix, epsilon)
    return dataclasses.replace(s, epsilon=epsilon, log_matrix=log_matrix)


# ---------------------------------------------------------------------------
# persistence ("KCOV1" container)
# ---------------------------------------------------------------------------
#
# Layout, all integers little-endian:
#   magic   5 bytes  b"KCOV1"
#   count   u32
#   then per trial:
#     id_len   u32, trial_id UTF-8 bytes
#     label    i32
#     d        u32
#     epsilon  f64
#     ktag     u8   (0 linear, 1 poly, 2 expdot)
#     nparam   u8, params f64 x nparam  (poly: degree, offset; expdot: sigma)
#     payload  f64 x d(d+1)/2   upper triangle of log_matrix, row-major
#
# The payload is the raw IEEE bits of the log matrix, so save/load
# round-trips bit-exactly.

_KERNEL_TAGS = {"linear": 0, "poly": 1, "expdot": 2}


def _pack_kernel(kernel: Kernel) -> bytes:
    if isinstance(kernel, LinearKernel):
        return struct.pack("<BB", 0, 0)
    if isinstance(kernel, PolynomialKernel):
        return struct.pack("<BBdd", 1, 2, float(kernel.degree), kernel.offset)
    if isinstance(kernel, ExpDotKernel):
        return struct.pack("<BBd", 2, 1, kernel.sigma)
    raise ValueError(f"cannot serialize kernel {kernel!r}")


def _unpack_kernel(fh: BinaryIO) -> Kernel:
    tag, nparam = struct.unpack("<BB", _read_exact(fh, 2))
    params = struct.unpack(f"<{nparam}d", _read_exact(fh, 8 * nparam))
    if tag == 0:
        return LinearKernel()
    if tag == 1:
        return PolynomialKernel(degree=int(params[0]), offset=params[1])
    if tag == 2:
        return ExpDotKernel(sigma=params[0])
    raise MalformedFileError(f"unknown kernel tag {tag}")


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise MalformedFileError("descriptor file truncated")
    return buf


def save_descriptors(path, descriptors: Sequence[SpdDescriptor]) -> None:
    """Write the binary descriptor container (log matrices only)."""
    buf = io.BytesIO()
    buf.write(DESCRIPTOR_MAGIC)
    buf.write(struct.pack("<I", len(descriptors)))
    for desc in descriptors:
        if desc.log_matrix is None:
            raise ValueError(
                f"descriptor {desc.trial_id!r} has no cached log matrix; "
                "call regularize_and_log first"
            )
        ident = desc.trial_id.encode("utf-8")
        d = desc.log_matrix.shape[0]
        buf.write(struct.pack("<I", len(ident)))
        buf.write(ident)
        buf.write(struct.pack("<i", desc.label))
        buf.write(struct.pack("<I", d))
        buf.write(struct.pack("<d", desc.epsilon))
        buf.write(_pack_kernel(desc.kernel))
        tri = desc.log_matrix[np.triu_indices(d)]
        buf.write(np.ascontiguousarray(tri, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_descriptors(path) -> list[SpdDescriptor]:
    """Read a descriptor container; records carry log_matrix but no matrix."""
    out: list[SpdDescriptor] = []
    with open(path, "rb") as fh:
        if fh.read(5) != DESCRIPTOR_MAGIC:
            raise MalformedFileError(f"{path}: bad magic, not a descriptor file")
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        for _ in range(count):
            (id_len,) = struct.unpack("<I", _read_exact(fh, 4))
            trial_id = _read_exact(fh, id_len).decode("utf-8")
            (label,) = struct.unpack("<i", _read_exact(fh, 4))
            (d,) = struct.unpack("<I", _read_exact(fh, 4))
            (epsilon,) = struct.unpack("<d", _read_exact(fh, 8))
            kernel = _unpack_kernel(fh)
            n_tri = d * (d + 1) // 2
            tri = np.frombuffer(_read_exact(fh, 8 * n_tri), dtype="<f8").astype(
                np.float64
            )
            log = np.zeros((d, d))
            iu = np.triu_indices(d)
            log[iu] = tri
            log = log + np.triu(log, 1).T
            out.append(
                SpdDescriptor(
                    matrix=None,
                    kernel=kernel,
                    trial_id=trial_id,
                    label=label,
                    epsilon=epsilon,
                    log_matrix=log,
                )
            )
    return out

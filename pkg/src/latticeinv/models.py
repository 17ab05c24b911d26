"""Data models for latticeinv.

Vectors are held as 2-D ``ImageGrid`` arrays (``cols == 1`` for 1-D signals)
and flattened row-major whenever an operator acts on them. Operators are
``scipy.sparse.csr_matrix`` instances with sorted, duplicate-free indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    InconsistentBoundsError,
    InfeasibleRowError,
    ParameterError,
    ShapeMismatchError,
)

SparseMatrix = sp.csr_matrix

# Absolute slack used when validating side constraints built from data.
SIDE_CONSTRAINT_TOL = 1e-9


def canonical_csr(matrix) -> sp.csr_matrix:
    """Return a float64 CSR copy with summed duplicates and sorted indices."""
    result = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
    result.sum_duplicates()
    result.sort_indices()
    if not np.all(np.isfinite(result.data)):
        raise ParameterError("Matrix contains non-finite entries")
    return result


def _linear_keys(matrix: sp.csr_matrix) -> np.ndarray:
    rows = np.repeat(np.arange(matrix.shape[0], dtype=np.int64), np.diff(matrix.indptr))
    return rows * matrix.shape[1] + matrix.indices.astype(np.int64)


def align_patterns(a, b) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Put two matrices on the union of their sparsity patterns.

    Entries stored in only one of the matrices are stored as explicit zeros in
    the other, so both results share ``indptr`` and ``indices``.
    """
    a = canonical_csr(a)
    b = canonical_csr(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Matrix shapes differ: {a.shape} vs {b.shape}")
    m, n = a.shape
    keys_a = _linear_keys(a)
    keys_b = _linear_keys(b)
    union = np.union1d(keys_a, keys_b)

    values_a = np.zeros(union.size)
    values_b = np.zeros(union.size)
    values_a[np.searchsorted(union, keys_a)] = a.data
    values_b[np.searchsorted(union, keys_b)] = b.data

    rows = union // n
    cols = (union % n).astype(np.int32)
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m), out=indptr[1:])

    def build(values: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((values, cols.copy(), indptr.copy()), shape=(m, n))

    return build(values_a), build(values_b)


@dataclass(eq=False)
class ImageGrid:
    """A discretized image or signal.

    1-D signals are stored with shape ``(n, 1)``.
    """

    values: np.ndarray
    value_range: tuple[float, float] = (0.0, 255.0)

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"ImageGrid must be 1-D or 2-D, got {arr.ndim}-D")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ParameterError(f"ImageGrid shape must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("ImageGrid contains non-finite values")
        self.values = arr
        self.value_range = (float(self.value_range[0]), float(self.value_range[1]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_1d(self) -> bool:
        return self.values.shape[1] == 1

    def vector(self) -> np.ndarray:
        """Row-major flattening used by all operators."""
        return self.values.reshape(-1)

    @classmethod
    def from_vector(
        cls,
        vector: np.ndarray,
        shape: tuple[int, int],
        value_range: tuple[float, float] = (0.0, 255.0),
    ) -> ImageGrid:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != shape[0] * shape[1]:
            raise ShapeMismatchError(f"Cannot reshape {vector.size} values to {shape}")
        return cls(vector.reshape(shape), value_range)

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "values": self.values.tolist(),
            "value_range": list(self.value_range),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ImageGrid:
        return cls(
            np.asarray(data.get("values", [[0.0]]), dtype=np.float64),
            tuple(data.get("value_range", (0.0, 255.0))),
        )


def as_grid(value) -> ImageGrid:
    """Coerce arrays and scalars to ImageGrid; pass ImageGrid through."""
    if isinstance(value, ImageGrid):
        return value
    return ImageGrid(np.asarray(value, dtype=np.float64))


@dataclass(eq=False)
class IntervalOperator:
    """Elementwise operator bounds A^l <= A <= A^u on a shared pattern."""

    lower: sp.csr_matrix
    upper: sp.csr_matrix

    def __post_init__(self) -> None:
        self.lower, self.upper = align_patterns(self.lower, self.upper)
        diff = self.upper.data - self.lower.data
        if diff.size and diff.min() < 0:
            bad = int(np.argmin(diff))
            row = int(np.searchsorted(self.lower.indptr, bad, side="right")) - 1
            col = int(self.lower.indices[bad])
            raise InconsistentBoundsError(
                f"Operator lower bound exceeds upper bound by {-diff[bad]:.3e} at ({row}, {col})",
                index=(row, col),
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.lower.shape

    def width(self) -> sp.csr_matrix:
        """A^u - A^l on the shared pattern."""
        return sp.csr_matrix(
            (self.upper.data - self.lower.data, self.lower.indices.copy(), self.lower.indptr.copy()),
            shape=self.shape,
        )

    @classmethod
    def exact(cls, matrix) -> IntervalOperator:
        """Degenerate interval A^l = A^u = A."""
        matrix = canonical_csr(matrix)
        return cls(matrix, matrix.copy())


@dataclass(eq=False)
class BoundedData:
    """Data order interval f^l <= f <= f^u with optional point estimate."""

    lower: ImageGrid
    upper: ImageGrid
    point: ImageGrid | None = None

    def __post_init__(self) -> None:
        self.lower = as_grid(self.lower)
        self.upper = as_grid(self.upper)
        if self.lower.shape != self.upper.shape:
            raise ShapeMismatchError(
                f"Data bounds have different shapes: {self.lower.shape} vs {self.upper.shape}"
            )
        gap = self.upper.vector() - self.lower.vector()
        if gap.min() < 0:
            bad = int(np.argmin(gap))
            raise InconsistentBoundsError(
                f"Data lower bound exceeds upper bound at index {bad}", index=bad
            )
        if self.point is not None:
            self.point = as_grid(self.point)
            if self.point.shape != self.lower.shape:
                raise ShapeMismatchError("Point estimate shape differs from bounds")
            p = self.point.vector()
            if np.any(p < self.lower.vector()) or np.any(p > self.upper.vector()):
                raise InconsistentBoundsError("Point estimate lies outside the data bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return self.lower.shape

    @classmethod
    def exact(cls, f) -> BoundedData:
        f = as_grid(f)
        return cls(f, ImageGrid(f.values.copy(), f.value_range), ImageGrid(f.values.copy(), f.value_range))


@dataclass(eq=False)
class MidpointRepresentation:
    """Norm-based view (A_h, f_delta, h, delta) of interval bounds."""

    operator: sp.csr_matrix
    data: ImageGrid
    operator_radius: float
    data_radius: float

    def __post_init__(self) -> None:
        if self.operator_radius < 0 or self.data_radius < 0:
            raise ParameterError("Midpoint radii must be non-negative")


@dataclass(eq=False)
class SideConstraint:
    """Known linear relation A v = g on the unknown operator."""

    v: ImageGrid
    g: ImageGrid

    def __post_init__(self) -> None:
        self.v = as_grid(self.v)
        self.g = as_grid(self.g)
        if np.any(self.v.vector() < 0):
            raise ParameterError("Side constraint vector v must be non-negative")


@dataclass(eq=False)
class FeasibilityProblem:
    """Interval operator, data bounds and optional side constraint A v = g."""

    op: IntervalOperator
    data: BoundedData
    side_constraint: SideConstraint | None = None

    def __post_init__(self) -> None:
        m, n = self.op.shape
        if self.data.lower.size != m:
            raise ShapeMismatchError(f"Operator has {m} rows but data has {self.data.lower.size} entries")
        if self.side_constraint is None:
            return
        v = self.side_constraint.v.vector()
        g = self.side_constraint.g.vector()
        if v.size != n or g.size != m:
            raise ShapeMismatchError("Side constraint shapes do not match the operator")
        low = self.op.lower @ v
        high = self.op.upper @ v
        slack = SIDE_CONSTRAINT_TOL * (1.0 + np.abs(g))
        bad = np.flatnonzero((low > g + slack) | (g > high + slack))
        if bad.size:
            raise InfeasibleRowError(int(bad[0]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.op.shape


@dataclass(eq=False)
class FeasibilityCheck:
    """Result of a U membership test with per-constraint slacks.

    Slacks are non-negative exactly where the constraint holds:
    ``nonnegativity = u``, ``upper = f^u - A^l u``, ``lower = A^u u - f^l``.
    """

    member: bool
    nonnegativity: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    def violated(self, tol: float = 0.0) -> list[str]:
        names = []
        if self.nonnegativity.min() < -tol:
            names.append("u >= 0")
        if self.upper.min() < -tol:
            names.append("A^l u <= f^u")
        if self.lower.min() < -tol:
            names.append("A^u u >= f^l")
        return names


@dataclass(eq=False)
class WitnessPair:
    """Operator and data inside the bounds that reproduce u exactly."""

    alpha: np.ndarray
    realized_operator: sp.csr_matrix
    realized_data: ImageGrid


@dataclass
class RowVerdict:
    """Closed-form U** quantities for one operator row.

    ``k_star`` and ``k_star_star`` are original column indices of the
    breakpoints u_j / v_j at which phi and psi attain their minima
    (-1 for a row with no stored entries).
    """

    k_star: int
    phi_min: float
    k_star_star: int
    psi_min: float

    def member(self, tol: float = 1e-9) -> bool:
        return self.phi_min >= -tol and self.psi_min >= -tol


@dataclass
class MembershipReport:
    """Per-row verdict of the U** test."""

    member: bool
    k_star: list[int] = field(default_factory=list)
    phi_min: list[float] = field(default_factory=list)
    k_star_star: list[int] = field(default_factory=list)
    psi_min: list[float] = field(default_factory=list)
    failing_rows: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "member": self.member,
            "k_star": self.k_star,
            "phi_min": self.phi_min,
            "k_star_star": self.k_star_star,
            "psi_min": self.psi_min,
            "failing_rows": self.failing_rows,
        }

    @classmethod
    def from_dict(cls, data: dict) -> MembershipReport:
        return cls(
            member=data.get("member", False),
            k_star=data.get("k_star", []),
            phi_min=data.get("phi_min", []),
            k_star_star=data.get("k_star_star", []),
            psi_min=data.get("psi_min", []),
            failing_rows=data.get("failing_rows", []),
        )


@dataclass(eq=False)
class FarkasCertificate:
    """Vector y = (y1, ..., y4, y5, ..., y_{n+4}) proving the alpha-system infeasible."""

    y: np.ndarray

    @property
    def sign_product(self) -> float:
        """(y1 - y2)(y3 - y4); negative for every valid certificate."""
        y = self.y
        return float((y[0] - y[1]) * (y[2] - y[3]))


@dataclass
class SamplePoint:
    """One classified point of the 2-D feasible-set sampler."""

    u1: float
    u2: float
    in_U: bool
    in_Ustarstar: bool

    def to_row(self) -> list:
        return [repr(self.u1), repr(self.u2), int(self.in_U), int(self.in_Ustarstar)]


@dataclass(eq=False)
class Solution:
    """Reconstruction plus solver diagnostics.

    ``constraint_slacks`` holds (min u, max(A^l u - f^u), max(f^l - A^u u));
    the first is >= 0 and the other two are <= 0 for a feasible u.
    """

    u: ImageGrid
    iterations_used: int
    primal_dual_residual: float
    constraint_slacks: tuple[float, float, float]
    objective_value: float
    converged: bool = False

    def max_violation(self) -> float:
        low, over, under = self.constraint_slacks
        return max(0.0, -low, over, under)

    def to_dict(self) -> dict:
        return {
            "iterations_used": self.iterations_used,
            "primal_dual_residual": self.primal_dual_residual,
            "constraint_slacks": list(self.constraint_slacks),
            "objective_value": self.objective_value,
            "converged": self.converged,
        }

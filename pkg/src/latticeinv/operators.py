"""Blur operators, operator perturbation, and interval/midpoint bounds.

Two-dimensional operators act on images flattened row-major and are built as
Kronecker products of one-dimensional operators (rows then columns).
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateRowError, InconsistentBoundsError, ParameterError, ShapeMismatchError
from .models import (
    BoundedData,
    ImageGrid,
    IntervalOperator,
    MidpointRepresentation,
    align_patterns,
    as_grid,
    canonical_csr,
)

logger = logging.getLogger(__name__)

BOUNDARIES = ("dirichlet", "neumann")


def normalize_shape(shape) -> tuple[int, int]:
    """Turn ``n`` or ``(rows, cols)`` into a positive ``(rows, cols)`` pair."""
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape), 1)
    shape = tuple(int(s) for s in shape)
    if len(shape) == 1:
        shape = (shape[0], 1)
    if len(shape) != 2 or min(shape) <= 0:
        raise ParameterError(f"Shape must be positive, got {shape}")
    return shape


def truncation_radius(sigma: float) -> int:
    """Kernel half-width ceil(4 sigma), at least 1."""
    return max(1, math.ceil(4.0 * sigma))


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Sampled, normalized Gaussian on offsets -radius..radius."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = truncation_radius(sigma) if radius is None else int(radius)
    if radius < 0:
        raise ParameterError(f"Kernel radius must be non-negative, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-offsets**2 / (2.0 * sigma**2))
    return kernel / kernel.sum()


def _convolution_1d(n: int, kernel: np.ndarray, boundary: str) -> sp.csr_matrix:
    radius = kernel.size // 2
    offsets = np.arange(-radius, radius + 1)
    rows = np.repeat(np.arange(n), kernel.size)
    cols = rows + np.tile(offsets, n)
    data = np.tile(kernel, n)
    if boundary == "neumann":
        # Replicate padding: taps past the edge land on the edge sample
        cols = np.clip(cols, 0, n - 1)
    else:
        keep = (cols >= 0) & (cols < n)
        rows, cols, data = rows[keep], cols[keep], data[keep]
    matrix = canonical_csr(sp.coo_matrix((data, (rows, cols)), shape=(n, n)))
    matrix.eliminate_zeros()
    return matrix


def gaussian_blur_matrix(
    shape,
    sigma: float,
    boundary: str = "neumann",
    radius: int | None = None,
) -> sp.csr_matrix:
    """Sparse convolution matrix of a truncated, normalized Gaussian.

    Args:
        shape: ``n`` for a 1-D signal or ``(rows, cols)`` for an image.
        sigma: Standard deviation in samples.
        boundary: ``"dirichlet"`` (zero outside) or ``"neumann"`` (replicate).
        radius: Truncation half-width; defaults to ceil(4 sigma).

    Neumann rows sum to 1. Dirichlet rows near the edge lose the mass that
    falls outside the domain and are not renormalized.
    """
    if boundary not in BOUNDARIES:
        raise ParameterError(f"Unknown boundary '{boundary}' (expected one of {BOUNDARIES})")
    rows, cols = normalize_shape(shape)
    kernel = gaussian_kernel(sigma, radius)
    blur_rows = _convolution_1d(rows, kernel, boundary)
    if cols == 1:
        logger.debug("1-D blur: n=%d sigma=%g radius=%d", rows, sigma, kernel.size // 2)
        return blur_rows
    blur_cols = _convolution_1d(cols, kernel, boundary)
    logger.debug("2-D blur: %dx%d sigma=%g radius=%d", rows, cols, sigma, kernel.size // 2)
    return canonical_csr(sp.kron(blur_rows, blur_cols, format="csr"))


def band_pattern(shape, radius: int) -> sp.csr_matrix:
    """Ones on every (i, j) within ``radius`` pixels along each axis."""
    rows, cols = normalize_shape(shape)
    if radius < 0:
        raise ParameterError(f"Window radius must be non-negative, got {radius}")

    def band(n: int) -> sp.csr_matrix:
        offsets = list(range(-min(radius, n - 1), min(radius, n - 1) + 1))
        return sp.diags([np.ones(n - abs(k)) for k in offsets], offsets, shape=(n, n), format="csr")

    if cols == 1:
        return canonical_csr(band(rows))
    return canonical_csr(sp.kron(band(rows), band(cols), format="csr"))


def perturb_operator(
    A,
    relative_level: float,
    rng_seed: int | None = 0,
    window: sp.spmatrix | None = None,
) -> sp.csr_matrix:
    """Add uniform noise to the entries of A and clamp at zero.

    With ``d = relative_level * max(A)``, each entry becomes
    ``max(a_ij + r_ij * d, 0)`` with ``r_ij ~ U[-1, 1]``. Entries inside
    ``window`` but outside A's support are perturbed too (starting from 0).
    """
    if relative_level < 0:
        raise ParameterError(f"relative_level must be non-negative, got {relative_level}")
    A = canonical_csr(A)
    if relative_level == 0:
        return A
    if window is not None:
        A, _ = align_patterns(A, window)

    d = relative_level * (A.data.max() if A.nnz else 0.0)
    rng = np.random.default_rng(rng_seed)
    noise = rng.uniform(-1.0, 1.0, size=A.nnz)
    A.data = np.maximum(A.data + noise * d, 0.0)
    A.eliminate_zeros()
    logger.debug("Perturbed operator: d=%g, %d stored entries", d, A.nnz)
    return A


def threshold_and_normalize(A_tilde, threshold: float) -> sp.csr_matrix:
    """Zero entries below ``threshold``, then scale each row to sum to 1."""
    if threshold < 0:
        raise ParameterError(f"threshold must be non-negative, got {threshold}")
    A = canonical_csr(A_tilde)
    A.data[A.data < threshold] = 0.0
    A.eliminate_zeros()

    sums = np.asarray(A.sum(axis=1)).ravel()
    empty = np.flatnonzero(sums <= 0)
    if empty.size:
        raise DegenerateRowError(int(empty[0]))
    A.data /= np.repeat(sums, np.diff(A.indptr))
    return A


def interval_from_estimate(
    A_tilde,
    d: float,
    support_aware: bool = True,
    window: sp.spmatrix | None = None,
) -> IntervalOperator:
    """Bounds a^l = max(a - d, 0), a^u = a + d around an operator estimate.

    With ``support_aware`` the upper bound is zero wherever the estimate is
    zero. Otherwise every entry of ``window`` outside the support gets the
    interval [0, d].
    """
    if d < 0:
        raise ParameterError(f"d must be non-negative, got {d}")
    base = canonical_csr(A_tilde)
    if support_aware:
        base.eliminate_zeros()
    else:
        if window is None:
            raise ParameterError("A window pattern is required when support_aware is false")
        base, _ = align_patterns(base, window)

    lower = base.copy()
    upper = base.copy()
    lower.data = np.maximum(base.data - d, 0.0)
    upper.data = base.data + d
    return IntervalOperator(lower, upper)


def data_bounds(f, c: float) -> BoundedData:
    """Uniform data interval [f - c, f + c] around the measurement."""
    if c < 0:
        raise ParameterError(f"c must be non-negative, got {c}")
    f = as_grid(f)
    return BoundedData(
        ImageGrid(f.values - c, f.value_range),
        ImageGrid(f.values + c, f.value_range),
        ImageGrid(f.values.copy(), f.value_range),
    )


def max_row_sum(matrix) -> float:
    """Operator norm induced by the infinity norm."""
    matrix = sp.csr_matrix(matrix)
    if matrix.nnz == 0:
        return 0.0
    return float(np.asarray(abs(matrix).sum(axis=1)).max())


def midpoint_representation(op: IntervalOperator, data: BoundedData) -> MidpointRepresentation:
    """Centre and radius (A_h, f_delta, h, delta) of the interval bounds."""
    if data.lower.size != op.shape[0]:
        raise ShapeMismatchError(f"Operator has {op.shape[0]} rows but data has {data.lower.size} entries")
    centre = op.lower.copy()
    centre.data = 0.5 * (op.lower.data + op.upper.data)
    h = 0.5 * max_row_sum(op.width())

    f_lo = data.lower.vector()
    f_hi = data.upper.vector()
    f_delta = ImageGrid(0.5 * (data.lower.values + data.upper.values), data.lower.value_range)
    delta = 0.5 * float(np.max(f_hi - f_lo))
    return MidpointRepresentation(centre, f_delta, h, delta)


def monotonize_bounds(seq: Sequence[BoundedData] | Sequence[IntervalOperator]) -> list:
    """Running sup of lower bounds and running inf of upper bounds.

    Point estimates of ``BoundedData`` are clipped into the tightened
    interval. Steps are reported 1-based in errors.
    """
    if not seq:
        raise ParameterError("monotonize_bounds needs a non-empty sequence")
    if all(isinstance(item, BoundedData) for item in seq):
        return _monotonize_data(seq)
    if all(isinstance(item, IntervalOperator) for item in seq):
        return _monotonize_operators(seq)
    raise ParameterError("Sequence must contain only BoundedData or only IntervalOperator")


def _monotonize_data(seq: Sequence[BoundedData]) -> list[BoundedData]:
    shape = seq[0].shape
    low = np.full(seq[0].lower.size, -np.inf)
    high = np.full(seq[0].lower.size, np.inf)
    result = []
    for step, item in enumerate(seq, start=1):
        if item.shape != shape:
            raise ShapeMismatchError(f"Step {step} has shape {item.shape}, expected {shape}")
        low = np.maximum(low, item.lower.vector())
        high = np.minimum(high, item.upper.vector())
        bad = np.flatnonzero(low > high)
        if bad.size:
            raise InconsistentBoundsError(
                f"Lower bound exceeds upper bound at step {step}, index {int(bad[0])}",
                step=step,
                index=int(bad[0]),
            )
        vr = item.lower.value_range
        point = None
        if item.point is not None:
            point = ImageGrid.from_vector(np.clip(item.point.vector(), low, high), shape, vr)
        result.append(
            BoundedData(ImageGrid.from_vector(low, shape, vr), ImageGrid.from_vector(high, shape, vr), point)
        )
    return result


def _monotonize_operators(seq: Sequence[IntervalOperator]) -> list[IntervalOperator]:
    shape = seq[0].shape
    low = high = None
    result = []
    for step, item in enumerate(seq, start=1):
        if item.shape != shape:
            raise ShapeMismatchError(f"Step {step} has shape {item.shape}, expected {shape}")
        low = item.lower if low is None else low.maximum(item.lower)
        high = item.upper if high is None else high.minimum(item.upper)
        gap = canonical_csr(high - low)
        if gap.nnz and gap.data.min() < 0:
            bad = int(np.argmin(gap.data))
            row = int(np.searchsorted(gap.indptr, bad, side="right")) - 1
            col = int(gap.indices[bad])
            raise InconsistentBoundsError(
                f"Operator lower bound exceeds upper bound at step {step}, entry ({row}, {col})",
                step=step,
                index=(row, col),
            )
        result.append(IntervalOperator(low, high))
    return result


def add_uniform_noise(f, c: float, rng_seed: int | None = 0) -> ImageGrid:
    """Add i.i.d. noise uniform on [-c, c]."""
    if c < 0:
        raise ParameterError(f"c must be non-negative, got {c}")
    f = as_grid(f)
    rng = np.random.default_rng(rng_seed)
    return ImageGrid(f.values + rng.uniform(-c, c, size=f.shape), f.value_range)


def apply_operator(A, u) -> ImageGrid:
    """Apply a matrix to a grid; square operators keep the grid shape."""
    u = as_grid(u)
    A = sp.csr_matrix(A)
    if A.shape[1] != u.size:
        raise ShapeMismatchError(f"Operator has {A.shape[1]} columns but grid has {u.size} values")
    out = A @ u.vector()
    shape = u.shape if A.shape[0] == u.size else (A.shape[0], 1)
    return ImageGrid.from_vector(out, shape, u.value_range)

"""Membership in the feasible sets U, U_{h,delta} and U**, witnesses, and the Farkas oracle.

For a row with lower/upper entries ``a^l, a^u``, side constraint ``a.v = g`` and
exact datum ``f``, the point ``u`` is explained by some admissible row iff

    phi(z) = sum_j (z - r_j) v_j [a^u_j if r_j <= z else a^l_j] + f - g z
    psi(z) = sum_j (r_j - z) v_j [a^u_j if r_j >= z else a^l_j] + g z - f

are non-negative at their minima, where ``r_j = u_j / v_j``. Both are convex
and piecewise linear with breakpoints at the ratios, so each minimum sits at
the breakpoint where the sorted prefix sums of ``(a^u - a^l) v`` first reach
``g - a^l.v`` (phi) or ``a^u.v - g`` (psi).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleRowError, NotInUError, ShapeMismatchError, UnsupportedInputError
from .formats import write_csv
from .lp import LinearProgram, solve_lp
from .models import (
    BoundedData,
    FarkasCertificate,
    FeasibilityCheck,
    FeasibilityProblem,
    IntervalOperator,
    MembershipReport,
    MidpointRepresentation,
    RowVerdict,
    SamplePoint,
    SideConstraint,
    WitnessPair,
    as_grid,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
SAMPLE_CSV_HEADER = ["u1", "u2", "in_U", "in_Ustarstar"]
BOUNDARY_CSV_HEADER = ["line", "u1", "u2"]
DEFAULT_REGION = ((0.0, 25.0), (0.0, 25.0))


def _vector(u, size: int, name: str) -> np.ndarray:
    vec = as_grid(u).vector()
    if vec.size != size:
        raise ShapeMismatchError(f"{name} has {vec.size} entries, expected {size}")
    return vec


def member_U(u, problem: FeasibilityProblem, tol: float = DEFAULT_TOL) -> FeasibilityCheck:
    """Test u >= 0, A^l u <= f^u and A^u u >= f^l componentwise."""
    x = _vector(u, problem.shape[1], "u")
    upper = problem.data.upper.vector() - problem.op.lower @ x
    lower = problem.op.upper @ x - problem.data.lower.vector()
    member = bool(x.min() >= -tol and upper.min(initial=np.inf) >= -tol and lower.min(initial=np.inf) >= -tol)
    return FeasibilityCheck(member, x.copy(), upper, lower)


def member_U_norm(u, rep: MidpointRepresentation, tol: float = DEFAULT_TOL) -> bool:
    """Test ||A_h u - f_delta||_inf <= delta + h ||u||_inf."""
    x = _vector(u, rep.operator.shape[1], "u")
    residual = rep.operator @ x - rep.data.vector()
    if residual.size != rep.data.size:
        raise ShapeMismatchError("Midpoint operator and data sizes differ")
    bound = rep.data_radius + rep.operator_radius * np.abs(x).max()
    return bool(np.abs(residual).max(initial=0.0) <= bound + tol)


def construct_witness(u, problem: FeasibilityProblem, tol: float = 0.0) -> WitnessPair:
    """Build A in [A^l, A^u] and f in [f^l, f^u] with A u = f.

    Row t uses A_t = (1 - alpha_t) A^l_t + alpha_t A^u_t with
    ``alpha_t = max((f^l_t - (A^l u)_t) / ((A^u u)_t - (A^l u)_t), 0)`` and
    ``alpha_t = 0`` when the denominator vanishes.
    """
    check = member_U(u, problem, tol)
    if not check.member:
        raise NotInUError(check.violated(tol))
    x = _vector(u, problem.shape[1], "u")
    op = problem.op

    low = op.lower @ x
    high = op.upper @ x
    spread = high - low
    alpha = np.zeros_like(spread)
    active = spread > 0
    alpha[active] = np.maximum((problem.data.lower.vector()[active] - low[active]) / spread[active], 0.0)
    np.clip(alpha, 0.0, 1.0, out=alpha)

    width = op.width()
    realized = sp.csr_matrix(
        (op.lower.data + np.repeat(alpha, np.diff(op.lower.indptr)) * width.data,
         op.lower.indices.copy(), op.lower.indptr.copy()),
        shape=op.shape,
    )
    f = realized @ x
    grid = problem.data.lower
    return WitnessPair(alpha, realized, grid.from_vector(f, grid.shape, grid.value_range))


def phi_value(z: float, u_row, v_row, a_l_row, a_u_row, f: float, g: float) -> float:
    """Evaluate phi(z) for one row."""
    u, v, a_l, a_u = (np.asarray(x, dtype=np.float64) for x in (u_row, v_row, a_l_row, a_u_row))
    r = u / v
    coeff = np.where(r <= z, a_u, a_l)
    return float(np.sum((z - r) * v * coeff) + f - g * z)


def psi_value(z: float, u_row, v_row, a_l_row, a_u_row, f: float, g: float) -> float:
    """Evaluate psi(z) for one row."""
    u, v, a_l, a_u = (np.asarray(x, dtype=np.float64) for x in (u_row, v_row, a_l_row, a_u_row))
    r = u / v
    coeff = np.where(r >= z, a_u, a_l)
    return float(np.sum((r - z) * v * coeff) + g * z - f)


def ustarstar_row(u_row, v_row, a_l_row, a_u_row, f: float, g: float) -> RowVerdict:
    """Closed-form minima of phi and psi for one row.

    Arrays hold the row's stored entries only; the returned breakpoint
    indices refer to positions in these arrays.
    """
    u, v, a_l, a_u = (np.asarray(x, dtype=np.float64) for x in (u_row, v_row, a_l_row, a_u_row))
    if u.size == 0:
        return RowVerdict(-1, float(f), -1, float(-f))
    if np.any(v <= 0):
        raise UnsupportedInputError("Closed-form U** test requires v > 0 on the row support")

    ratios = u / v
    order = np.argsort(ratios, kind="stable")
    prefix = np.cumsum(((a_u - a_l) * v)[order])
    last = u.size - 1

    phi_target = g - a_l @ v
    psi_target = a_u @ v - g
    k_star = min(int(np.searchsorted(prefix, phi_target, side="left")), last)
    k_star_star = min(int(np.searchsorted(prefix, psi_target, side="left")), last)

    z_phi = ratios[order[k_star]]
    z_psi = ratios[order[k_star_star]]
    return RowVerdict(
        int(order[k_star]),
        phi_value(z_phi, u, v, a_l, a_u, f, g),
        int(order[k_star_star]),
        psi_value(z_psi, u, v, a_l, a_u, f, g),
    )


def member_Ustarstar(u, problem: FeasibilityProblem, tol: float = DEFAULT_TOL) -> MembershipReport:
    """Test whether u is explained exactly by some A in the box with A v = g.

    Requires a side constraint with v > 0, exact data (f^l = f^u) and u in U.
    """
    if problem.side_constraint is None:
        raise UnsupportedInputError("U** test needs a side constraint A v = g")
    f = problem.data.lower.vector()
    if np.any(problem.data.upper.vector() != f):
        raise UnsupportedInputError("U** test is defined for exact data only (f^l = f^u)")
    v = problem.side_constraint.v.vector()
    g = problem.side_constraint.g.vector()
    if np.any(v <= 0):
        raise UnsupportedInputError(f"v has a zero component at index {int(np.argmin(v))}")

    check = member_U(u, problem, tol)
    if not check.member:
        raise NotInUError(check.violated(tol))
    x = _vector(u, problem.shape[1], "u")

    lower, upper = problem.op.lower, problem.op.upper
    report = MembershipReport(member=True)
    for i in range(problem.shape[0]):
        start, end = lower.indptr[i], lower.indptr[i + 1]
        cols = lower.indices[start:end]
        verdict = ustarstar_row(x[cols], v[cols], lower.data[start:end], upper.data[start:end], f[i], g[i])
        report.k_star.append(int(cols[verdict.k_star]) if verdict.k_star >= 0 else -1)
        report.phi_min.append(verdict.phi_min)
        report.k_star_star.append(int(cols[verdict.k_star_star]) if verdict.k_star_star >= 0 else -1)
        report.psi_min.append(verdict.psi_min)
        if not verdict.member(tol):
            report.failing_rows.append(i)
    report.member = not report.failing_rows
    return report


def system_alpha_beta(u_row, v_row, a_l_row, a_u_row, f: float, g: float) -> tuple[np.ndarray, np.ndarray]:
    """Equality system in (alpha, beta) >= 0 with alpha + beta = 1.

    Rows: alpha-part of the u-equation, beta-part of the u-equation, the same
    two for v, then one ``alpha_j + beta_j = 1`` row per entry.
    """
    u, v, a_l, a_u = (np.asarray(x, dtype=np.float64) for x in (u_row, v_row, a_l_row, a_u_row))
    n = u.size
    width = a_u - a_l
    M = np.zeros((n + 4, 2 * n))
    M[0, :n] = width * u
    M[1, n:] = width * u
    M[2, :n] = width * v
    M[3, n:] = width * v
    M[4:, :n] = np.eye(n)
    M[4:, n:] = np.eye(n)
    rhs = np.concatenate([
        [f - a_l @ u, a_u @ u - f, g - a_l @ v, a_u @ v - g],
        np.ones(n),
    ])
    return M, rhs


def _solve_alpha_beta(u_row, v_row, a_l_row, a_u_row, f, g) -> tuple[bool, np.ndarray | None]:
    M, rhs = system_alpha_beta(u_row, v_row, a_l_row, a_u_row, f, g)
    if M.shape[1] == 0:
        bad = np.flatnonzero(np.abs(rhs) > DEFAULT_TOL)
        if not bad.size:
            return True, None
        y = np.zeros(rhs.size)
        y[bad[0]] = -np.sign(rhs[bad[0]])
        return False, y
    result = solve_lp(LinearProgram(np.zeros(M.shape[1]), A_eq=M, b_eq=rhs))
    return not result.infeasible, result.certificate


def farkas_oracle(u_row, v_row, a_l_row, a_u_row, f_i: float, g_i: float) -> bool:
    """Decide by phase-1 simplex whether some alpha in [0, 1]^n explains the row."""
    feasible, _ = _solve_alpha_beta(u_row, v_row, a_l_row, a_u_row, f_i, g_i)
    return feasible


def farkas_certificate(u_row, v_row, a_l_row, a_u_row, f_i: float, g_i: float) -> FarkasCertificate | None:
    """Certificate y of length n + 4 when the row system is infeasible, else None."""
    feasible, y = _solve_alpha_beta(u_row, v_row, a_l_row, a_u_row, f_i, g_i)
    if feasible or y is None:
        return None
    return FarkasCertificate(y)


def member_Ustarstar_oracle(u, problem: FeasibilityProblem, tol: float = DEFAULT_TOL) -> bool:
    """U** membership decided row by row with the LP oracle (u must be in U)."""
    if problem.side_constraint is None:
        raise UnsupportedInputError("U** test needs a side constraint A v = g")
    if not member_U(u, problem, tol).member:
        return False
    x = _vector(u, problem.shape[1], "u")
    f = problem.data.lower.vector()
    v = problem.side_constraint.v.vector()
    g = problem.side_constraint.g.vector()
    lower, upper = problem.op.lower, problem.op.upper
    for i in range(problem.shape[0]):
        start, end = lower.indptr[i], lower.indptr[i + 1]
        cols = lower.indices[start:end]
        if not farkas_oracle(x[cols], v[cols], lower.data[start:end], upper.data[start:end], f[i], g[i]):
            return False
    return True


def toy_set_problem(seed: int = 0) -> tuple[FeasibilityProblem, np.ndarray]:
    """Random one-row, two-unknown problem and the point that generated its data.

    A^l is drawn in [0, 1]^2, A^u in [1, 2]^2, u0 in [0, 25]^2; the data and
    g come from the midpoint matrix with v = (1, 1).
    """
    rng = np.random.default_rng(seed)
    a_l = rng.uniform(0.0, 1.0, size=(1, 2))
    a_u = rng.uniform(1.0, 2.0, size=(1, 2))
    u0 = rng.uniform(0.0, 25.0, size=2)
    mid = 0.5 * (a_l + a_u)
    v = np.ones(2)
    f = mid @ u0
    g = mid @ v
    problem = FeasibilityProblem(
        IntervalOperator(sp.csr_matrix(a_l), sp.csr_matrix(a_u)),
        BoundedData.exact(f),
        SideConstraint(v, g),
    )
    return problem, u0


def extreme_rows_2d(problem: FeasibilityProblem) -> tuple[np.ndarray, float]:
    """End points of the segment of admissible rows for a one-row, two-unknown problem.

    The rows a in [a^l, a^u] with a.v = g form a segment; a.u is affine along
    it, so U** is the part of the positive quadrant lying between the two
    lines a.u = f traced by the end points. Returns the 2x2 array of end rows
    and f.
    """
    if problem.shape != (1, 2):
        raise UnsupportedInputError(f"Analytic U** boundary needs a 1x2 operator, got {problem.shape}")
    if problem.side_constraint is None:
        raise UnsupportedInputError("Analytic U** boundary needs a side constraint A v = g")
    f = float(problem.data.lower.vector()[0])
    if float(problem.data.upper.vector()[0]) != f:
        raise UnsupportedInputError("Analytic U** boundary is defined for exact data only (f^l = f^u)")
    v = problem.side_constraint.v.vector()
    g = float(problem.side_constraint.g.vector()[0])
    if np.any(v <= 0):
        raise UnsupportedInputError(f"v has a zero component at index {int(np.argmin(v))}")

    a_l = problem.op.lower.toarray()[0]
    a_u = problem.op.upper.toarray()[0]
    # a2 = (g - a1 v1) / v2 must stay inside [a^l_2, a^u_2]
    lo = max(a_l[0], (g - a_u[1] * v[1]) / v[0])
    hi = min(a_u[0], (g - a_l[1] * v[1]) / v[0])
    if lo > hi:
        raise InfeasibleRowError(0)
    ends = np.array([[a1, (g - a1 * v[0]) / v[1]] for a1 in (lo, hi)])
    return ends, f


def in_Ustarstar_2d(point, problem: FeasibilityProblem, tol: float = DEFAULT_TOL) -> bool:
    """Closed-form U** test for the one-row, two-unknown case."""
    ends, f = extreme_rows_2d(problem)
    x = _vector(point, 2, "u")
    if np.any(x < -tol):
        return False
    low, high = sorted(ends @ x)
    return low - tol <= f <= high + tol


def boundary_points_2d(
    problem: FeasibilityProblem,
    region: Sequence[Sequence[float]] = DEFAULT_REGION,
    count: int = 200,
) -> list[tuple[int, float, float]]:
    """Points of the two lines bounding U**, clipped to ``region`` and u >= 0."""
    ends, f = extreme_rows_2d(problem)
    (x0, x1), (y0, y1) = region
    reach = float(np.hypot(max(abs(x0), abs(x1)), max(abs(y0), abs(y1))))
    rows: list[tuple[int, float, float]] = []
    for line, a in enumerate(ends):
        norm = float(a @ a)
        if norm == 0.0:
            continue
        base = f * a / norm
        direction = np.array([a[1], -a[0]]) / np.sqrt(norm)
        span = reach + float(np.linalg.norm(base))
        for t in np.linspace(-span, span, count):
            u1, u2 = base + t * direction
            if x0 <= u1 <= x1 and y0 <= u2 <= y1 and u1 >= 0 and u2 >= 0:
                rows.append((line, float(u1), float(u2)))
    return rows


def write_boundary_csv(
    path: Path,
    problem: FeasibilityProblem,
    region: Sequence[Sequence[float]] = DEFAULT_REGION,
    count: int = 200,
) -> None:
    """Write the analytic U** boundary with header ``line,u1,u2``."""
    points = boundary_points_2d(problem, region, count)
    write_csv(path, [BOUNDARY_CSV_HEADER] + [[line, repr(u1), repr(u2)] for line, u1, u2 in points])


def classify_point(point, problem: FeasibilityProblem, tol: float = DEFAULT_TOL) -> SamplePoint:
    """Flag a 2-D point as in U and in U**."""
    point = np.asarray(point, dtype=np.float64)
    in_u = member_U(point, problem, tol).member
    in_uss = in_u and member_Ustarstar(point, problem, tol).member
    return SamplePoint(float(point[0]), float(point[1]), in_u, in_uss)


@dataclass
class SampleProgress:
    """Progress update while classifying sample points."""

    completed: int
    total: int


def _classify_all(
    points: np.ndarray,
    problem: FeasibilityProblem,
    max_workers: int,
    progress_callback: Callable[[SampleProgress], None] | None,
) -> list[SamplePoint]:
    if problem.shape[1] != 2:
        raise UnsupportedInputError(f"Sampler needs a 2-D unknown, got {problem.shape[1]}")
    results: list[SamplePoint | None] = [None] * len(points)
    total = len(points)
    completed = 0
    with ThreadPoolExecutor(max_workers=max(1, min(max_workers, 10))) as executor:
        future_to_index = {
            executor.submit(classify_point, point, problem): i
            for i, point in enumerate(points)
        }
        for future in as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
            completed += 1
            if progress_callback:
                progress_callback(SampleProgress(completed=completed, total=total))
    return results


def sample_feasible_set_2d(
    problem: FeasibilityProblem,
    n_samples: int,
    region: Sequence[Sequence[float]] = DEFAULT_REGION,
    rng_seed: int | None = 0,
    extra_points: Sequence[Sequence[float]] = (),
    max_workers: int = 4,
    progress_callback: Callable[[SampleProgress], None] | None = None,
) -> list[SamplePoint]:
    """Classify uniformly drawn points of ``region``; ``extra_points`` come first."""
    rng = np.random.default_rng(rng_seed)
    (x0, x1), (y0, y1) = region
    drawn = np.column_stack([rng.uniform(x0, x1, n_samples), rng.uniform(y0, y1, n_samples)])
    points = np.vstack([np.asarray(extra_points, dtype=np.float64).reshape(-1, 2), drawn])
    samples = _classify_all(points, problem, max_workers, progress_callback)
    logger.info(
        "Sampled %d points: %d in U, %d in U**",
        len(samples), sum(s.in_U for s in samples), sum(s.in_Ustarstar for s in samples),
    )
    return samples


def sample_grid_2d(
    problem: FeasibilityProblem,
    resolution: int = 200,
    region: Sequence[Sequence[float]] = DEFAULT_REGION,
    max_workers: int = 4,
    progress_callback: Callable[[SampleProgress], None] | None = None,
) -> list[SamplePoint]:
    """Classify a regular ``resolution x resolution`` grid over ``region``."""
    (x0, x1), (y0, y1) = region
    xs, ys = np.meshgrid(np.linspace(x0, x1, resolution), np.linspace(y0, y1, resolution))
    points = np.column_stack([xs.ravel(), ys.ravel()])
    return _classify_all(points, problem, max_workers, progress_callback)


def write_samples_csv(path: Path, samples: Sequence[SamplePoint]) -> None:
    """Write sampler output with header ``u1,u2,in_U,in_Ustarstar``."""
    write_csv(path, [SAMPLE_CSV_HEADER] + [s.to_row() for s in samples])

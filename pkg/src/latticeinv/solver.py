"""Primal-dual solver for total variation minimization over the interval feasible set.

Solves

    min  TV(u) + gamma ||u||_2   s.t.  u >= 0,  A^l u <= f^u,  A^u u >= f^l

with a relaxed primal-dual hybrid gradient scheme on the split
``K = [grad; A^l; A^u]``. The dual blocks are projected onto the TV dual
ball, onto ``{q >= 0}`` shifted by ``f^u`` and onto ``{r <= 0}`` shifted by
``f^l``; the primal step projects onto ``u >= 0`` and then shrinks by the
l2 norm. Iterates are averaged over restart epochs and the primal weight,
which sets the balance between tau and sigma, adapts at each restart.
"""

from __future__ import annotations

import csv
import logging
from contextlib import ExitStack
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .config import SolverConfig
from .errors import InfeasibilityError, ParameterError, ShapeMismatchError, UnsupportedInputError
from .lp import LinearProgram, solve_lp
from .models import FeasibilityProblem, ImageGrid, IntervalOperator, Solution, as_grid
from .operators import data_bounds, normalize_shape

logger = logging.getLogger(__name__)

POWER_ITERATIONS = 50
STEP_SAFETY = 1.05
# Absolute constraint slack required before a run counts as converged
FEASIBILITY_TOL = 1e-6
TRACE_HEADER = ["iteration", "objective", "residual", "min_u", "max_upper_violation", "max_lower_violation"]
# Dense simplex reformulation is only meant for small oracle instances
MAX_LP_UNKNOWNS = 64
# Restart when the fixed-point residual drops below these fractions of its
# value at the last restart, or when the epoch exceeds this share of the run
RESTART_SUFFICIENT = 0.2
RESTART_NECESSARY = 0.8
RESTART_ARTIFICIAL = 0.36
WEIGHT_FLOOR = 1e-10


def _forward_difference(n: int) -> sp.csr_matrix:
    """n x n forward differences, last row zero (Neumann)."""
    if n == 1:
        return sp.csr_matrix((1, 1))
    main = -np.ones(n)
    main[-1] = 0.0
    return sp.diags([main, np.ones(n - 1)], [0, 1], shape=(n, n), format="csr")


def gradient_operator(shape) -> sp.csr_matrix:
    """Stacked forward-difference gradient for a row-major grid.

    A 1-D signal gets one block (n rows); an image gets the vertical block
    followed by the horizontal block, each with one row per pixel.
    """
    rows, cols = normalize_shape(shape)
    if cols == 1:
        return _forward_difference(rows)
    vertical = sp.kron(_forward_difference(rows), sp.identity(cols), format="csr")
    horizontal = sp.kron(sp.identity(rows), _forward_difference(cols), format="csr")
    return sp.vstack([vertical, horizontal], format="csr")


def _tv_from_gradient(p: np.ndarray, n: int, variant: str) -> float:
    if variant == "anisotropic":
        return float(np.abs(p).sum())
    components = p.reshape(-1, n)
    return float(np.sqrt((components**2).sum(axis=0)).sum())


def tv_value(u, variant: str = "isotropic") -> float:
    """Total variation from forward differences.

    Isotropic sums the per-pixel Euclidean norm of the gradient, anisotropic
    sums absolute differences; both reduce to sum |u_{i+1} - u_i| in 1-D.
    """
    if variant not in ("isotropic", "anisotropic"):
        raise ParameterError(f"Unknown TV variant '{variant}'")
    u = as_grid(u)
    return _tv_from_gradient(gradient_operator(u.shape) @ u.vector(), u.size, variant)


def estimate_operator_norm(K, iterations: int = POWER_ITERATIONS, seed: int | None = 0) -> float:
    """Spectral norm of K by power iteration on K^T K."""
    K = sp.csr_matrix(K)
    if K.nnz == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.shape[1])
    x /= np.linalg.norm(x)
    KT = K.T.tocsr()
    estimate = 0.0
    for _ in range(iterations):
        y = KT @ (K @ x)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        estimate = norm
        x = y / norm
    return float(np.sqrt(estimate))


def _project_tv_ball(p: np.ndarray, n: int, variant: str) -> np.ndarray:
    if variant == "anisotropic":
        return np.clip(p, -1.0, 1.0)
    components = p.reshape(-1, n)
    norms = np.maximum(1.0, np.sqrt((components**2).sum(axis=0)))
    return (components / norms).ravel()


def _prox_primal(x: np.ndarray, weight: float) -> np.ndarray:
    """argmin_{u >= 0} weight ||u||_2 + ||u - x||^2 / 2."""
    x = np.maximum(x, 0.0)
    norm = np.linalg.norm(x)
    if norm <= weight:
        return np.zeros_like(x)
    return (1.0 - weight / norm) * x


def _unknown_shape(problem: FeasibilityProblem, shape) -> tuple[int, int]:
    m, n = problem.shape
    if shape is not None:
        shape = normalize_shape(shape)
    elif m == n:
        shape = problem.data.shape
    else:
        shape = (n, 1)
    if shape[0] * shape[1] != n:
        raise ShapeMismatchError(f"Grid shape {shape} does not match {n} unknowns")
    return shape


def constraint_slacks(u: np.ndarray, problem: FeasibilityProblem) -> tuple[float, float, float]:
    """(min u, max(A^l u - f^u), max(f^l - A^u u)) for a flattened u."""
    over = problem.op.lower @ u - problem.data.upper.vector()
    under = problem.data.lower.vector() - problem.op.upper @ u
    return float(u.min()), float(over.max(initial=-np.inf)), float(under.max(initial=-np.inf))


def _violation(slacks: tuple[float, float, float]) -> float:
    low, over, under = slacks
    return max(0.0, -low, over, under)


def initial_point(problem: FeasibilityProblem, how: str = "backprojection") -> np.ndarray:
    """Midpoint data back-projected by the midpoint operator, clamped at zero."""
    n = problem.shape[1]
    if how == "zeros":
        return np.zeros(n)
    centre = 0.5 * (problem.op.lower + problem.op.upper)
    f_mid = 0.5 * (problem.data.lower.vector() + problem.data.upper.vector())
    return np.maximum(centre.T @ f_mid, 0.0)


def _step_sizes(weight: float, L: float) -> tuple[float, float]:
    """tau and sigma with tau * sigma * L^2 < 1 and tau / sigma = weight^2."""
    return weight / (STEP_SAFETY * L), 1.0 / (weight * STEP_SAFETY * L)


class _PrimalDual:
    """Stacked operator ``K = [grad; A^l; A^u]`` and one PDHG step on it."""

    def __init__(self, problem: FeasibilityProblem, grad: sp.csr_matrix, variant: str, gamma: float):
        n_grad, m = grad.shape[0], problem.shape[0]
        self.n = problem.shape[1]
        self.K = sp.vstack([grad, problem.op.lower, problem.op.upper], format="csr")
        self.KT = self.K.T.tocsr()
        self.grad_rows = slice(0, n_grad)
        self.upper_rows = slice(n_grad, n_grad + m)
        self.lower_rows = slice(n_grad + m, n_grad + 2 * m)
        self.f_upper = problem.data.upper.vector()
        self.f_lower = problem.data.lower.vector()
        self.variant = variant
        self.gamma = gamma

    def step(self, u, y, Ku, KTy, tau: float, sigma: float):
        u_new = _prox_primal(u - tau * KTy, tau * self.gamma)
        Ku_new = self.K @ u_new
        y_step = y + sigma * (2.0 * Ku_new - Ku)
        y_new = np.empty_like(y)
        y_new[self.grad_rows] = _project_tv_ball(y_step[self.grad_rows], self.n, self.variant)
        y_new[self.upper_rows] = np.maximum(y_step[self.upper_rows] - sigma * self.f_upper, 0.0)
        y_new[self.lower_rows] = np.minimum(y_step[self.lower_rows] - sigma * self.f_lower, 0.0)
        return u_new, y_new, Ku_new, self.KT @ y_new

    def fixed_point_residual(self, u, y, tau: float, sigma: float) -> float:
        """Length of one step from (u, y), measured in the PDHG metric."""
        u_new, y_new, _, _ = self.step(u, y, self.K @ u, self.KT @ y, tau, sigma)
        du, dy = u - u_new, y - y_new
        value = du @ du / tau + dy @ dy / sigma - 2.0 * float((self.K @ du) @ dy)
        return float(np.sqrt(max(value, 0.0)))

    def slacks(self, u, Ku) -> tuple[float, float, float]:
        over = Ku[self.upper_rows] - self.f_upper
        under = self.f_lower - Ku[self.lower_rows]
        return float(u.min()), float(over.max(initial=-np.inf)), float(under.max(initial=-np.inf))

    def objective(self, u, Ku) -> float:
        return _tv_from_gradient(Ku[self.grad_rows], self.n, self.variant) + self.gamma * float(np.linalg.norm(u))


class _RestartState:
    """Running average and reference point of the current restart epoch."""

    def __init__(self, u: np.ndarray, y: np.ndarray, residual: float):
        self.count = 0
        self.reset(u, y, residual)

    def reset(self, u: np.ndarray, y: np.ndarray, residual: float) -> None:
        self.anchor_u, self.anchor_y = u.copy(), y.copy()
        self.sum_u, self.sum_y = np.zeros_like(u), np.zeros_like(y)
        self.length = 0
        self.last_residual = residual
        self.previous_candidate = np.inf

    def accumulate(self, u: np.ndarray, y: np.ndarray) -> None:
        self.sum_u += u
        self.sum_y += y
        self.length += 1

    def candidate(self, pd: _PrimalDual, u, y, tau: float, sigma: float):
        """The average or the current iterate, whichever is closer to a fixed point."""
        avg_u, avg_y = self.sum_u / self.length, self.sum_y / self.length
        avg_residual = pd.fixed_point_residual(avg_u, avg_y, tau, sigma)
        current_residual = pd.fixed_point_residual(u, y, tau, sigma)
        if avg_residual < current_residual:
            return avg_u, avg_y, avg_residual
        return u.copy(), y.copy(), current_residual

    def should_restart(self, residual: float, iteration: int) -> bool:
        if residual <= RESTART_SUFFICIENT * self.last_residual:
            return True
        if RESTART_NECESSARY * self.last_residual >= residual > self.previous_candidate:
            return True
        if self.length >= RESTART_ARTIFICIAL * iteration:
            return True
        self.previous_candidate = residual
        return False

    def updated_weight(self, u: np.ndarray, y: np.ndarray, weight: float, smoothing: float) -> float:
        """Log-space blend of the old weight and the epoch's primal/dual travel ratio."""
        primal = float(np.linalg.norm(u - self.anchor_u))
        dual = float(np.linalg.norm(y - self.anchor_y))
        if primal <= WEIGHT_FLOOR or dual <= WEIGHT_FLOOR:
            return weight
        return float(np.exp(smoothing * np.log(primal / dual) + (1.0 - smoothing) * np.log(weight)))


def solve_constrained_tv(
    problem: FeasibilityProblem,
    config: SolverConfig | None = None,
    shape=None,
    initial: np.ndarray | None = None,
) -> Solution:
    """Minimize TV(u) + gamma ||u||_2 over the interval feasible set.

    Args:
        problem: Interval operator and data bounds.
        config: Solver settings; defaults to ``SolverConfig()``.
        shape: Grid shape of u; defaults to the data shape for square
            operators and a column otherwise.
        initial: Starting point overriding ``config.initialization``.

    With ``config.restart_every > 0`` the iteration runs in epochs: every
    ``restart_every`` steps the running average and the current iterate are
    compared by their fixed-point residual, and the iteration restarts from
    the better one once that residual has dropped enough. At each restart
    the primal weight, the square root of tau / sigma, is moved towards
    the ratio of primal to dual travel in the last epoch.

    Returns a ``Solution``; ``converged`` is True only when the residual is
    below ``config.tolerance`` and every constraint holds within
    ``FEASIBILITY_TOL`` in absolute terms. Otherwise u is the iterate with
    the smallest residual.
    """
    config = config or SolverConfig()
    config.validate()
    shape = _unknown_shape(problem, shape)
    n = problem.shape[1]

    pd = _PrimalDual(problem, gradient_operator(shape), config.tv_variant, config.gamma)
    L = estimate_operator_norm(pd.K, seed=config.seed)
    if L == 0.0:
        raise UnsupportedInputError("Stacked operator is zero")
    weight = config.step_ratio
    tau, sigma = _step_sizes(weight, L)
    rho = config.over_relaxation

    u = initial_point(problem, config.initialization) if initial is None else np.asarray(initial, float).ravel()
    if u.size != n:
        raise ShapeMismatchError(f"Initial point has {u.size} values, expected {n}")
    y = np.zeros(pd.K.shape[0])
    Ku = pd.K @ u
    KTy = np.zeros(n)

    logger.info(
        "PDHG: %d unknowns, %d constraints, ||K|| ~ %.4g, tv=%s, gamma=%g, restart every %d",
        n, 2 * problem.shape[0], L, config.tv_variant, config.gamma, config.restart_every,
    )

    restarts = _RestartState(u, y, pd.fixed_point_residual(u, y, tau, sigma)) if config.restart_every else None
    best_u, best_residual = u.copy(), np.inf
    best_slacks = constraint_slacks(u, problem)
    converged = False
    iteration = 0

    with ExitStack() as stack:
        writer = None
        if config.trace_path:
            path = Path(config.trace_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            handle = stack.enter_context(open(path, "w", newline="", encoding="utf-8"))
            writer = csv.writer(handle, lineterminator="\r\n")
            writer.writerow(TRACE_HEADER)

        for iteration in range(1, config.max_iterations + 1):
            u_new, y_new, Ku_new, KTy_new = pd.step(u, y, Ku, KTy, tau, sigma)

            primal_res = np.linalg.norm((u - u_new) / tau - (KTy - KTy_new))
            dual_res = np.linalg.norm((y - y_new) / sigma - (Ku - Ku_new))
            residual = max(
                primal_res / max(1.0, np.linalg.norm(KTy_new)),
                dual_res / max(1.0, np.linalg.norm(Ku_new)),
            )
            slacks = pd.slacks(u_new, Ku_new)

            if writer is not None:
                writer.writerow([iteration, repr(pd.objective(u_new, Ku_new)), repr(residual), *map(repr, slacks)])
            if config.log_every and iteration % config.log_every == 0:
                logger.debug(
                    "iter %d: objective %.6g, residual %.3e, violation %.3e, weight %.3g",
                    iteration, pd.objective(u_new, Ku_new), residual, _violation(slacks), weight,
                )

            if residual < best_residual:
                best_u, best_residual, best_slacks = u_new.copy(), residual, slacks
            if residual < config.tolerance and _violation(slacks) <= FEASIBILITY_TOL:
                converged = True
                best_u, best_residual, best_slacks = u_new, residual, slacks
                break

            u = u + rho * (u_new - u)
            y = y + rho * (y_new - y)
            Ku = Ku + rho * (Ku_new - Ku)
            KTy = KTy + rho * (KTy_new - KTy)

            if restarts is None:
                continue
            restarts.accumulate(u, y)
            if restarts.length % config.restart_every:
                continue
            candidate = restarts.candidate(pd, u, y, tau, sigma)
            if not restarts.should_restart(candidate[2], iteration):
                continue
            u, y = candidate[0], candidate[1]
            if config.adaptive_weight:
                weight = restarts.updated_weight(u, y, weight, config.weight_smoothing)
                tau, sigma = _step_sizes(weight, L)
            Ku, KTy = pd.K @ u, pd.KT @ y
            restarts.reset(u, y, pd.fixed_point_residual(u, y, tau, sigma))
            restarts.count += 1
            logger.debug("restart %d at iteration %d, weight %.3g", restarts.count, iteration, weight)

    if converged:
        logger.info("PDHG converged after %d iterations (residual %.3e)", iteration, best_residual)
    else:
        logger.warning(
            "PDHG stopped at the iteration cap (%d); best residual %.3e, violation %.3e",
            config.max_iterations, best_residual, _violation(best_slacks),
        )

    value_range = problem.data.lower.value_range
    objective = tv_value(ImageGrid.from_vector(best_u, shape, value_range), config.tv_variant)
    objective += config.gamma * float(np.linalg.norm(best_u))
    return Solution(
        u=ImageGrid.from_vector(best_u, shape, value_range),
        iterations_used=iteration,
        primal_dual_residual=float(best_residual),
        constraint_slacks=best_slacks,
        objective_value=objective,
        converged=converged,
    )


def solve_residual_linf(A, f, c: float, config: SolverConfig | None = None, shape=None) -> Solution:
    """min TV(u) + gamma ||u||_2  s.t.  u >= 0, ||A u - f||_inf <= c."""
    problem = FeasibilityProblem(IntervalOperator.exact(A), data_bounds(f, c))
    return solve_constrained_tv(problem, config, shape=shape)


def solve_tv_lp(problem: FeasibilityProblem, shape=None) -> tuple[np.ndarray, float]:
    """Anisotropic TV over the feasible set as a linear program.

    Variables are u >= 0 and one t >= |(grad u)_k| per difference; the
    objective is sum t. Returns (u, optimal TV).
    """
    shape = _unknown_shape(problem, shape)
    n = problem.shape[1]
    if n > MAX_LP_UNKNOWNS:
        raise UnsupportedInputError(f"LP reformulation is limited to {MAX_LP_UNKNOWNS} unknowns, got {n}")
    D = gradient_operator(shape).toarray()
    D = D[np.any(D != 0, axis=1)]
    k = D.shape[0]
    A_l = problem.op.lower.toarray()
    A_u = problem.op.upper.toarray()
    m = A_l.shape[0]

    A_ub = np.block([
        [D, -np.eye(k)],
        [-D, -np.eye(k)],
        [A_l, np.zeros((m, k))],
        [-A_u, np.zeros((m, k))],
    ])
    b_ub = np.concatenate([np.zeros(2 * k), problem.data.upper.vector(), -problem.data.lower.vector()])
    c = np.concatenate([np.zeros(n), np.ones(k)])
    result = solve_lp(LinearProgram(c, A_ub=A_ub, b_ub=b_ub))
    if result.infeasible:
        raise InfeasibilityError("Feasible set of the TV linear program is empty")
    if not result.optimal:
        raise UnsupportedInputError(f"TV linear program is {result.status}")
    return result.x[:n], float(result.value)

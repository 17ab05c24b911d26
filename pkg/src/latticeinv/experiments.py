"""End-to-end experiment pipeline: phantom, blur, noise, bounds, solve, score."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .config import ExperimentConfig, SolverConfig, save_resolved_config
from .errors import LatticeInvError
from .formats import write_grid, write_matrix
from .lattice_sets import (
    classify_point,
    in_Ustarstar_2d,
    toy_set_problem,
    member_U,
    member_Ustarstar,
    sample_feasible_set_2d,
    sample_grid_2d,
    write_boundary_csv,
    write_samples_csv,
)
from .metrics import psnr, ssim
from .models import FeasibilityProblem, ImageGrid, IntervalOperator, Solution
from .operators import (
    add_uniform_noise,
    apply_operator,
    band_pattern,
    data_bounds,
    gaussian_blur_matrix,
    interval_from_estimate,
    max_row_sum,
    midpoint_representation,
    perturb_operator,
    threshold_and_normalize,
    truncation_radius,
)
from .paths import REPORT_FILE, RESOLVED_CONFIG_FILE, atomic_json_write, ensure_dir
from .phantoms import generate_phantom
from .solver import FEASIBILITY_TOL, solve_constrained_tv, solve_residual_linf
from .tightening import tighten_bounds

logger = logging.getLogger(__name__)

SAMPLES_FILE = "samples.csv"
BOUNDARY_FILE = "ustarstar_boundary.csv"


@dataclass
class ExperimentReport:
    """Metrics, diagnostics and artifact paths of one experiment run.

    ``partial`` is set when at least one variant failed; its error message
    is kept in ``failures`` and the other variants are still reported.
    """

    scenario: str
    seed: int
    config: dict
    metrics: dict[str, dict] = field(default_factory=dict)
    data_metrics: dict[str, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)
    partial: bool = False

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "config": self.config,
            "metrics": self.metrics,
            "data_metrics": self.data_metrics,
            "diagnostics": self.diagnostics,
            "artifacts": self.artifacts,
            "failures": self.failures,
            "partial": self.partial,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentReport:
        return cls(
            scenario=data["scenario"],
            seed=data.get("seed", 0),
            config=data.get("config", {}),
            metrics=data.get("metrics", {}),
            data_metrics=data.get("data_metrics", {}),
            diagnostics=data.get("diagnostics", {}),
            artifacts=data.get("artifacts", []),
            failures=data.get("failures", {}),
            partial=data.get("partial", False),
        )


@dataclass(eq=False)
class DeblurSetup:
    """Everything the variants share: truth, operators, data and bounds."""

    truth: ImageGrid
    operator: sp.csr_matrix
    estimate: sp.csr_matrix
    data: ImageGrid
    noise_level: float
    problem: FeasibilityProblem


def _stage(callback: Callable[[str], None] | None, message: str) -> None:
    logger.info(message)
    if callback:
        callback(message)


def build_operators(config: ExperimentConfig, shape) -> tuple[sp.csr_matrix, sp.csr_matrix, IntervalOperator]:
    """Blur matrix A, normalized estimate Ã and the interval operator around Ã.

    The estimate is A perturbed by ``operator_level * max A`` inside a band
    window, thresholded at the same level and row-normalized. A zero level
    leaves A untouched.
    """
    blur = config.blur
    radius = blur.radius if blur.radius is not None else truncation_radius(blur.sigma_samples)
    A = gaussian_blur_matrix(shape, blur.sigma_samples, boundary=blur.boundary, radius=radius)
    window = band_pattern(shape, radius + config.bounds.window_margin)

    level = config.noise.operator_level
    if level > 0:
        perturbed = perturb_operator(A, level, rng_seed=config.seed + 1, window=window)
        estimate = threshold_and_normalize(perturbed, level * A.data.max())
    else:
        estimate = A.copy()

    d = config.d_level * (estimate.data.max() if estimate.nnz else 0.0)
    op = interval_from_estimate(estimate, d, support_aware=config.bounds.support_aware, window=window)
    if config.bounds.tighten:
        ones = np.ones(op.shape[1])
        op = tighten_bounds(op, ones, np.ones(op.shape[0]))
    logger.debug("Operator bounds: d=%g, %d stored entries", d, op.lower.nnz)
    return A, estimate, op


def prepare_deblur(config: ExperimentConfig) -> DeblurSetup:
    """Phantom, blurred noisy data and the interval feasibility problem."""
    truth = generate_phantom(config.phantom, config.shape, config.phantom_path)
    A, estimate, op = build_operators(config, truth.shape)

    clean = apply_operator(A, truth)
    if config.noise.data_level_mode == "relative":
        c = config.noise.data_level * float(np.abs(truth.values).max())
    else:
        c = config.noise.data_level
    data = add_uniform_noise(clean, c, rng_seed=config.seed)
    problem = FeasibilityProblem(op, data_bounds(data, c))
    return DeblurSetup(truth, A, estimate, data, c, problem)


def _variant_config(config: ExperimentConfig, name: str, out_dir: Path) -> SolverConfig:
    solver = replace(config.solver, trace_path=str(out_dir / f"trace_{name}.csv"))
    if name == "interval_isotropic":
        solver = replace(solver, tv_variant="isotropic")
    elif name == "interval_anisotropic":
        solver = replace(solver, tv_variant="anisotropic")
    return solver


def solve_variant(name: str, setup: DeblurSetup, config: ExperimentConfig, out_dir: Path) -> Solution:
    """Solve one reconstruction variant.

    exact: ||A u - f||_inf <= c with the true blur.
    noisy: ||Ã u - f||_inf <= C c with the perturbed estimate.
    interval*: the interval feasible set built around Ã.
    """
    solver = _variant_config(config, name, out_dir)
    shape = setup.truth.shape
    if name == "exact":
        return solve_residual_linf(setup.operator, setup.data, setup.noise_level, solver, shape=shape)
    if name == "noisy":
        c = setup.noise_level * config.residual_scale
        return solve_residual_linf(setup.estimate, setup.data, c, solver, shape=shape)
    return solve_constrained_tv(setup.problem, solver, shape=shape)


def _score(u: ImageGrid, truth: ImageGrid) -> dict[str, float]:
    return {"psnr": psnr(u, truth), "ssim": ssim(u, truth)}


def _run_deblur(
    config: ExperimentConfig,
    report: ExperimentReport,
    out_dir: Path,
    max_workers: int,
    progress_callback: Callable[[str], None] | None,
) -> LatticeInvError | None:
    _stage(progress_callback, "Building phantom, data and operator bounds")
    setup = prepare_deblur(config)
    report.artifacts.append(str(write_grid(out_dir / "truth", setup.truth)))
    report.artifacts.append(str(write_grid(out_dir / "data", setup.data)))

    rep = midpoint_representation(setup.problem.op, setup.problem.data)
    report.data_metrics = _score(setup.data, setup.truth)
    report.diagnostics = {
        "c": setup.noise_level,
        "operator_radius": rep.operator_radius,
        "data_radius": rep.data_radius,
        "truth_in_U": member_U(setup.truth, setup.problem, FEASIBILITY_TOL).member,
    }
    if not report.diagnostics["truth_in_U"]:
        logger.warning("The true image is outside the feasible set; the bounds are too narrow")

    variants = list(config.variants)
    first_error: LatticeInvError | None = None
    with ThreadPoolExecutor(max_workers=max(1, min(max_workers, len(variants) or 1))) as executor:
        future_to_name = {
            executor.submit(solve_variant, name, setup, config, out_dir): name
            for name in variants
        }
        for future in as_completed(future_to_name):
            name = future_to_name[future]
            try:
                solution = future.result()
            except LatticeInvError as e:
                logger.error("Variant %s failed: %s", name, e)
                report.failures[name] = str(e)
                first_error = first_error or e
                continue
            entry = _score(solution.u, setup.truth)
            entry.update(solution.to_dict())
            if name.startswith("interval"):
                entry["in_U"] = member_U(solution.u, setup.problem, FEASIBILITY_TOL).member
            entry["reconstruction"] = str(write_grid(out_dir / f"u_{name}", solution.u))
            entry["trace"] = str(out_dir / f"trace_{name}.csv")
            report.metrics[name] = entry
            _stage(progress_callback, f"{name}: PSNR {entry['psnr']:.2f} dB, SSIM {entry['ssim']:.3f}")

    # Keep the report in the configured variant order
    report.metrics = {name: report.metrics[name] for name in variants if name in report.metrics}
    return first_error


def _run_feasible2d(
    config: ExperimentConfig,
    report: ExperimentReport,
    out_dir: Path,
    progress_callback: Callable[[str], None] | None,
) -> None:
    settings = config.feasible_set
    problem, u0 = toy_set_problem(settings.problem_seed)
    _stage(progress_callback, "Classifying sample points")
    if settings.grid_resolution:
        samples = sample_grid_2d(
            problem, settings.grid_resolution, region=settings.region, max_workers=settings.max_workers
        )
    else:
        samples = sample_feasible_set_2d(
            problem,
            settings.n_samples,
            region=settings.region,
            rng_seed=config.seed,
            extra_points=[u0],
            max_workers=settings.max_workers,
        )
    path = out_dir / SAMPLES_FILE
    write_samples_csv(path, samples)
    report.artifacts.append(str(path))
    boundary = out_dir / BOUNDARY_FILE
    write_boundary_csv(boundary, problem, region=settings.region)
    report.artifacts.append(str(boundary))

    generator = classify_point(u0, problem)
    report.diagnostics = {
        "u0": u0.tolist(),
        "u0_in_U": generator.in_U,
        "u0_in_Ustarstar": generator.in_Ustarstar,
        "u0_report": member_Ustarstar(u0, problem).to_dict(),
        "n_points": len(samples),
        "n_in_U": sum(s.in_U for s in samples),
        "n_in_Ustarstar": sum(s.in_Ustarstar for s in samples),
        "n_analytic_mismatch": sum(
            s.in_Ustarstar != in_Ustarstar_2d((s.u1, s.u2), problem) for s in samples
        ),
    }


def _run_tighten(
    config: ExperimentConfig,
    report: ExperimentReport,
    out_dir: Path,
    progress_callback: Callable[[str], None] | None,
) -> None:
    _stage(progress_callback, "Tightening operator bounds with A e = e")
    loose_config = replace(config, bounds=replace(config.bounds, tighten=False))
    shape = generate_phantom(config.phantom, config.shape, config.phantom_path).shape
    _, _, op = build_operators(loose_config, shape)
    n, m = op.shape[1], op.shape[0]
    tight = tighten_bounds(op, np.ones(n), np.ones(m))

    before = op.width().data
    after = tight.width().data
    for name, matrix in (("lower", tight.lower), ("upper", tight.upper)):
        path = out_dir / f"{name}_tightened.mtx"
        write_matrix(path, matrix, comment=f"tightened {name} operator bound")
        report.artifacts.append(str(path))
    report.diagnostics = {
        "entries": int(before.size),
        "tightened_entries": int(np.count_nonzero(after < before)),
        "width_before": float(before.sum()),
        "width_after": float(after.sum()),
        "h_before": 0.5 * max_row_sum(op.width()),
        "h_after": 0.5 * max_row_sum(tight.width()),
    }


def run_experiment(
    config: ExperimentConfig,
    max_workers: int = 1,
    progress_callback: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Run one configured experiment and write its artifacts.

    Writes the resolved config, reconstructions (CSV for 1-D, PGM for 2-D),
    per-variant solver traces and ``report.json`` into ``config.output_dir``.
    A failing variant is recorded in the report, which is written before
    the first such error is re-raised.
    """
    config.validate()
    out_dir = ensure_dir(Path(config.output_dir))
    save_resolved_config(out_dir / RESOLVED_CONFIG_FILE, config)
    report = ExperimentReport(scenario=config.scenario, seed=config.seed, config=config.to_dict())
    logger.info("Running %s experiment (seed %d) into %s", config.scenario, config.seed, out_dir)

    error = None
    if config.scenario in ("deblur1d", "deblur2d"):
        error = _run_deblur(config, report, out_dir, max_workers, progress_callback)
    elif config.scenario == "feasible2d":
        _run_feasible2d(config, report, out_dir, progress_callback)
    else:
        _run_tighten(config, report, out_dir, progress_callback)

    report.partial = bool(report.failures)
    atomic_json_write(out_dir / REPORT_FILE, report.to_dict())
    if error is not None:
        raise error
    return report

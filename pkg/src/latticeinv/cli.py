"""CLI commands for latticeinv."""

import logging
import math
import sys
from contextlib import contextmanager
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from .config import PRESETS, ExperimentConfig, get_preset, load_experiment_config
from .errors import InfeasibilityError, LatticeInvError
from .experiments import run_experiment
from .formats import read_grid, read_matrix, write_grid, write_matrix
from .metrics import SSIMParams, psnr, ssim
from .models import IntervalOperator
from .operators import max_row_sum
from .paths import DEFAULT_LOG_LEVEL, REPORT_FILE
from .phantoms import KINDS, generate_phantom
from .tightening import tighten_bounds

console = Console()
err_console = Console(stderr=True)

EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def setup_logging(verbose: bool = False) -> None:
    """Route library logging through rich on stderr."""
    level = logging.DEBUG if verbose else DEFAULT_LOG_LEVEL.upper()
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@contextmanager
def handle_errors():
    """Print library errors in red and exit with 2 (infeasible) or 1."""
    try:
        yield
    except InfeasibilityError as e:
        console.print(f"[red]✗ Infeasible: {e}[/red]")
        sys.exit(EXIT_INFEASIBLE)
    except (LatticeInvError, OSError) as e:
        console.print(f"[red]✗ Error: {e}[/red]")
        sys.exit(EXIT_ERROR)


def _fmt(value: float, digits: int = 2) -> str:
    if value is None:
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}"


def resolve_config(
    config_path: Path | None,
    preset: str | None,
    seed: int | None,
    out: Path | None,
) -> ExperimentConfig:
    """Load a TOML config or a preset, then apply command-line overrides."""
    if config_path and preset:
        raise click.UsageError("Use either --config or --preset, not both")
    if config_path:
        config = load_experiment_config(config_path)
    else:
        config = get_preset(preset or "steps_1d")
    if seed is not None:
        config.seed = seed
    if out is not None:
        config.output_dir = str(out)
    config.validate()
    return config


@click.group()
@click.version_option(version=__version__)
@click.option("-v", "--verbose", is_flag=True, help="Show debug logging")
def cli(verbose: bool) -> None:
    """latticeinv - Inverse problems with interval-bounded operators and data.

    Reconstructs images from blurred data when the blur itself is only known
    up to elementwise lower and upper bounds.
    """
    setup_logging(verbose)


@cli.command()
@click.option("-c", "--config", "config_path", type=click.Path(path_type=Path), help="Experiment TOML file")
@click.option("-p", "--preset", type=click.Choice(sorted(PRESETS)), help="Built-in experiment (default: steps_1d)")
@click.option("-s", "--seed", type=int, help="Override the experiment seed")
@click.option("-o", "--out", type=click.Path(path_type=Path), help="Output directory")
@click.option("-w", "--workers", default=1, show_default=True, help="Variants solved in parallel")
def run(config_path: Path | None, preset: str | None, seed: int | None, out: Path | None, workers: int) -> None:
    """Run a deblurring, sampling or tightening experiment.

    \b
    Writes into the output directory:
      - reconstructions (PGM for images, CSV for signals)
      - trace_<variant>.csv solver traces
      - report.json with PSNR/SSIM per variant
      - config.resolved.json
    """
    with handle_errors():
        config = resolve_config(config_path, preset, seed, out)
        with console.status(f"Running {config.scenario} experiment...") as status:
            report = run_experiment(config, max_workers=workers, progress_callback=status.update)

    if report.metrics:
        table = Table(title=f"{config.scenario} (seed {config.seed})")
        table.add_column("Variant", style="cyan")
        table.add_column("PSNR (dB)", justify="right", style="green")
        table.add_column("SSIM", justify="right", style="green")
        table.add_column("Iterations", justify="right")
        table.add_column("Converged", justify="center")
        table.add_row("data", _fmt(report.data_metrics["psnr"]), _fmt(report.data_metrics["ssim"], 3), "-", "-")
        for name, entry in report.metrics.items():
            table.add_row(
                name,
                _fmt(entry["psnr"]),
                _fmt(entry["ssim"], 3),
                str(entry["iterations_used"]),
                "[green]✓[/green]" if entry["converged"] else "[yellow]✗[/yellow]",
            )
        console.print(table)
    for key, value in report.diagnostics.items():
        if key != "u0_report":
            console.print(f"[dim]{key}:[/dim] {value}")
    console.print(f"[green]✓ Report written to {Path(config.output_dir) / REPORT_FILE}[/green]")


@cli.command("sample-set")
@click.option("-c", "--config", "config_path", type=click.Path(path_type=Path), help="Sampler TOML file")
@click.option("-n", "--samples", type=int, help="Number of random points")
@click.option("-g", "--grid", type=int, help="Classify a regular GRID x GRID lattice instead")
@click.option("-s", "--seed", type=int, help="Override the sampling seed")
@click.option("-o", "--out", type=click.Path(path_type=Path), help="Output directory")
def sample_set(
    config_path: Path | None,
    samples: int | None,
    grid: int | None,
    seed: int | None,
    out: Path | None,
) -> None:
    """Classify points of the 2-D toy problem as in U and in U**."""
    with handle_errors():
        config = resolve_config(config_path, None if config_path else "toy_set", seed, out)
        config.scenario = "feasible2d"
        if samples is not None:
            config.feasible_set.n_samples = samples
        if grid is not None:
            config.feasible_set.grid_resolution = grid
        with console.status("Sampling feasible set..."):
            report = run_experiment(config)

    diag = report.diagnostics
    table = Table(title="Feasible set samples")
    table.add_column("Points", justify="right")
    table.add_column("in U", justify="right", style="blue")
    table.add_column("in U**", justify="right", style="green")
    table.add_column("Off analytic", justify="right", style="yellow")
    table.add_row(
        str(diag["n_points"]), str(diag["n_in_U"]), str(diag["n_in_Ustarstar"]), str(diag["n_analytic_mismatch"])
    )
    console.print(table)
    console.print(f"[dim]Generating point u0 = {diag['u0']} (in U**: {diag['u0_in_Ustarstar']})[/dim]")
    console.print(f"[green]✓ Samples written to {report.artifacts[0]}[/green]")
    console.print(f"[green]✓ U** boundary written to {report.artifacts[1]}[/green]")


@cli.command()
@click.option("--lower", "lower_path", required=True, type=click.Path(path_type=Path), help="A^l (MatrixMarket)")
@click.option("--upper", "upper_path", required=True, type=click.Path(path_type=Path), help="A^u (MatrixMarket)")
@click.option("--v", "v_path", required=True, type=click.Path(path_type=Path), help="Vector v (CSV)")
@click.option("--g", "g_path", required=True, type=click.Path(path_type=Path), help="Vector g = A v (CSV)")
@click.option("-o", "--out", type=click.Path(path_type=Path), default=Path("."), help="Output directory")
def tighten(lower_path: Path, upper_path: Path, v_path: Path, g_path: Path, out: Path) -> None:
    """Tighten operator bounds using a known relation A v = g."""
    with handle_errors():
        op = IntervalOperator(read_matrix(lower_path), read_matrix(upper_path))
        v = read_grid(v_path).vector()
        g = read_grid(g_path).vector()
        tight = tighten_bounds(op, v, g)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix(out / "lower_tightened.mtx", tight.lower, comment="tightened lower operator bound")
        write_matrix(out / "upper_tightened.mtx", tight.upper, comment="tightened upper operator bound")

    before = op.width().data
    after = tight.width().data
    table = Table(title="Bound tightening")
    table.add_column("", style="cyan")
    table.add_column("Before", justify="right")
    table.add_column("After", justify="right", style="green")
    table.add_row("Total width", f"{before.sum():.6g}", f"{after.sum():.6g}")
    table.add_row("h (half max row width)", f"{0.5 * max_row_sum(op.width()):.6g}", f"{0.5 * max_row_sum(tight.width()):.6g}")
    table.add_row("Entries tightened", "-", str(int((after < before).sum())))
    console.print(table)
    console.print(f"[green]✓ Bounds written to {out}[/green]")


@cli.command()
@click.argument("reconstruction", type=click.Path(path_type=Path))
@click.argument("reference", type=click.Path(path_type=Path))
@click.option("--peak", default=255.0, show_default=True, help="Peak value for PSNR and SSIM")
def metrics(reconstruction: Path, reference: Path, peak: float) -> None:
    """Compare a reconstruction against a reference (PGM or CSV)."""
    with handle_errors():
        u = read_grid(reconstruction)
        ref = read_grid(reference)
        value_psnr = psnr(u, ref, peak=peak)
        value_ssim = ssim(u, ref, SSIMParams(data_range=peak))

    table = Table(title=f"{reconstruction.name} vs {reference.name}")
    table.add_column("PSNR (dB)", justify="right", style="green")
    table.add_column("SSIM", justify="right", style="green")
    table.add_row(_fmt(value_psnr), _fmt(value_ssim, 4))
    console.print(table)


@cli.command()
@click.argument("kind", type=click.Choice([k for k in KINDS if k != "file"]))
@click.option("--shape", multiple=True, type=int, help="Size; repeat for rows and columns")
@click.option("-o", "--out", type=click.Path(path_type=Path), required=True, help="Output file (suffix is set from the shape)")
def phantom(kind: str, shape: tuple[int, ...], out: Path) -> None:
    """Write a procedural test phantom."""
    with handle_errors():
        grid = generate_phantom(kind, list(shape) or None)
        path = write_grid(out, grid)
    console.print(f"[green]✓ Wrote {kind} phantom {grid.shape[0]}x{grid.shape[1]} to {path}[/green]")


def main() -> None:
    """Entry point for the CLI."""
    cli()

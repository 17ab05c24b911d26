"""Configuration management for latticeinv experiments."""

from __future__ import annotations

import tomllib
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import FormatError, ParameterError
from .paths import DEFAULT_OUTPUT_DIR, atomic_json_write

TV_VARIANTS = ("isotropic", "anisotropic")
SCENARIOS = ("deblur1d", "deblur2d", "feasible2d", "tighten")
PHANTOMS = ("steps1d", "squares", "thinlines", "file")
VARIANTS = ("exact", "noisy", "interval", "interval_isotropic", "interval_anisotropic")
DATA_LEVEL_MODES = ("relative", "absolute")
INITIALIZATIONS = ("backprojection", "zeros")


def _known(cls, data: dict) -> dict:
    """Drop keys the dataclass does not declare."""
    return {k: v for k, v in data.items() if k in cls.__dataclass_fields__}


@dataclass
class SolverConfig:
    """Primal-dual solver settings.

    ``step_ratio`` is the initial primal weight w, with tau = w / (1.05 ||K||)
    and sigma = 1 / (w 1.05 ||K||). ``restart_every = 0`` runs plain PDHG
    without averaging, restarts or weight updates.
    """

    max_iterations: int = 20000
    tolerance: float = 1e-6
    gamma: float = 1e-4
    tv_variant: str = "isotropic"
    step_ratio: float = 1.0
    over_relaxation: float = 1.0
    log_every: int = 500
    trace_path: str | None = None
    initialization: str = "backprojection"
    seed: int = 0
    restart_every: int = 64
    adaptive_weight: bool = True
    weight_smoothing: float = 0.5

    def validate(self) -> None:
        if self.max_iterations <= 0:
            raise ParameterError(f"max_iterations must be positive, got {self.max_iterations}")
        if self.tolerance <= 0:
            raise ParameterError(f"tolerance must be positive, got {self.tolerance}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be non-negative, got {self.gamma}")
        if self.tv_variant not in TV_VARIANTS:
            raise ParameterError(f"tv_variant must be one of {TV_VARIANTS}, got '{self.tv_variant}'")
        if self.step_ratio <= 0:
            raise ParameterError(f"step_ratio must be positive, got {self.step_ratio}")
        if not 1.0 <= self.over_relaxation <= 2.0:
            raise ParameterError(f"over_relaxation must lie in [1, 2], got {self.over_relaxation}")
        if self.initialization not in INITIALIZATIONS:
            raise ParameterError(f"initialization must be one of {INITIALIZATIONS}")
        if self.restart_every < 0:
            raise ParameterError(f"restart_every must be non-negative, got {self.restart_every}")
        if not 0.0 <= self.weight_smoothing <= 1.0:
            raise ParameterError(f"weight_smoothing must lie in [0, 1], got {self.weight_smoothing}")

    @classmethod
    def from_dict(cls, data: dict) -> SolverConfig:
        return cls(**_known(cls, data))


@dataclass
class BlurConfig:
    """Gaussian blur of the forward model.

    ``sigma`` is measured in the same units as ``spacing``, the distance
    between neighbouring samples; ``radius`` counts samples.
    """

    sigma: float = 0.5
    boundary: str = "dirichlet"
    radius: int | None = None
    spacing: float = 1.0

    @property
    def sigma_samples(self) -> float:
        return self.sigma / self.spacing


@dataclass
class NoiseConfig:
    """Data noise c and operator perturbation level.

    With ``data_level_mode = "relative"`` the data bound is
    ``c = data_level * max|u|``; with ``"absolute"`` it is ``data_level``.
    ``operator_level`` multiplies the largest operator entry.
    """

    data_level: float = 0.005
    data_level_mode: str = "relative"
    operator_level: float = 0.05


@dataclass
class BoundsConfig:
    """Derivation of the interval operator from the perturbed estimate.

    ``d_level`` multiplies the largest entry of the normalized estimate;
    ``None`` reuses ``operator_level``.
    """

    d_level: float | None = None
    support_aware: bool = True
    window_margin: int = 2
    tighten: bool = False


@dataclass
class FeasibleSetConfig:
    """Sampler settings for the 2-D U** picture."""

    n_samples: int = 2000
    grid_resolution: int = 0
    region: list[list[float]] = field(default_factory=lambda: [[0.0, 25.0], [0.0, 25.0]])
    max_workers: int = 4
    problem_seed: int = 0


@dataclass
class ExperimentConfig:
    """Full description of one experiment run."""

    scenario: str = "deblur1d"
    phantom: str = "steps1d"
    phantom_path: str | None = None
    shape: list[int] = field(default_factory=lambda: [100])
    blur: BlurConfig = field(default_factory=BlurConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    feasible_set: FeasibleSetConfig = field(default_factory=FeasibleSetConfig)
    variants: list[str] = field(default_factory=lambda: ["exact", "noisy", "interval"])
    residual_scale: float = 1.0
    seed: int = 0
    output_dir: str = str(DEFAULT_OUTPUT_DIR)

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ParameterError(f"scenario must be one of {SCENARIOS}, got '{self.scenario}'")
        if self.phantom not in PHANTOMS:
            raise ParameterError(f"phantom must be one of {PHANTOMS}, got '{self.phantom}'")
        if self.phantom == "file":
            if not self.phantom_path or not Path(self.phantom_path).is_file():
                raise ParameterError(f"Phantom file not found: {self.phantom_path}")
        if not self.shape or any(int(s) <= 0 for s in self.shape) or len(self.shape) > 2:
            raise ParameterError(f"shape must be one or two positive integers, got {self.shape}")
        if self.blur.sigma <= 0:
            raise ParameterError(f"blur.sigma must be positive, got {self.blur.sigma}")
        if self.blur.spacing <= 0:
            raise ParameterError(f"blur.spacing must be positive, got {self.blur.spacing}")
        if self.blur.boundary not in ("dirichlet", "neumann"):
            raise ParameterError(f"Unknown boundary '{self.blur.boundary}'")
        if self.noise.data_level < 0 or self.noise.operator_level < 0:
            raise ParameterError("Noise levels must be non-negative")
        if self.noise.data_level_mode not in DATA_LEVEL_MODES:
            raise ParameterError(f"data_level_mode must be one of {DATA_LEVEL_MODES}")
        if self.bounds.d_level is not None and self.bounds.d_level < 0:
            raise ParameterError("bounds.d_level must be non-negative")
        if self.bounds.window_margin < 0:
            raise ParameterError("bounds.window_margin must be non-negative")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ParameterError(f"Unknown variants {unknown} (expected a subset of {VARIANTS})")
        if self.residual_scale < 1.0:
            raise ParameterError(f"residual_scale must be >= 1, got {self.residual_scale}")
        if self.feasible_set.n_samples < 0 or self.feasible_set.grid_resolution < 0:
            raise ParameterError("Sampler sizes must be non-negative")
        self.solver.validate()

    @property
    def d_level(self) -> float:
        return self.noise.operator_level if self.bounds.d_level is None else self.bounds.d_level

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        nested = {
            "blur": BlurConfig,
            "noise": NoiseConfig,
            "bounds": BoundsConfig,
            "solver": SolverConfig,
            "feasible_set": FeasibleSetConfig,
        }
        kwargs = _known(cls, data)
        for key, sub in nested.items():
            if key in kwargs:
                value = kwargs[key]
                if not isinstance(value, dict):
                    raise FormatError(f"[{key}] must be a table")
                kwargs[key] = sub(**_known(sub, value))
        if "shape" in kwargs:
            shape = kwargs["shape"]
            kwargs["shape"] = [int(shape)] if isinstance(shape, int) else [int(s) for s in shape]
        return cls(**kwargs)


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Load an experiment config from TOML; unknown keys are ignored."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise FormatError(f"Cannot read config '{path}': {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise FormatError(f"Invalid TOML in '{path}': {e}") from e
    try:
        config = ExperimentConfig.from_dict(data)
    except TypeError as e:
        raise FormatError(f"Invalid config values in '{path}': {e}") from e
    config.validate()
    return config


def save_resolved_config(path: Path, config: ExperimentConfig) -> None:
    """Write the fully resolved config as pretty JSON."""
    atomic_json_write(path, config.to_dict())


def steps_1d() -> ExperimentConfig:
    """1-D steps signal: sigma 0.5 at sample spacing 0.2, Dirichlet, c = 0.005 max|u|, d = 0.05 max."""
    return ExperimentConfig(
        scenario="deblur1d",
        phantom="steps1d",
        shape=[100],
        blur=BlurConfig(sigma=0.5, boundary="dirichlet", spacing=0.2),
        noise=NoiseConfig(data_level=0.005, data_level_mode="relative", operator_level=0.05),
        solver=SolverConfig(tv_variant="anisotropic", max_iterations=100_000),
        variants=["exact", "noisy", "interval"],
    )


def squares_2d() -> ExperimentConfig:
    """128x128 squares: sigma 1 at sample spacing 0.5, Neumann, c = 1.275, d = 0.05 max."""
    return ExperimentConfig(
        scenario="deblur2d",
        phantom="squares",
        shape=[128, 128],
        blur=BlurConfig(sigma=1.0, boundary="neumann", spacing=0.5),
        noise=NoiseConfig(data_level=1.275, data_level_mode="absolute", operator_level=0.05),
        solver=SolverConfig(tv_variant="isotropic"),
        variants=["exact", "noisy", "interval_isotropic", "interval_anisotropic"],
    )


def thinlines_2d() -> ExperimentConfig:
    """128x128 thin lines with the same blur and noise as the squares."""
    config = squares_2d()
    config.phantom = "thinlines"
    return config


def toy_set() -> ExperimentConfig:
    """2-D toy problem for the U** picture."""
    return ExperimentConfig(
        scenario="feasible2d",
        shape=[2],
        feasible_set=FeasibleSetConfig(n_samples=2000),
        variants=[],
    )


PRESETS = {
    "steps_1d": steps_1d,
    "squares_2d": squares_2d,
    "thinlines_2d": thinlines_2d,
    "toy_set": toy_set,
}


def get_preset(name: str) -> ExperimentConfig:
    """Look up a preset by name."""
    if name not in PRESETS:
        raise ParameterError(f"Unknown preset '{name}' (available: {', '.join(PRESETS)})")
    return PRESETS[name]()

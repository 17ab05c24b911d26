"""Tests for config module."""

import json

import pytest

from latticeinv.config import (
    PRESETS,
    BlurConfig,
    ExperimentConfig,
    SolverConfig,
    get_preset,
    load_experiment_config,
    save_resolved_config,
)
from latticeinv.errors import FormatError, ParameterError


class TestSolverConfig:
    """Tests for the SolverConfig dataclass."""

    def test_default_values(self):
        config = SolverConfig()
        assert config.max_iterations == 20000
        assert config.tolerance == 1e-6
        assert config.gamma == 1e-4
        assert config.tv_variant == "isotropic"
        assert config.trace_path is None
        config.validate()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_iterations": 0},
            {"tolerance": 0.0},
            {"gamma": -1.0},
            {"tv_variant": "huber"},
            {"step_ratio": 0.0},
            {"over_relaxation": 2.5},
            {"initialization": "random"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            SolverConfig(**kwargs).validate()

    def test_from_dict_ignores_unknown_keys(self):
        config = SolverConfig.from_dict({"max_iterations": 5, "unknown_field": "ignored"})
        assert config.max_iterations == 5
        assert not hasattr(config, "unknown_field")


class TestExperimentConfig:
    """Tests for the ExperimentConfig dataclass."""

    def test_defaults_validate(self):
        config = ExperimentConfig()
        config.validate()
        assert config.variants == ["exact", "noisy", "interval"]
        assert config.d_level == config.noise.operator_level

    def test_d_level_override(self):
        config = ExperimentConfig()
        config.bounds.d_level = 0.1
        assert config.d_level == 0.1

    def test_lists_not_shared(self):
        config = ExperimentConfig()
        config.variants.append("noisy")
        assert ExperimentConfig().variants == ["exact", "noisy", "interval"]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"scenario": "denoise"},
            {"phantom": "lena"},
            {"shape": []},
            {"shape": [4, 4, 4]},
            {"shape": [0]},
            {"blur": BlurConfig(sigma=0.0)},
            {"blur": BlurConfig(spacing=0.0)},
            {"blur": BlurConfig(boundary="periodic")},
            {"variants": ["exact", "best"]},
            {"residual_scale": 0.5},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            ExperimentConfig(**kwargs).validate()

    def test_missing_phantom_file(self, tmp_path):
        config = ExperimentConfig(phantom="file", phantom_path=str(tmp_path / "missing.pgm"))
        with pytest.raises(ParameterError):
            config.validate()

    def test_negative_noise(self):
        config = ExperimentConfig()
        config.noise.data_level = -1.0
        with pytest.raises(ParameterError):
            config.validate()

    def test_nested_solver_validated(self):
        config = ExperimentConfig()
        config.solver.max_iterations = -3
        with pytest.raises(ParameterError):
            config.validate()

    def test_from_dict_nested(self):
        config = ExperimentConfig.from_dict(
            {
                "scenario": "deblur2d",
                "shape": [16, 12],
                "blur": {"sigma": 1.0, "boundary": "neumann", "spacing": 0.25},
                "solver": {"tv_variant": "anisotropic", "extra": 1},
                "not_a_field": True,
            }
        )
        assert config.scenario == "deblur2d"
        assert config.shape == [16, 12]
        assert config.blur.sigma == 1.0
        assert config.blur.boundary == "neumann"
        assert config.solver.tv_variant == "anisotropic"
        assert config.blur.sigma_samples == 4.0
        assert config.noise.data_level == 0.005

    def test_from_dict_scalar_shape(self):
        assert ExperimentConfig.from_dict({"shape": 40}).shape == [40]

    def test_from_dict_table_must_be_dict(self):
        with pytest.raises(FormatError):
            ExperimentConfig.from_dict({"solver": 3})

    def test_to_dict_round_trip(self):
        config = get_preset("squares_2d")
        restored = ExperimentConfig.from_dict(config.to_dict())
        assert restored == config


class TestLoadConfig:
    """Tests for load_experiment_config and save_resolved_config."""

    def test_load_toml(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            'scenario = "deblur1d"\n'
            "shape = [50]\n"
            "seed = 7\n"
            'variants = ["exact", "interval"]\n'
            "\n"
            "[noise]\n"
            "data_level = 0.01\n"
            "\n"
            "[solver]\n"
            "max_iterations = 100\n"
        )
        config = load_experiment_config(path)
        assert config.shape == [50]
        assert config.seed == 7
        assert config.variants == ["exact", "interval"]
        assert config.noise.data_level == 0.01
        assert config.noise.operator_level == 0.05
        assert config.solver.max_iterations == 100

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("scenario = \n")
        with pytest.raises(FormatError):
            load_experiment_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            load_experiment_config(tmp_path / "nope.toml")

    def test_invalid_values(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('scenario = "unknown"\n')
        with pytest.raises(ParameterError):
            load_experiment_config(path)

    def test_save_resolved(self, tmp_path):
        path = tmp_path / "out" / "config.resolved.json"
        save_resolved_config(path, ExperimentConfig(seed=3))
        data = json.loads(path.read_text())
        assert data["seed"] == 3
        assert data["solver"]["max_iterations"] == 20000
        assert ExperimentConfig.from_dict(data) == ExperimentConfig(seed=3)


class TestPresets:
    """Tests for the named presets."""

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_presets_validate(self, name):
        get_preset(name).validate()

    def test_unknown_preset(self):
        with pytest.raises(ParameterError):
            get_preset("steps_3d")

    def test_1d_values(self):
        config = get_preset("steps_1d")
        assert config.blur.sigma == 0.5
        assert config.blur.sigma_samples == pytest.approx(2.5)
        assert config.blur.boundary == "dirichlet"
        assert config.noise.data_level == 0.005
        assert config.d_level == 0.05

    def test_squares_values(self):
        config = get_preset("squares_2d")
        assert config.shape == [128, 128]
        assert config.blur.boundary == "neumann"
        assert config.noise.data_level_mode == "absolute"
        assert config.noise.data_level == 1.275
        assert config.blur.sigma_samples == pytest.approx(2.0)
        assert config.d_level == 0.05
        assert "interval_anisotropic" in config.variants

    def test_thinlines(self):
        assert get_preset("thinlines_2d").phantom == "thinlines"

    def test_presets_are_fresh(self):
        get_preset("steps_1d").variants.clear()
        assert get_preset("steps_1d").variants

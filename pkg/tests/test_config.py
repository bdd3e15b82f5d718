"""
Tests for scenario loading, validation and output directory resolution
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import pytest

from config.config_manager import (
    DEFAULT_SCENARIO, OUTPUT_DIR_ENV, ConfigManager, ScenarioConfig, ScenarioValidationError,
    validate_scenario,
)


def test_bundled_default_matches_model_defaults():
    loaded = ConfigManager().load_scenario()
    assert loaded == ScenarioConfig()


def test_seed_override():
    assert ConfigManager().load_scenario(seed=17).seed == 17


def test_missing_and_malformed_files(tmp_path):
    manager = ConfigManager()
    with pytest.raises(ScenarioValidationError):
        manager.load_scenario(str(tmp_path / "nope.toml"))
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = [", encoding="utf-8")
    with pytest.raises(ScenarioValidationError):
        manager.load_scenario(str(bad))


def test_field_errors_name_the_offending_key():
    with pytest.raises(ScenarioValidationError) as info:
        validate_scenario({"planner": {"safety_radius": -1.0}})
    assert any(error.startswith("planner.safety_radius") for error in info.value.field_errors)

    with pytest.raises(ScenarioValidationError):
        validate_scenario({"throw": {"unknown_key": 1}})
    with pytest.raises(ScenarioValidationError):
        validate_scenario({"uav": {"start": [0.0, 0.0, -1.0]}})
    with pytest.raises(ScenarioValidationError):
        validate_scenario({"camera": {"forward": [0.0, 0.0, 1.0]}})


def test_sections_convert_to_runtime_objects(scenario):
    cfg = scenario.planner.to_config()
    assert cfg.w_relvel == pytest.approx(5.8)
    assert cfg.safety_radius == pytest.approx(0.4)
    assert scenario.uncertainty.to_params().gamma == pytest.approx(0.05)
    camera = scenario.camera.to_model(scenario.uav.start)
    assert camera.width == 640
    assert (camera.fx, camera.fy) == (390.0, 390.0)
    assert (camera.depth_min, camera.depth_max) == (0.4, 6.0)
    assert scenario.papt.spline_config().scan_lag == 1
    assert scenario.depth_filter.to_config().memory_timeout == pytest.approx(0.2)


def test_scan_lag_bounded_by_window():
    assert validate_scenario({"papt": {"window": 4, "scan_lag": 2}}).papt.scan_lag == 2
    with pytest.raises(ScenarioValidationError):
        validate_scenario({"papt": {"window": 4, "scan_lag": 3}})


def test_dump_defaults_round_trips(tmp_path):
    path = ConfigManager().dump_defaults(str(tmp_path / "defaults.toml"))
    with open(path, "rb") as f:
        data = tomllib.load(f)
    assert validate_scenario(data) == ScenarioConfig()


def test_output_dir_precedence(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "from_env"))
    assert ConfigManager.output_dir("cli") == Path("cli")
    assert ConfigManager.output_dir() == tmp_path / "from_env"
    monkeypatch.delenv(OUTPUT_DIR_ENV)
    assert ConfigManager.output_dir() == Path("output")


def test_bundled_file_exists():
    assert DEFAULT_SCENARIO.is_file()

"""
Shared fixtures for the dodging stack test suite
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config.config_manager import ScenarioConfig  # noqa: E402
from perception.camera_geometry import CameraModel  # noqa: E402


@pytest.fixture
def camera() -> CameraModel:
    """Identity-pose camera looking along +z"""
    return CameraModel(400.0, 400.0, 320.0, 240.0, 640, 480, depth_min=0.4, depth_max=8.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def scenario() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture
def quiet_scenario() -> ScenarioConfig:
    """Default scenario without sensor noise"""
    base = ScenarioConfig()
    noise = base.noise.model_copy(update={"pixel_sigma": 0.0, "depth_sigma": 0.0, "invalid_probability": 0.0})
    return base.model_copy(update={"noise": noise})

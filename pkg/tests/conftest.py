import json
from pathlib import Path

import numpy as np
import pytest

from app.config.scenario import parse_scenario
from app.models.scenario import ScenarioConfig
from app.models.state import ControlGains, SpacecraftParams

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def make_scenario(**sections) -> ScenarioConfig:
    """Default HIL scenario with the given top-level keys replaced"""
    return parse_scenario(sections)


@pytest.fixture
def default_cfg() -> ScenarioConfig:
    return make_scenario()


@pytest.fixture
def quiet_cfg() -> ScenarioConfig:
    """Short noise-free scenario"""
    return make_scenario(name="quiet", noise_enabled=False, timing={"duration": 20.0})


@pytest.fixture
def params(default_cfg) -> SpacecraftParams:
    return SpacecraftParams.from_config(default_cfg)


@pytest.fixture
def gains(default_cfg) -> ControlGains:
    return ControlGains.from_config(default_cfg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def golden_frames():
    return json.loads((FIXTURES / "golden_frames.json").read_text())["frames"]

import numpy as np
import pytest

from app.config import defaults
from app.config.scenario import load_scenario, parse_scenario, scenario_digest, set_dotted
from app.core.exceptions import ConfigurationError
from app.models.state import SpacecraftParams
from tests.conftest import SCENARIOS


def test_defaults_fill_the_hil_profile(default_cfg):
    assert default_cfg.profile == "hil"
    assert default_cfg.spacecraft.mass == 20.0
    assert default_cfg.wheels.max_torque == pytest.approx(50e-3)
    assert default_cfg.gains.lambda_bar == pytest.approx(1e-7)
    assert default_cfg.wheel_count == 4


def test_simulation_profile():
    cfg = parse_scenario({"profile": "simulation"})
    assert cfg.spacecraft.mass == 65.0
    assert cfg.wheels.max_speed == 1040.0
    assert cfg.gains.k == pytest.approx(0.5)


def test_partial_section_keeps_profile_values():
    cfg = parse_scenario({"wheels": {"command_mode": "current"}})
    assert cfg.wheels.command_mode == "current"
    assert cfg.wheels.max_torque == pytest.approx(50e-3)


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError, match="wheels.spin_rate"):
        parse_scenario({"wheels": {"spin_rate": 3.0}})
    with pytest.raises(ConfigurationError):
        parse_scenario({"colour": "red"})


def test_spin_axes_are_normalised():
    axes = [[1.0005, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]]
    cfg = parse_scenario({"spacecraft": {"spin_axes": axes}})
    G = SpacecraftParams.from_config(cfg).G
    assert np.allclose(np.linalg.norm(G, axis=0), 1.0)


def test_spin_axis_with_wrong_norm():
    axes = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]]
    with pytest.raises(ConfigurationError, match="norm"):
        parse_scenario({"spacecraft": {"spin_axes": axes}})


def test_needs_three_wheels():
    with pytest.raises(ConfigurationError):
        parse_scenario({"spacecraft": {"spin_axes": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]}})


def test_inertia_must_be_positive_definite():
    with pytest.raises(ConfigurationError, match="positive definite"):
        parse_scenario({"spacecraft": {"inertia": [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]}})


def test_periods_must_be_step_multiples():
    with pytest.raises(ConfigurationError, match="control_period"):
        parse_scenario({"timing": {"control_period": 0.105}})
    with pytest.raises(ConfigurationError, match="0.03"):
        parse_scenario({"timing": {"control_period": 0.1, "telemetry_period": 0.03}})


def test_deadband_must_sit_below_saturation():
    with pytest.raises(ConfigurationError, match="Deadband"):
        parse_scenario({"wheels": {"deadband_current": 1.5}})


def test_fault_on_missing_wheel():
    with pytest.raises(ConfigurationError, match="wheel 5"):
        parse_scenario({"faults": {"events": [{"time": 1.0, "wheel": 5, "scale": 0.5}]}})


def test_fault_times_sorted_per_wheel():
    events = [{"time": 5.0, "wheel": 1, "scale": 0.5}, {"time": 1.0, "wheel": 1, "kind": "disconnect"}]
    with pytest.raises(ConfigurationError, match="not sorted"):
        parse_scenario({"faults": {"events": events}})


def test_schema_version_is_checked():
    with pytest.raises(ConfigurationError, match="schema_version"):
        parse_scenario({"schema_version": defaults.SCHEMA_VERSION + 1})


def test_health_bounds_are_ordered():
    with pytest.raises(ConfigurationError):
        parse_scenario({"gains": {"theta_min": 0.5, "theta_initial": 0.2}})


def test_dotted_overrides():
    cfg = parse_scenario({"seed": 1}, {"seed": 99, "timing.accelerated": True, "mode": None})
    assert cfg.seed == 99
    assert cfg.timing.accelerated
    assert cfg.mode == "mil"


def test_set_dotted_creates_levels():
    data = {"timing": 3}
    set_dotted(data, "timing.step", 0.02)
    set_dotted(data, "a.b.c", 1)
    assert data == {"timing": {"step": 0.02}, "a": {"b": {"c": 1}}}


def test_digest_tracks_content():
    a = parse_scenario({"seed": 1})
    assert scenario_digest(a) == scenario_digest(parse_scenario({"seed": 1}))
    assert scenario_digest(a) != scenario_digest(parse_scenario({"seed": 2}))


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    cfg = load_scenario(path)
    assert cfg.name == path.stem


def test_hil_c_scenario():
    cfg = load_scenario(SCENARIOS / "hil_c.yaml")
    assert cfg.seed == 20240607
    assert cfg.faults.events[0].index == 2
    assert cfg.acceptance.theta_final[3] == [0.45, 0.55]


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigurationError, match="Cannot read"):
        load_scenario(tmp_path / "absent.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("timing: [1, 2\n")
    with pytest.raises(ConfigurationError, match="Malformed"):
        load_scenario(broken)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError, match="mapping"):
        load_scenario(listing)

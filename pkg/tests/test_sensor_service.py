import numpy as np
import pytest

from app.models.state import BodyState, SensorKind
from app.services.sensor_service import SensorSuite, perturb_direction
from app.utils.attitude import dcm_from_mrp


def truth_at(t: float) -> BodyState:
    return BodyState(
        t=t,
        sigma=np.array([0.1, -0.2, 0.15]),
        omega=np.array([0.01, 0.02, -0.03]),
        Omega=np.zeros(4),
    )


def kinds(samples):
    return [s.kind for s in samples]


def test_sampling_cadence(default_cfg):
    suite = SensorSuite(default_cfg.sensors, default_cfg.timing.step, rng=None)
    counts = {kind: 0 for kind in SensorKind}
    for tick in range(1000):
        for sample in suite.sample_sensors(truth_at(tick * 0.01), tick):
            counts[sample.kind] += 1
    assert counts == {SensorKind.GYRO: 100, SensorKind.MAG: 20, SensorKind.SUN: 20}


def test_nothing_between_rate_boundaries(default_cfg):
    suite = SensorSuite(default_cfg.sensors, default_cfg.timing.step, rng=None)
    assert suite.sample_sensors(truth_at(0.03), 3) == []
    assert kinds(suite.sample_sensors(truth_at(0.1), 10)) == [SensorKind.GYRO]
    assert kinds(suite.sample_sensors(truth_at(0.5), 50)) == [SensorKind.GYRO, SensorKind.MAG, SensorKind.SUN]


def test_noise_free_samples_are_exact(default_cfg):
    suite = SensorSuite(default_cfg.sensors, default_cfg.timing.step, rng=None)
    truth = truth_at(0.0)
    gyro, mag, sun = suite.sample_sensors(truth, 0)
    C = dcm_from_mrp(truth.sigma)
    assert gyro.value == pytest.approx(truth.omega + np.asarray(default_cfg.sensors.gyro_initial_bias))
    assert mag.value == pytest.approx(C @ suite.mag_reference)
    assert sun.value == pytest.approx(C @ suite.sun_reference)
    assert np.linalg.norm(mag.value) == pytest.approx(1.0)


@pytest.mark.parametrize("b", [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.95, 0.0, np.sqrt(1.0 - 0.95 ** 2)]])
def test_direction_noise_has_requested_mean_angle(b, rng):
    b = np.asarray(b)
    mean_angle = 2e-3
    angles = [
        np.arccos(np.clip(perturb_direction(b, mean_angle, rng) @ b, -1.0, 1.0))
        for _ in range(20000)
    ]
    assert np.mean(angles) == pytest.approx(mean_angle, rel=0.03)


def test_perturbed_direction_stays_unit(rng):
    b = np.array([0.0, 0.0, 1.0])
    for _ in range(100):
        assert np.linalg.norm(perturb_direction(b, 0.1, rng)) == pytest.approx(1.0)


def test_gyro_bias_walks_only_with_noise(default_cfg, rng):
    quiet = SensorSuite(default_cfg.sensors, default_cfg.timing.step, rng=None)
    noisy = SensorSuite(default_cfg.sensors, default_cfg.timing.step, rng=rng)
    for tick in range(0, 10000, 10):
        quiet.sample_sensors(truth_at(tick * 0.01), tick)
        noisy.sample_sensors(truth_at(tick * 0.01), tick)
    initial = np.asarray(default_cfg.sensors.gyro_initial_bias)
    assert np.array_equal(quiet.bias, initial)
    assert not np.array_equal(noisy.bias, initial)


def test_seeded_suites_repeat(default_cfg):
    a = SensorSuite(default_cfg.sensors, default_cfg.timing.step, np.random.default_rng(5))
    b = SensorSuite(default_cfg.sensors, default_cfg.timing.step, np.random.default_rng(5))
    for tick in (0, 10, 50):
        for x, y in zip(a.sample_sensors(truth_at(tick * 0.01), tick), b.sample_sensors(truth_at(tick * 0.01), tick)):
            assert np.array_equal(x.value, y.value)

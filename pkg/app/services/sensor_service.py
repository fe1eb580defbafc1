from typing import List, Optional

import numpy as np
import structlog

from app.models.scenario import SensorSuiteParams
from app.models.state import BodyState, SensorKind, SensorSample
from app.utils.attitude import dcm_from_mrp

logger = structlog.get_logger()

# per-axis std of a 2-D Gaussian tilt whose mean magnitude is 1
RAYLEIGH_MEAN_TO_SIGMA = float(np.sqrt(2.0 / np.pi))

# |b_x| above which the tilt basis is seeded from y instead of x
HELPER_AXIS_LIMIT = 0.9


def perturb_direction(b: np.ndarray, mean_angle: float, rng: np.random.Generator) -> np.ndarray:
    """Tilt unit vector b by a random angle whose mean is mean_angle"""
    helper = np.array([1.0, 0.0, 0.0]) if abs(b[0]) < HELPER_AXIS_LIMIT else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(b, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(b, e1)
    g = rng.standard_normal(2) * mean_angle * RAYLEIGH_MEAN_TO_SIGMA
    d = g[0] * e1 + g[1] * e2
    angle = float(np.linalg.norm(d))
    if angle == 0.0:
        return b
    out = np.cos(angle) * b + np.sin(angle) * d / angle
    return out / np.linalg.norm(out)


class SensorSuite:
    """Gyro, magnetometer and sun sensor sampled on integer tick boundaries"""

    def __init__(self, params: SensorSuiteParams, step: float, rng: Optional[np.random.Generator]):
        self.params = params
        self.step = step
        self.rng = rng
        self.gyro_ticks = int(round(params.gyro_period / step))
        self.mag_ticks = int(round(params.mag_period / step))
        self.sun_ticks = int(round(params.sun_period / step))
        self.bias = np.asarray(params.gyro_initial_bias, dtype=float)
        self.mag_reference = np.asarray(params.mag_reference, dtype=float)
        self.sun_reference = np.asarray(params.sun_reference, dtype=float)
        self._bias_tick = 0

    def _walk_bias(self, tick: int) -> None:
        """Random-walk the true gyro bias up to the given tick"""
        elapsed = (tick - self._bias_tick) * self.step
        if elapsed > 0.0 and self.rng is not None and self.params.gyro_bias_walk > 0.0:
            self.bias = self.bias + self.params.gyro_bias_walk * np.sqrt(elapsed) * self.rng.standard_normal(3)
        self._bias_tick = tick

    def sample_sensors(self, truth: BodyState, tick: int) -> List[SensorSample]:
        """Samples due at this tick (none between rate boundaries)"""
        samples: List[SensorSample] = []
        t = truth.t

        if tick % self.gyro_ticks == 0:
            self._walk_bias(tick)
            gyro = truth.omega + self.bias
            if self.rng is not None:
                sigma = self.params.gyro_noise_density / np.sqrt(self.params.gyro_period)
                gyro = gyro + sigma * self.rng.standard_normal(3)
            samples.append(SensorSample(t=t, kind=SensorKind.GYRO, value=gyro))

        due_mag = tick % self.mag_ticks == 0
        due_sun = tick % self.sun_ticks == 0
        if due_mag or due_sun:
            C = dcm_from_mrp(truth.sigma)
            if due_mag:
                samples.append(self._vector_sample(t, SensorKind.MAG, C @ self.mag_reference, self.params.mag_noise))
            if due_sun:
                samples.append(self._vector_sample(t, SensorKind.SUN, C @ self.sun_reference, self.params.sun_noise))
        return samples

    def _vector_sample(self, t: float, kind: SensorKind, b: np.ndarray, noise: float) -> SensorSample:
        b = b / np.linalg.norm(b)
        if self.rng is not None and noise > 0.0:
            b = perturb_direction(b, noise, self.rng)
        return SensorSample(t=t, kind=kind, value=b)

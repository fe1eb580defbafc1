from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import structlog

from app.models.scenario import EstimatorConfig, SensorSuiteParams
from app.models.state import EkfState, SensorKind, SensorSample
from app.services.sensor_service import RAYLEIGH_MEAN_TO_SIGMA
from app.utils.attitude import (
    dcm_from_quat,
    mrp_from_quat,
    mrp_shadow,
    quat_from_rotation_vector,
    quat_multiply,
    quat_normalize,
    skew,
)

logger = structlog.get_logger()


@dataclass(frozen=True)
class FilterNoise:
    """Continuous-time noise figures the filter is tuned with"""
    gyro_density: float
    bias_walk: float
    mag_sigma: float
    sun_sigma: float
    gate: float

    @classmethod
    def from_config(cls, sensors: SensorSuiteParams, est: EstimatorConfig) -> "FilterNoise":
        floor = est.measurement_noise_floor
        return cls(
            gyro_density=max(sensors.gyro_noise_density, floor),
            bias_walk=max(sensors.gyro_bias_walk, floor),
            mag_sigma=max(sensors.mag_noise * RAYLEIGH_MEAN_TO_SIGMA, floor),
            sun_sigma=max(sensors.sun_noise * RAYLEIGH_MEAN_TO_SIGMA, floor),
            gate=est.gate,
        )


def initial_ekf(q0: np.ndarray, est: EstimatorConfig) -> EkfState:
    P = np.diag(
        [est.initial_attitude_sigma ** 2] * 3 + [est.initial_bias_sigma ** 2] * 3
    )
    return EkfState(q=quat_normalize(q0), bias=np.zeros(3), P=P)


def mekf_predict(ekf: EkfState, gyro: np.ndarray, dt: float, noise: FilterNoise) -> EkfState:
    """Propagate with the bias-corrected rate held over dt"""
    omega = gyro - ekf.bias
    dq = quat_from_rotation_vector(omega * dt)
    q = quat_normalize(quat_multiply(dq, ekf.q))

    F = np.eye(6)
    F[0:3, 0:3] = dcm_from_quat(dq)
    F[0:3, 3:6] = -np.eye(3) * dt

    sv2 = noise.gyro_density ** 2
    su2 = noise.bias_walk ** 2
    Q = np.zeros((6, 6))
    Q[0:3, 0:3] = (sv2 * dt + su2 * dt ** 3 / 3.0) * np.eye(3)
    Q[0:3, 3:6] = -(su2 * dt ** 2 / 2.0) * np.eye(3)
    Q[3:6, 0:3] = Q[0:3, 3:6]
    Q[3:6, 3:6] = su2 * dt * np.eye(3)

    P = F @ ekf.P @ F.T + Q
    return EkfState(q=q, bias=ekf.bias.copy(), P=0.5 * (P + P.T))


def mekf_update(
    ekf: EkfState,
    sample: SensorSample,
    reference: np.ndarray,
    noise: FilterNoise,
) -> Tuple[EkfState, bool]:
    """
    Vector-measurement update. Returns (state, accepted); a gated-out
    measurement leaves the state untouched.
    """
    sigma = noise.mag_sigma if sample.kind is SensorKind.MAG else noise.sun_sigma
    h = dcm_from_quat(ekf.q) @ reference
    y = sample.value - h

    H = np.zeros((3, 6))
    H[0:3, 0:3] = skew(h)
    R = sigma ** 2 * np.eye(3)
    S = H @ ekf.P @ H.T + R
    S_inv = np.linalg.inv(S)

    d2 = float(y @ S_inv @ y)
    if d2 > noise.gate:
        logger.warning("EKF measurement rejected", t=sample.t, kind=sample.kind.value, mahalanobis2=round(d2, 3))
        return ekf, False

    K = ekf.P @ H.T @ S_inv
    dx = K @ y
    q = quat_normalize(quat_multiply(quat_from_rotation_vector(dx[0:3]), ekf.q))
    bias = ekf.bias + dx[3:6]

    I_KH = np.eye(6) - K @ H
    P = I_KH @ ekf.P @ I_KH.T + K @ R @ K.T
    return EkfState(q=q, bias=bias, P=0.5 * (P + P.T)), True


def estimated_outputs(ekf: EkfState, gyro: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(σ̂, ω̂) for the controller"""
    return mrp_shadow(mrp_from_quat(ekf.q)), gyro - ekf.bias


class AttitudeEstimator:
    """Runs the MEKF at the gyro rate with asynchronous vector updates"""

    def __init__(
        self,
        q0: np.ndarray,
        sensors: SensorSuiteParams,
        est: EstimatorConfig,
    ):
        self.noise = FilterNoise.from_config(sensors, est)
        self.state = initial_ekf(q0, est)
        self.references = {
            SensorKind.MAG: np.asarray(sensors.mag_reference, dtype=float),
            SensorKind.SUN: np.asarray(sensors.sun_reference, dtype=float),
        }
        self.last_gyro: Optional[np.ndarray] = None
        self.last_gyro_t: Optional[float] = None
        self.rejected = 0
        self.accepted = 0

    def process(self, sample: SensorSample) -> None:
        if sample.kind is SensorKind.GYRO:
            if self.last_gyro is not None:
                dt = sample.t - self.last_gyro_t
                if dt > 0.0:
                    self.state = mekf_predict(self.state, self.last_gyro, dt, self.noise)
            self.last_gyro = sample.value
            self.last_gyro_t = sample.t
            return

        self.state, ok = mekf_update(self.state, sample, self.references[sample.kind], self.noise)
        if ok:
            self.accepted += 1
        else:
            self.rejected += 1

    def outputs(self) -> Tuple[np.ndarray, np.ndarray]:
        gyro = self.last_gyro if self.last_gyro is not None else np.zeros(3)
        return estimated_outputs(self.state, gyro)

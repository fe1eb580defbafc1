from typing import Dict, List, Optional

import numpy as np
import structlog

from app.core.exceptions import InsufficientHistoryError
from app.models.scenario import ScenarioConfig
from app.models.state import (
    BodyState,
    CommandMode,
    EstimateSnapshot,
    SpacecraftParams,
    WheelCommand,
    WheelTelemetry,
)
from app.services.controller_service import command_to_wheel_torque
from app.services.dynamics_service import rk4_step, total_angular_momentum
from app.services.estimation_service import AttitudeEstimator
from app.services.guidance_service import GuidanceService
from app.services.sensor_service import SensorSuite
from app.services.wheel_service import AccelerationEstimator, device_health
from app.utils.attitude import attitude_error, mrp_shadow, quat_from_mrp, quat_from_rotation_vector, quat_multiply

logger = structlog.get_logger()

ACCEL_METHODS = {"differentiated": "diff_lowpass", "current_based": "current_based"}


class SimulatorCore:
    """
    Truth dynamics, sensors, attitude estimator and guidance.

    Time advances in frames of one telemetry period, each split into
    integration steps; sensors fire on their own step boundaries.
    """

    def __init__(self, cfg: ScenarioConfig, sensor_rng: Optional[np.random.Generator]):
        self.cfg = cfg
        self.params = SpacecraftParams.from_config(cfg)
        self.h = cfg.timing.step
        self.frame_steps = cfg.timing.ticks(cfg.timing.telemetry_period)
        self.guidance = GuidanceService(cfg)
        self.sensors = SensorSuite(cfg.sensors, self.h, sensor_rng)
        self.source = cfg.eom_wheel_source
        self.wheel_params = cfg.wheels
        self.schedule = cfg.faults.schedule()
        self.include_scale = cfg.faults.target == "device"

        sigma0 = mrp_shadow(np.asarray(cfg.spacecraft.initial_attitude, dtype=float))
        self.state = BodyState(
            t=0.0,
            sigma=sigma0,
            omega=np.asarray(cfg.spacecraft.initial_rate, dtype=float),
            Omega=np.asarray(cfg.wheels.initial_speeds, dtype=float),
        )
        q_est = quat_multiply(
            quat_from_rotation_vector(np.asarray(cfg.estimator.initial_attitude_error, dtype=float)),
            quat_from_mrp(sigma0),
        )
        self.estimator = AttitudeEstimator(q_est, cfg.sensors, cfg.estimator)

        n = self.params.N
        mode = CommandMode(cfg.wheels.command_mode)
        period = cfg.timing.control_period
        initial_value = self.state.Omega.copy() if mode is CommandMode.VELOCITY else np.zeros(n)
        self.previous_command = WheelCommand(t=-period, mode=mode, value=initial_value)
        self.wheel_torque = np.zeros(n)
        self.accel = AccelerationEstimator(cfg.wheels, cfg.accel_cutoff_hz, n)
        self.telemetry: Optional[WheelTelemetry] = None
        self.wheel_accel = np.zeros(n)
        self.tick = 0

    @property
    def t(self) -> float:
        return self.tick * self.h

    def _sense(self) -> None:
        for sample in self.sensors.sample_sensors(self.state, self.tick):
            self.estimator.process(sample)

    def begin_frame(self) -> None:
        """Process the sensor samples due at the current frame boundary"""
        self._sense()

    def estimate(self) -> EstimateSnapshot:
        sigma_hat, omega_hat = self.estimator.outputs()
        return EstimateSnapshot(
            t=self.t,
            sigma_hat=sigma_hat,
            omega_hat=omega_hat,
            guidance=self.guidance.guidance(self.t),
        )

    def on_command(self, command: WheelCommand) -> None:
        self.wheel_torque = command_to_wheel_torque(command, self.previous_command, self.wheel_params)
        self.previous_command = command

    def on_telemetry(self, telemetry: WheelTelemetry) -> None:
        self.telemetry = telemetry
        self.accel.update(telemetry.t, telemetry.Omega_meas, telemetry.I_meas)

    def _frame_inputs(self):
        """(body torque u, Φ) held over the coming frame"""
        n = self.params.N
        if self.source == "commanded":
            Phi = device_health(self.schedule, self.t, n, include_scale=self.include_scale)
            return -self.wheel_torque, Phi

        if self.telemetry is not None:
            self.state.Omega = np.clip(
                self.telemetry.Omega_meas, -self.params.max_wheel_speed, self.params.max_wheel_speed
            )
        try:
            accel = self.accel.accel_estimate(ACCEL_METHODS[self.source])
        except InsufficientHistoryError:
            accel = np.zeros(n)
        return -self.params.J_RW * accel, np.ones(n)

    def advance(self) -> None:
        """Integrate one frame; sensors inside the frame are processed on the way"""
        u, Phi = self._frame_inputs()
        self.wheel_accel = -Phi * u / self.params.J_RW
        for k in range(self.frame_steps):
            self.state = rk4_step(self.state, u, Phi, self.params, self.h, tick=self.tick)
            self.tick += 1
            self.state.t = self.t
            if k < self.frame_steps - 1:
                self._sense()

    def record(self, estimate: EstimateSnapshot) -> Dict[str, List[float]]:
        """Log fields owned by the simulator at the current tick"""
        g = estimate.guidance
        sigma_e, omega_err, _ = attitude_error(self.state.sigma, g.sigma_d, self.state.omega, g.omega_d)
        return {
            "phase": [float(g.phase)],
            "sigma": list(self.state.sigma),
            "omega": list(self.state.omega),
            "Omega_true": list(self.state.Omega),
            "H": list(total_angular_momentum(self.state, self.params)),
            "sigma_hat": list(estimate.sigma_hat),
            "omega_hat": list(estimate.omega_hat),
            "sigma_d": list(g.sigma_d),
            "omega_d": list(g.omega_d),
            "sigma_e": list(sigma_e),
            "omega_err": list(omega_err),
            "wheel_accel": list(self.wheel_accel),
        }

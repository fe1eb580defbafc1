"""
Adaptive fault-tolerant attitude controller.

Sign convention: ``u`` is the torque each wheel exerts on the body. The motor
torque on the flywheel is its reaction, τ_cmd = −u, and every wheel command
(current or speed) is derived from τ_cmd.
"""

import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import structlog

from app.core.exceptions import AllocationError
from app.models.scenario import FaultEvent, ScenarioConfig, WheelParams
from app.models.state import (
    CommandMode,
    ControlGains,
    EstimateSnapshot,
    GuidanceSample,
    SpacecraftParams,
    WheelCommand,
)
from app.services.adaptation_service import IclAccumulator, IclSample, adaptation_step
from app.services.wheel_service import deadband_offset_compensation
from app.utils.attitude import (
    attitude_error,
    mrp_kinematics_inverse,
    mrp_kinematics_matrix,
    mrp_kinematics_matrix_dot,
    skew,
)
from app.utils.helpers import sign

logger = structlog.get_logger()

# singular-value ratio below which G·diag(θ̂) counts as rank deficient
RANK_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AuxControl:
    u_d: np.ndarray
    sigma_e: np.ndarray
    omega_err: np.ndarray
    r: np.ndarray
    B: np.ndarray


def compute_aux_control(
    sigma_hat: np.ndarray,
    omega_hat: np.ndarray,
    guidance: GuidanceSample,
    Omega_meas: np.ndarray,
    p: SpacecraftParams,
    g: ControlGains,
) -> AuxControl:
    """Desired body torque u_d from the tracking error and modified error r"""
    sigma_e, omega_err, R_err = attitude_error(sigma_hat, guidance.sigma_d, omega_hat, guidance.omega_d)
    B = mrp_kinematics_matrix(sigma_e)
    sigma_e_dot = 0.25 * B @ omega_err
    B_dot = mrp_kinematics_matrix_dot(sigma_e, sigma_e_dot)
    r = sigma_e_dot + g.alpha @ sigma_e

    H = p.J @ omega_hat + p.J_RW * (p.G @ Omega_meas)
    J = p.J
    u_d = (
        np.cross(omega_hat, H)
        + J @ R_err @ guidance.omega_dot_d
        - J @ skew(omega_err) @ R_err @ guidance.omega_d
        + 4.0 * J @ mrp_kinematics_inverse(sigma_e) @ (
            -0.25 * B_dot @ omega_err
            - g.alpha @ sigma_e_dot
            - g.K @ r
            - g.beta * sigma_e
        )
    )
    return AuxControl(u_d=u_d, sigma_e=sigma_e, omega_err=omega_err, r=r, B=B)


def allocate(u_d: np.ndarray, theta: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Minimum-norm wheel torques u = (G·diag(θ̂))†·u_d"""
    A = G * theta
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size < 3 or s[-1] <= RANK_TOLERANCE * s[0]:
        raise AllocationError(f"G·diag(θ̂) is rank deficient (singular values {s})")
    return Vt.T @ ((U.T @ u_d) / s)


def body_to_wheel_torque(u):
    """τ_cmd = −u"""
    return -np.asarray(u, dtype=float)


def torque_to_current_cmd(tau_cmd, p: WheelParams):
    """Driver current for a wheel-frame torque, clamped to the current limit"""
    return np.clip(np.asarray(tau_cmd, dtype=float) / p.torque_constant, -p.current_limit, p.current_limit)


def torque_to_velocity_cmd(tau_cmd, Omega_cmd, p: WheelParams, dt: float):
    """Forward-Euler speed command: Ω_cmd + clamp(τ_cmd)/J_RW·dt, clamped to ±Ω_max"""
    accel = np.clip(np.asarray(tau_cmd, dtype=float), -p.max_torque, p.max_torque) / p.wheel_inertia
    return np.clip(Omega_cmd + accel * dt, -p.max_speed, p.max_speed)


def command_scales(schedule: List[FaultEvent], t: float, n: int) -> np.ndarray:
    """Latest scale per wheel among events with time ≤ t"""
    scales = np.ones(n)
    for event in schedule:
        if event.time > t:
            break
        if event.kind == "scale":
            scales[event.index] = event.scale
    return scales


def induce_command_fault(u: np.ndarray, schedule: List[FaultEvent], t: float) -> np.ndarray:
    return u * command_scales(schedule, t, u.size)


def fault_mask(scales: np.ndarray) -> int:
    return sum(1 << i for i, s in enumerate(scales) if s != 1.0)


def command_to_wheel_torque(
    command: WheelCommand,
    previous: WheelCommand,
    p: WheelParams,
) -> np.ndarray:
    """
    Wheel-frame torque a command stands for, as seen by the simulated wheels.

    Speed commands imply τ = J_RW·ΔΩ_cmd/Δt; compensated currents have the
    deadband offset removed first.
    """
    if command.mode is CommandMode.VELOCITY:
        dt = command.t - previous.t
        if dt <= 0.0:
            return np.zeros_like(command.value)
        return p.wheel_inertia * (command.value - previous.value) / dt
    current = command.value
    if p.deadband_compensation:
        current = current - sign(current) * p.deadband_current
    return p.torque_constant * current


@dataclass
class ControlOutput:
    t: float
    command: WheelCommand
    u_d: np.ndarray
    u: np.ndarray
    u_applied: np.ndarray
    theta: np.ndarray
    lam: float
    sigma_e: np.ndarray
    omega_err: np.ndarray
    exec_time: float


class AdaptiveController:
    """The controller node's state machine, advanced once per control period"""

    def __init__(self, cfg: ScenarioConfig):
        self.params = SpacecraftParams.from_config(cfg)
        self.gains = ControlGains.from_config(cfg)
        self.wheel_params = cfg.wheels
        self.mode = CommandMode(cfg.wheels.command_mode)
        self.dt = cfg.timing.control_period
        self.schedule = cfg.faults.schedule() if cfg.faults.target == "command" else []
        self.theta = np.full(self.params.N, cfg.gains.theta_initial)
        self.icl = IclAccumulator(self.params, cfg.icl, self.dt)
        self.Omega_cmd = np.asarray(cfg.wheels.initial_speeds, dtype=float)
        self.lambda_crossed_at: Optional[float] = None
        self.exec_times: List[float] = []

    @property
    def lam(self) -> float:
        return self.icl.history.lam

    def step(self, estimate: EstimateSnapshot, Omega_meas: np.ndarray) -> ControlOutput:
        start = time.perf_counter()
        t = estimate.t
        aux = compute_aux_control(
            estimate.sigma_hat, estimate.omega_hat, estimate.guidance, Omega_meas, self.params, self.gains
        )
        u = allocate(aux.u_d, self.theta, self.params.G)

        self.icl.icl_accumulate(IclSample(t=t, omega=estimate.omega_hat, Omega=Omega_meas, u=u))
        if self.lambda_crossed_at is None and self.lam >= self.gains.lambda_bar:
            self.lambda_crossed_at = t
            logger.info("Excitation threshold reached", t=t, lam=self.lam)
        theta = self.theta
        self.theta, _ = adaptation_step(
            self.theta, aux.r, aux.B, self.params, u, self.icl.history, self.gains, self.dt
        )

        scales = command_scales(self.schedule, t, self.params.N)
        u_applied = induce_command_fault(u, self.schedule, t)
        command = self._wheel_command(t, u_applied, scales)

        elapsed = time.perf_counter() - start
        self.exec_times.append(elapsed)
        return ControlOutput(
            t=t,
            command=command,
            u_d=aux.u_d,
            u=u,
            u_applied=u_applied,
            theta=theta,
            lam=self.lam,
            sigma_e=aux.sigma_e,
            omega_err=aux.omega_err,
            exec_time=elapsed,
        )

    def _wheel_command(self, t: float, u_applied: np.ndarray, scales: np.ndarray) -> WheelCommand:
        tau_cmd = body_to_wheel_torque(u_applied)
        if self.mode is CommandMode.VELOCITY:
            self.Omega_cmd = torque_to_velocity_cmd(tau_cmd, self.Omega_cmd, self.wheel_params, self.dt)
            value = self.Omega_cmd.copy()
        else:
            value = torque_to_current_cmd(tau_cmd, self.wheel_params)
            if self.wheel_params.deadband_compensation:
                value = deadband_offset_compensation(value, self.wheel_params)
        return WheelCommand(t=t, mode=self.mode, value=value, fault_mask=fault_mask(scales))

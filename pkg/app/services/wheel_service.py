"""
Virtual reaction-wheel array: motor driver, deadband, velocity loop,
telemetry and fault schedule.

All per-wheel quantities are numpy arrays indexed by wheel; the pure functions
below work elementwise, so they accept a single wheel's scalars as well.
Torques here are wheel-frame motor torques (positive accelerates the flywheel).
"""

from collections import deque
from dataclasses import replace
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.core.exceptions import InsufficientHistoryError
from app.models.scenario import FaultEvent, WheelParams
from app.models.state import CommandMode, WheelCommand, WheelState
from app.utils.helpers import lowpass_gain, sign

logger = structlog.get_logger()

# telemetry samples kept for acceleration estimates
HISTORY_LENGTH = 64


def torque_from_current(I_cmd, p: WheelParams):
    """Driver current loop: no torque inside the deadband, saturated outside"""
    I_cmd = np.asarray(I_cmd, dtype=float)
    torque = np.clip(p.torque_constant * I_cmd, -p.max_torque, p.max_torque)
    return np.where(np.abs(I_cmd) <= p.deadband_current, 0.0, torque)


def deadband_offset_compensation(I_cmd, p: WheelParams):
    """I′ = I + sign(I)·I_deadband"""
    I_cmd = np.asarray(I_cmd, dtype=float)
    return I_cmd + sign(I_cmd) * p.deadband_current


def velocity_loop(
    Omega_cmd,
    w: WheelState,
    p: WheelParams,
    dt: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    PI speed loop with conditional-integration anti-windup.

    Returns (motor torque, new integrator); the integrator is frozen on
    wheels whose unsaturated output exceeds τ_max.
    """
    error = np.asarray(Omega_cmd, dtype=float) - w.Omega
    candidate = w.integrator + error * dt
    unsaturated = p.velocity_kp * error + p.velocity_ki * candidate
    saturated = np.abs(unsaturated) > p.max_torque
    integrator = np.where(saturated, w.integrator, candidate)
    torque = np.clip(p.velocity_kp * error + p.velocity_ki * integrator, -p.max_torque, p.max_torque)
    return torque, integrator


def _propagate_speed(Omega, torque, p: WheelParams, dt: float):
    """Exact step of J·Ω̇ = τ − b·Ω with τ held over dt"""
    x = -p.friction * dt / p.wheel_inertia
    phi1 = np.expm1(x) / x if x != 0.0 else 1.0
    return Omega + dt * (torque - p.friction * Omega) / p.wheel_inertia * phi1


def wheel_step(
    w: WheelState,
    c: WheelCommand,
    p: WheelParams,
    dt: float,
    t: float = 0.0,
) -> WheelState:
    """Advance the wheel array by dt under command c"""
    integrator = w.integrator
    if c.mode is CommandMode.VELOCITY:
        motor, integrator = velocity_loop(c.value, w, p, dt)
    else:
        current = np.asarray(c.value, dtype=float)
        if p.kickstart_current > 0.0 and t < p.kickstart_duration:
            direction = np.where(current != 0.0, sign(current), sign(w.Omega))
            current = direction * np.maximum(np.abs(current), p.kickstart_current)
        motor = torque_from_current(current, p)

    motor = motor * w.connected
    effective = motor * w.health
    Omega = np.clip(_propagate_speed(w.Omega, effective, p, dt), -p.max_speed, p.max_speed)
    a = lowpass_gain(dt, p.telemetry_cutoff_hz)
    filtered = w.filtered_speed + a * (Omega - w.filtered_speed)
    return replace(w, Omega=Omega, integrator=integrator, motor_torque=motor, filtered_speed=filtered)


def wheel_measure(
    w: WheelState,
    p: WheelParams,
    rngs: Optional[Sequence[np.random.Generator]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Driver telemetry (Ω_meas, I_meas).

    rngs holds one generator per wheel; None gives noise-free telemetry.
    Current telemetry reads zero while the driver current sits in the deadband.
    """
    n = w.Omega.size
    speed_sigma = np.where(np.abs(w.Omega) < p.noisy_speed_threshold, p.speed_noise_low, p.speed_noise_high)
    current = w.motor_torque / p.torque_constant
    if rngs is not None:
        draws = np.array([rng.standard_normal(2) for rng in rngs]).reshape(n, 2)
        Omega_meas = w.filtered_speed + speed_sigma * draws[:, 0]
        I_meas = current + p.current_noise * draws[:, 1]
    else:
        Omega_meas = w.filtered_speed.copy()
        I_meas = current.copy()
    I_meas = np.where(np.abs(current) < p.deadband_current, 0.0, I_meas)
    return Omega_meas, I_meas


class AccelerationEstimator:
    """Wheel acceleration reconstructed from telemetry"""

    def __init__(self, p: WheelParams, cutoff_hz: float, n: int):
        self.params = p
        self.cutoff_hz = cutoff_hz
        self.history: Deque[Tuple[float, np.ndarray, np.ndarray]] = deque(maxlen=HISTORY_LENGTH)
        self._filtered = np.zeros(n)

    def update(self, t: float, Omega_meas: np.ndarray, I_meas: np.ndarray) -> None:
        if self.history:
            t_prev, Omega_prev, _ = self.history[-1]
            dt = t - t_prev
            if dt > 0.0:
                raw = (Omega_meas - Omega_prev) / dt
                a = lowpass_gain(dt, self.cutoff_hz)
                self._filtered = self._filtered + a * (raw - self._filtered)
        self.history.append((t, np.asarray(Omega_meas, dtype=float), np.asarray(I_meas, dtype=float)))

    @property
    def group_delay(self) -> float:
        """≈ 1/(2π·f_c) for the low-passed difference"""
        return 1.0 / (2.0 * np.pi * self.cutoff_hz)

    def accel_estimate(self, method: str) -> np.ndarray:
        if method == "current_based":
            if not self.history:
                raise InsufficientHistoryError("No current sample received yet")
            _, _, I_meas = self.history[-1]
            return self.params.torque_constant * I_meas / self.params.wheel_inertia
        if method == "diff_lowpass":
            if len(self.history) < 2:
                raise InsufficientHistoryError(
                    f"Differentiated acceleration needs 2 samples, have {len(self.history)}"
                )
            return self._filtered.copy()
        raise ValueError(f"Unknown acceleration method '{method}'")


def apply_fault_schedule(
    t: float,
    schedule: List[FaultEvent],
    w: WheelState,
    applied: int,
    apply_scale: bool = True,
) -> Tuple[WheelState, int]:
    """
    Apply every event with time ≤ t not yet applied.

    ``applied`` counts events already consumed from the sorted schedule, so
    calling twice in one tick is a no-op. With ``apply_scale`` False only
    disconnect/reconnect act on the device (command-side scaling).
    """
    if applied >= len(schedule) or schedule[applied].time > t:
        return w, applied

    health = w.health.copy()
    connected = w.connected.copy()
    while applied < len(schedule) and schedule[applied].time <= t:
        event = schedule[applied]
        i = event.index
        if event.kind == "scale":
            if apply_scale:
                health[i] = event.scale
        elif event.kind == "disconnect":
            connected[i] = False
        else:
            connected[i] = True
        logger.info("Fault applied", t=t, wheel=event.wheel, kind=event.kind, scale=event.scale)
        applied += 1
    return replace(w, health=health, connected=connected), applied


class WheelEmulator:
    """The RW node's device model: owns the wheel array and its RNG streams"""

    def __init__(
        self,
        p: WheelParams,
        schedule: List[FaultEvent],
        device_faults: bool,
        rngs: Optional[Sequence[np.random.Generator]],
    ):
        self.params = p
        self.schedule = schedule
        self.device_faults = device_faults
        self.rngs = rngs
        self.state = WheelState.initial(p.initial_speeds)
        self.n = self.state.Omega.size
        mode = CommandMode(p.command_mode)
        initial_value = self.state.Omega.copy() if mode is CommandMode.VELOCITY else np.zeros(self.n)
        self.command = WheelCommand(t=0.0, mode=mode, value=initial_value)
        self._applied = 0

    def apply_command(self, command: WheelCommand) -> None:
        self.command = command

    def measure(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        self.state, self._applied = apply_fault_schedule(
            t, self.schedule, self.state, self._applied, apply_scale=self.device_faults
        )
        return wheel_measure(self.state, self.params, self.rngs)

    def advance(self, t: float, steps: int, dt: float) -> None:
        for k in range(steps):
            self.state, self._applied = apply_fault_schedule(
                t + k * dt, self.schedule, self.state, self._applied, apply_scale=self.device_faults
            )
            self.state = wheel_step(self.state, self.command, self.params, dt, t + k * dt)


def device_health(schedule: List[FaultEvent], t: float, n: int, include_scale: bool = True) -> np.ndarray:
    """Effective Φ at time t: scale factors times connection state"""
    health = np.ones(n)
    connected = np.ones(n)
    for event in schedule:
        if event.time > t:
            break
        if event.kind == "scale":
            if include_scale:
                health[event.index] = event.scale
        else:
            connected[event.index] = 0.0 if event.kind == "disconnect" else 1.0
    return health * connected

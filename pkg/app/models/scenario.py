import copy
import math
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import defaults

MatrixLike = Union[float, List[float], List[List[float]]]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


def as_matrix(value: MatrixLike, n: int) -> np.ndarray:
    """Scalar → s·I, list → diag, nested list → full n×n matrix"""
    if isinstance(value, (int, float)):
        return float(value) * np.eye(n)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (n,):
            raise ValueError(f"Expected {n} diagonal entries, got {arr.shape[0]}")
        return np.diag(arr)
    if arr.shape != (n, n):
        raise ValueError(f"Expected a {n}x{n} matrix, got {arr.shape}")
    return arr


def _is_spd(M: np.ndarray) -> bool:
    if not np.allclose(M, M.T, atol=1e-12):
        return False
    return bool(np.all(np.linalg.eigvalsh(0.5 * (M + M.T)) > 0.0))


class TimingConfig(StrictModel):
    duration: float = Field(default=defaults.TIMING_DEFAULTS["duration"], ge=0.0)
    step: float = Field(default=defaults.TIMING_DEFAULTS["step"], gt=0.0)
    control_period: float = Field(default=defaults.TIMING_DEFAULTS["control_period"], gt=0.0)
    telemetry_period: float = Field(default=defaults.TIMING_DEFAULTS["telemetry_period"], gt=0.0)
    accelerated: bool = False

    def ticks(self, period: float) -> int:
        """Number of integration steps per period"""
        return int(round(period / self.step))

    @property
    def total_steps(self) -> int:
        return int(round(self.duration / self.step))


class SpacecraftConfig(StrictModel):
    mass: float = Field(gt=0.0)
    inertia: MatrixLike
    spin_axes: List[List[float]] = Field(description="One spin axis ŝ_i per row")
    initial_attitude: List[float] = Field(default_factory=lambda: list(defaults.INITIAL_ATTITUDE))
    initial_rate: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])

    @field_validator("spin_axes")
    @classmethod
    def normalize_axes(cls, axes: List[List[float]]) -> List[List[float]]:
        if len(axes) < 3:
            raise ValueError(f"At least 3 wheels required, got {len(axes)}")
        normalized = []
        for i, axis in enumerate(axes):
            if len(axis) != 3:
                raise ValueError(f"Spin axis {i + 1} must have 3 components")
            norm = math.sqrt(sum(c * c for c in axis))
            if abs(norm - 1.0) > defaults.SPIN_AXIS_NORM_TOLERANCE:
                raise ValueError(f"Spin axis {i + 1} has norm {norm:.6f}, expected 1")
            normalized.append([c / norm for c in axis])
        return normalized

    @field_validator("initial_attitude", "initial_rate")
    @classmethod
    def three_components(cls, v: List[float]) -> List[float]:
        if len(v) != 3:
            raise ValueError("Expected 3 components")
        return v

    @field_validator("inertia")
    @classmethod
    def inertia_spd(cls, v: MatrixLike) -> MatrixLike:
        if not _is_spd(as_matrix(v, 3)):
            raise ValueError("Inertia must be symmetric positive definite")
        return v

    @property
    def wheel_count(self) -> int:
        return len(self.spin_axes)


class WheelParams(StrictModel):
    command_mode: Literal["current", "velocity"] = defaults.WHEEL_DEFAULTS["command_mode"]
    wheel_inertia: float = Field(default=defaults.WHEEL_DEFAULTS["wheel_inertia"], gt=0.0)
    torque_constant: float = Field(default=defaults.WHEEL_DEFAULTS["torque_constant"], gt=0.0)
    max_torque: float = Field(gt=0.0)
    max_speed: float = Field(gt=0.0)
    current_limit: float = Field(default=defaults.WHEEL_DEFAULTS["current_limit"], gt=0.0)
    deadband_current: float = Field(default=defaults.WHEEL_DEFAULTS["deadband_current"], ge=0.0)
    deadband_compensation: bool = defaults.WHEEL_DEFAULTS["deadband_compensation"]
    kickstart_current: float = Field(default=defaults.WHEEL_DEFAULTS["kickstart_current"], ge=0.0)
    kickstart_duration: float = Field(default=defaults.WHEEL_DEFAULTS["kickstart_duration"], ge=0.0)
    velocity_kp: float = Field(default=defaults.WHEEL_DEFAULTS["velocity_kp"], gt=0.0)
    velocity_ki: float = Field(default=defaults.WHEEL_DEFAULTS["velocity_ki"], ge=0.0)
    friction: float = Field(default=defaults.WHEEL_DEFAULTS["friction"], ge=0.0)
    telemetry_cutoff_hz: float = Field(default=defaults.WHEEL_DEFAULTS["telemetry_cutoff_hz"], gt=0.0)
    speed_noise_high: float = Field(default=defaults.WHEEL_DEFAULTS["speed_noise_high"], ge=0.0)
    speed_noise_low: float = Field(default=defaults.WHEEL_DEFAULTS["speed_noise_low"], ge=0.0)
    noisy_speed_threshold: float = Field(default=defaults.WHEEL_DEFAULTS["noisy_speed_threshold"], ge=0.0)
    current_noise: float = Field(default=defaults.WHEEL_DEFAULTS["current_noise"], ge=0.0)
    initial_speeds: List[float] = Field(default_factory=lambda: list(defaults.WHEEL_DEFAULTS["initial_speeds"]))

    @model_validator(mode="after")
    def deadband_below_saturation(self) -> "WheelParams":
        if self.deadband_current * self.torque_constant >= self.max_torque:
            raise ValueError(
                f"Deadband torque {self.deadband_current * self.torque_constant:.4g} N·m "
                f"must stay below max torque {self.max_torque:.4g} N·m"
            )
        if any(abs(w) > self.max_speed for w in self.initial_speeds):
            raise ValueError("Initial wheel speeds exceed max speed")
        return self


class SensorSuiteParams(StrictModel):
    gyro_period: float = Field(default=defaults.SENSOR_DEFAULTS["gyro_period"], gt=0.0)
    mag_period: float = Field(default=defaults.SENSOR_DEFAULTS["mag_period"], gt=0.0)
    sun_period: float = Field(default=defaults.SENSOR_DEFAULTS["sun_period"], gt=0.0)
    gyro_noise_density: float = Field(default=defaults.SENSOR_DEFAULTS["gyro_noise_density"], ge=0.0)
    gyro_bias_walk: float = Field(default=defaults.SENSOR_DEFAULTS["gyro_bias_walk"], ge=0.0)
    gyro_initial_bias: List[float] = Field(default_factory=lambda: list(defaults.SENSOR_DEFAULTS["gyro_initial_bias"]))
    mag_noise: float = Field(default=defaults.SENSOR_DEFAULTS["mag_noise"], ge=0.0, description="Mean angular error (rad)")
    sun_noise: float = Field(default=defaults.SENSOR_DEFAULTS["sun_noise"], ge=0.0, description="Mean angular error (rad)")
    mag_reference: List[float] = Field(default_factory=lambda: list(defaults.SENSOR_DEFAULTS["mag_reference"]))
    sun_reference: List[float] = Field(default_factory=lambda: list(defaults.SENSOR_DEFAULTS["sun_reference"]))

    @field_validator("mag_reference", "sun_reference")
    @classmethod
    def unit_reference(cls, v: List[float]) -> List[float]:
        if len(v) != 3:
            raise ValueError("Reference direction needs 3 components")
        norm = math.sqrt(sum(c * c for c in v))
        if norm == 0.0:
            raise ValueError("Reference direction must be non-zero")
        return [c / norm for c in v]

    @model_validator(mode="after")
    def references_separated(self) -> "SensorSuiteParams":
        cos_angle = sum(a * b for a, b in zip(self.mag_reference, self.sun_reference))
        angle = math.degrees(math.acos(max(-1.0, min(1.0, abs(cos_angle)))))
        if angle <= defaults.MIN_REFERENCE_SEPARATION_DEG:
            raise ValueError(f"Reference directions only {angle:.2f}° apart")
        return self


class EstimatorConfig(StrictModel):
    initial_attitude_error: List[float] = Field(
        default_factory=lambda: list(defaults.ESTIMATOR_DEFAULTS["initial_attitude_error"])
    )
    initial_attitude_sigma: float = Field(default=defaults.ESTIMATOR_DEFAULTS["initial_attitude_sigma"], gt=0.0)
    initial_bias_sigma: float = Field(default=defaults.ESTIMATOR_DEFAULTS["initial_bias_sigma"], gt=0.0)
    gate: float = Field(default=defaults.ESTIMATOR_DEFAULTS["gate"], gt=0.0)
    measurement_noise_floor: float = Field(default=defaults.ESTIMATOR_DEFAULTS["measurement_noise_floor"], gt=0.0)


class GainsConfig(StrictModel):
    k_icl: MatrixLike
    k: MatrixLike
    alpha: MatrixLike
    beta: float = Field(gt=0.0)
    gamma: MatrixLike
    lambda_bar: float = Field(gt=0.0)
    theta_min: float = Field(default=defaults.HEALTH_BOUNDS["theta_min"], ge=0.0)
    theta_max: float = Field(default=defaults.HEALTH_BOUNDS["theta_max"], le=1.0)
    theta_initial: float = defaults.HEALTH_BOUNDS["theta_initial"]

    @model_validator(mode="after")
    def bounds_ordered(self) -> "GainsConfig":
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be below theta_max")
        if not self.theta_min <= self.theta_initial <= self.theta_max:
            raise ValueError("theta_initial outside [theta_min, theta_max]")
        for name in ("k", "alpha"):
            if not _is_spd(as_matrix(getattr(self, name), 3)):
                raise ValueError(f"Gain '{name}' must be symmetric positive definite")
        return self


class IclConfig(StrictModel):
    history_size: int = Field(default=defaults.ICL_DEFAULTS["history_size"], ge=1)
    window: float = Field(default=defaults.ICL_DEFAULTS["window"], gt=0.0)
    candidate_period: float = Field(default=defaults.ICL_DEFAULTS["candidate_period"], gt=0.0)
    admit_ratio: float = Field(default=defaults.ICL_DEFAULTS["admit_ratio"], ge=0.0)
    min_regressor_norm: float = Field(default=defaults.ICL_DEFAULTS["min_regressor_norm"], ge=0.0)
    quadrature: Literal["trapezoid", "zoh"] = defaults.ICL_DEFAULTS["quadrature"]


class FaultEvent(StrictModel):
    time: float = Field(ge=0.0)
    wheel: int = Field(ge=1, description="1-based wheel number")
    kind: Literal["scale", "disconnect", "reconnect"] = "scale"
    scale: float = Field(default=1.0, ge=0.0, le=1.0)

    @property
    def index(self) -> int:
        return self.wheel - 1


class FaultsConfig(StrictModel):
    target: Literal["command", "device"] = "command"
    events: List[FaultEvent] = Field(default_factory=list)

    @model_validator(mode="after")
    def sorted_per_wheel(self) -> "FaultsConfig":
        last: Dict[int, float] = {}
        for event in self.events:
            if event.time < last.get(event.wheel, -math.inf):
                raise ValueError(f"Fault times for wheel {event.wheel} are not sorted")
            last[event.wheel] = event.time
        return self

    def schedule(self) -> List[FaultEvent]:
        """Events in application order (stable on ties)"""
        return sorted(self.events, key=lambda e: e.time)


class GuidanceConfig(StrictModel):
    switch_period: float = Field(default=defaults.GUIDANCE_DEFAULTS["switch_period"], gt=0.0)
    alternations: int = Field(default=defaults.GUIDANCE_DEFAULTS["alternations"], ge=0)
    nadir_hold_after: Optional[float] = Field(default=defaults.GUIDANCE_DEFAULTS["nadir_hold_after"], ge=0.0)


class OrbitConfig(StrictModel):
    rate: float = Field(default=defaults.ORBIT_DEFAULTS["rate"], gt=0.0)
    initial_phase: float = defaults.ORBIT_DEFAULTS["initial_phase"]
    normal: List[float] = Field(default_factory=lambda: list(defaults.ORBIT_DEFAULTS["normal"]))

    @field_validator("normal")
    @classmethod
    def unit_normal(cls, v: List[float]) -> List[float]:
        norm = math.sqrt(sum(c * c for c in v))
        if len(v) != 3 or norm == 0.0:
            raise ValueError("Orbit normal must be a non-zero 3-vector")
        return [c / norm for c in v]


class AcceptanceConfig(StrictModel):
    """Thresholds checked after a completed run"""
    theta_final: Dict[int, List[float]] = Field(
        default_factory=dict, description="1-based wheel → [low, high]"
    )
    lambda_cross_before: Optional[float] = None
    hold_error_bound: Optional[float] = None
    hold_window: float = 200.0
    phase_end_rate_bound: Optional[float] = None
    stalled_wheel_speed_change: Optional[float] = None


class ScenarioConfig(StrictModel):
    schema_version: int = defaults.SCHEMA_VERSION
    name: str = "scenario"
    profile: Literal["hil", "simulation"] = "hil"
    mode: Literal["mil", "distributed"] = "mil"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    noise_enabled: bool = True
    eom_wheel_source: Literal["commanded", "differentiated", "current_based"] = "commanded"
    accel_cutoff_hz: float = Field(default=defaults.ACCEL_CUTOFF_HZ, gt=0.0)

    timing: TimingConfig = Field(default_factory=TimingConfig)
    spacecraft: SpacecraftConfig
    wheels: WheelParams
    sensors: SensorSuiteParams = Field(default_factory=SensorSuiteParams)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    gains: GainsConfig
    icl: IclConfig = Field(default_factory=IclConfig)
    faults: FaultsConfig = Field(default_factory=FaultsConfig)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    orbit: OrbitConfig = Field(default_factory=OrbitConfig)
    acceptance: Optional[AcceptanceConfig] = None

    @model_validator(mode="before")
    @classmethod
    def apply_profile(cls, data: Any) -> Any:
        """Fill unspecified spacecraft, wheel and gain fields from the profile column"""
        if not isinstance(data, dict):
            return data
        data = copy.deepcopy(data)
        profile = data.get("profile", "hil")
        if profile not in defaults.SPACECRAFT_PROFILES:
            return data
        for section, table in (
            ("spacecraft", defaults.SPACECRAFT_PROFILES[profile]),
            ("wheels", defaults.WHEEL_PROFILES[profile]),
            ("gains", defaults.GAIN_PROFILES[profile]),
        ):
            given = data.get(section) or {}
            if not isinstance(given, dict):
                continue
            merged = copy.deepcopy(table)
            merged.update(given)
            data[section] = merged
        return data

    @model_validator(mode="after")
    def cross_checks(self) -> "ScenarioConfig":
        if self.schema_version != defaults.SCHEMA_VERSION:
            raise ValueError(
                f"Unsupported schema_version {self.schema_version}, expected {defaults.SCHEMA_VERSION}"
            )
        n = self.spacecraft.wheel_count
        if len(self.wheels.initial_speeds) != n:
            raise ValueError(f"initial_speeds has {len(self.wheels.initial_speeds)} entries for {n} wheels")
        for name in ("gamma", "k_icl"):
            try:
                M = as_matrix(getattr(self.gains, name), n)
            except ValueError as e:
                raise ValueError(f"Gain '{name}': {e}") from e
            if not _is_spd(M):
                raise ValueError(f"Gain '{name}' must be symmetric positive definite")
        for event in self.faults.events:
            if event.wheel > n:
                raise ValueError(f"Fault event targets wheel {event.wheel}, only {n} wheels configured")

        timing = self.timing
        for label, period in (
            ("control_period", timing.control_period),
            ("telemetry_period", timing.telemetry_period),
            ("duration", timing.duration),
            ("sensors.gyro_period", self.sensors.gyro_period),
            ("sensors.mag_period", self.sensors.mag_period),
            ("sensors.sun_period", self.sensors.sun_period),
        ):
            _require_multiple(label, period, timing.step)
        _require_multiple("control_period", timing.control_period, timing.telemetry_period)
        _require_multiple("icl.window", self.icl.window, timing.control_period)
        _require_multiple("icl.candidate_period", self.icl.candidate_period, timing.control_period)
        if self.guidance.nadir_hold_after is not None:
            _require_multiple("guidance.nadir_hold_after", self.guidance.nadir_hold_after, timing.step)
        _require_multiple("guidance.switch_period", self.guidance.switch_period, timing.step)
        return self

    @property
    def wheel_count(self) -> int:
        return self.spacecraft.wheel_count


def _require_multiple(label: str, value: float, base: float) -> None:
    ratio = value / base
    if abs(ratio - round(ratio)) > 1e-6:
        raise ValueError(f"{label} ({value}) must be an integer multiple of {base}")

"""Numeric value types passed between services."""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from app.models.scenario import ScenarioConfig, as_matrix


@dataclass(frozen=True)
class SpacecraftParams:
    J: np.ndarray
    J_inv: np.ndarray
    G: np.ndarray          # 3×N, column i is spin axis ŝ_i
    J_RW: float
    mass: float
    max_wheel_speed: float

    @property
    def N(self) -> int:
        return self.G.shape[1]

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "SpacecraftParams":
        J = as_matrix(cfg.spacecraft.inertia, 3)
        return cls(
            J=J,
            J_inv=np.linalg.inv(J),
            G=np.asarray(cfg.spacecraft.spin_axes, dtype=float).T,
            J_RW=cfg.wheels.wheel_inertia,
            mass=cfg.spacecraft.mass,
            max_wheel_speed=cfg.wheels.max_speed,
        )


@dataclass
class BodyState:
    t: float
    sigma: np.ndarray
    omega: np.ndarray
    Omega: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.sigma, self.omega, self.Omega))

    @classmethod
    def from_vector(cls, t: float, x: np.ndarray) -> "BodyState":
        return cls(t=t, sigma=x[0:3].copy(), omega=x[3:6].copy(), Omega=x[6:].copy())


class GuidanceTarget(str, Enum):
    IDENTITY = "identity"
    NADIR = "nadir"


@dataclass(frozen=True)
class GuidanceSample:
    sigma_d: np.ndarray
    omega_d: np.ndarray
    omega_dot_d: np.ndarray
    phase: int = 0
    target: GuidanceTarget = GuidanceTarget.IDENTITY


@dataclass(frozen=True)
class ControlGains:
    alpha: np.ndarray
    beta: float
    K: np.ndarray
    Gamma: np.ndarray
    K1: np.ndarray
    lambda_bar: float
    theta_min: float
    theta_max: float

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "ControlGains":
        g = cfg.gains
        n = cfg.wheel_count
        return cls(
            alpha=as_matrix(g.alpha, 3),
            beta=g.beta,
            K=as_matrix(g.k, 3),
            Gamma=as_matrix(g.gamma, n),
            K1=as_matrix(g.k_icl, n),
            lambda_bar=g.lambda_bar,
            theta_min=g.theta_min,
            theta_max=g.theta_max,
        )


class CommandMode(str, Enum):
    CURRENT = "current"
    VELOCITY = "velocity"


@dataclass(frozen=True)
class WheelCommand:
    """Command for the whole wheel array; value[i] addresses wheel i"""
    t: float
    mode: CommandMode
    value: np.ndarray
    fault_mask: int = 0


@dataclass
class WheelState:
    """Per-wheel arrays of the emulated wheel array"""
    Omega: np.ndarray
    integrator: np.ndarray
    motor_torque: np.ndarray
    health: np.ndarray
    connected: np.ndarray
    filtered_speed: np.ndarray

    @classmethod
    def initial(cls, speeds) -> "WheelState":
        speeds = np.asarray(speeds, dtype=float)
        n = speeds.size
        return cls(
            Omega=speeds.copy(),
            integrator=np.zeros(n),
            motor_torque=np.zeros(n),
            health=np.ones(n),
            connected=np.ones(n, dtype=bool),
            filtered_speed=speeds.copy(),
        )


class SensorKind(str, Enum):
    GYRO = "gyro"
    MAG = "mag"
    SUN = "sun"


@dataclass(frozen=True)
class SensorSample:
    t: float
    kind: SensorKind
    value: np.ndarray


@dataclass
class EkfState:
    q: np.ndarray
    bias: np.ndarray
    P: np.ndarray


@dataclass(frozen=True)
class IclRecord:
    t: float
    U: np.ndarray          # ∫ ω×(Jω + J_RW·G·Ω) dτ
    Y: np.ndarray          # ∫ G·diag(u) dτ, 3×N
    delta_momentum: np.ndarray  # Jω(t_i) − Jω(t_i − Δt)

    @property
    def target(self) -> np.ndarray:
        """Jω(t_i) − Jω(t_i−Δt) + 𝒰_i, equal to 𝒴_i·θ for noise-free data"""
        return self.delta_momentum + self.U


@dataclass
class IclHistory:
    capacity: int
    N: int
    records: List[IclRecord] = field(default_factory=list)
    lam: float = 0.0

    def gram(self) -> np.ndarray:
        if not self.records:
            return np.zeros((self.N, self.N))
        return sum(r.Y.T @ r.Y for r in self.records)

    def moment(self) -> np.ndarray:
        if not self.records:
            return np.zeros(self.N)
        return sum(r.Y.T @ r.target for r in self.records)

    @property
    def full(self) -> bool:
        return len(self.records) >= self.capacity


@dataclass
class EstimateSnapshot:
    """What the simulator hands the controller each control tick"""
    t: float
    sigma_hat: np.ndarray
    omega_hat: np.ndarray
    guidance: GuidanceSample


@dataclass
class WheelTelemetry:
    t: float
    Omega_meas: np.ndarray
    I_meas: np.ndarray
    Omega_true: Optional[np.ndarray] = None

from typing import Optional

import numpy as np
import structlog

from app.core.exceptions import NumericalDivergenceError
from app.models.state import BodyState, SpacecraftParams
from app.utils.attitude import dcm_from_mrp, mrp_kinematics_matrix, mrp_shadow

logger = structlog.get_logger()


def eom_derivative(
    x: np.ndarray,
    u: np.ndarray,
    Phi: np.ndarray,
    p: SpacecraftParams,
) -> np.ndarray:
    """
    d/dt of the stacked state [σ, ω, Ω].

    u is the wheel torque on the body (u = −J_RW·Ω̇ for a healthy wheel);
    Φ scales it at the wheel, so the body and the flywheel see the same
    reduced torque.
    """
    sigma, omega, Omega = x[0:3], x[3:6], x[6:]
    effective = Phi * u
    H = p.J @ omega + p.J_RW * (p.G @ Omega)
    omega_dot = p.J_inv @ (-np.cross(omega, H) + p.G @ effective)
    sigma_dot = 0.25 * mrp_kinematics_matrix(sigma) @ omega
    Omega_dot = -effective / p.J_RW
    return np.concatenate((sigma_dot, omega_dot, Omega_dot))


def rk4_step(
    s: BodyState,
    u: np.ndarray,
    Phi: np.ndarray,
    p: SpacecraftParams,
    h: float,
    tick: Optional[int] = None,
) -> BodyState:
    """Classical RK4 with inputs held over the step, then shadow switch and wheel clamp"""
    x = s.as_vector()
    k1 = eom_derivative(x, u, Phi, p)
    k2 = eom_derivative(x + 0.5 * h * k1, u, Phi, p)
    k3 = eom_derivative(x + 0.5 * h * k2, u, Phi, p)
    k4 = eom_derivative(x + h * k3, u, Phi, p)
    x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.all(np.isfinite(x_next)):
        t_next = s.t + h
        logger.error("Numerical divergence", tick=tick, t=t_next)
        raise NumericalDivergenceError(tick if tick is not None else -1, t_next, "body state")

    x_next[0:3] = mrp_shadow(x_next[0:3])
    x_next[6:] = np.clip(x_next[6:], -p.max_wheel_speed, p.max_wheel_speed)
    return BodyState.from_vector(s.t + h, x_next)


def total_angular_momentum(s: BodyState, p: SpacecraftParams) -> np.ndarray:
    """Inertial angular momentum R(σ)ᵀ·(Jω + J_RW·G·Ω)"""
    H_body = p.J @ s.omega + p.J_RW * (p.G @ s.Omega)
    return dcm_from_mrp(s.sigma).T @ H_body


def kinetic_energy(s: BodyState, p: SpacecraftParams) -> float:
    return 0.5 * float(s.omega @ p.J @ s.omega)

"""
Integral concurrent learning of the wheel health vector θ.

Integrating the body momentum balance over a window [t_i − Δt, t_i] gives

    Jω(t_i) − Jω(t_i − Δt) + 𝒰_i = 𝒴_i·θ

with 𝒰_i = ∫ ω×(Jω + J_RW·G·Ω) dτ and 𝒴_i = ∫ G·diag(u) dτ. Stored windows
feed the adaptation law once their Gram sum is well conditioned.
"""

from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.models.scenario import IclConfig
from app.models.state import ControlGains, IclHistory, IclRecord, SpacecraftParams

logger = structlog.get_logger()

# relative slack when checking that a buffer spans the window
WINDOW_SLACK = 1e-9


@dataclass(frozen=True)
class IclSample:
    t: float
    omega: np.ndarray
    Omega: np.ndarray
    u: np.ndarray


def excitation(gram: np.ndarray) -> float:
    """λ: smallest eigenvalue of Σ 𝒴ᵢᵀ𝒴ᵢ (clipped at zero)"""
    return max(float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[0]), 0.0)


def _integrate(times: np.ndarray, values: np.ndarray, quadrature: str) -> np.ndarray:
    """∫ values dt along axis 0"""
    dts = np.diff(times)
    shape = (-1,) + (1,) * (values.ndim - 1)
    if quadrature == "zoh":
        return np.sum(values[:-1] * dts.reshape(shape), axis=0)
    return np.sum(0.5 * (values[1:] + values[:-1]) * dts.reshape(shape), axis=0)


def build_record(
    samples: Sequence[IclSample],
    p: SpacecraftParams,
    quadrature: str = "trapezoid",
) -> IclRecord:
    """Integral regressor record over the samples' time span"""
    times = np.array([s.t for s in samples])
    gyro_terms = np.array([
        np.cross(s.omega, p.J @ s.omega + p.J_RW * (p.G @ s.Omega)) for s in samples
    ])
    regressors = np.array([p.G * s.u for s in samples])  # G·diag(u)
    return IclRecord(
        t=float(times[-1]),
        U=_integrate(times, gyro_terms, quadrature),
        Y=_integrate(times, regressors, quadrature),
        delta_momentum=p.J @ samples[-1].omega - p.J @ samples[0].omega,
    )


def icl_residual(record: IclRecord, theta: np.ndarray) -> np.ndarray:
    """Jω(t_i) − Jω(t_i−Δt) + 𝒰_i − 𝒴_i·θ"""
    return record.target - record.Y @ theta


def admit_record(history: IclHistory, record: IclRecord, cfg: IclConfig) -> bool:
    """
    Add a record if it raises the excitation metric.

    While λ is still zero a record goes in only if it grows the rank of the
    Gram sum. After that, with room in the stack, λ must grow by the admit
    ratio. Once full, the slot whose replacement gives the largest λ is
    swapped under the same condition.
    """
    if np.linalg.norm(record.Y) <= cfg.min_regressor_norm:
        return False

    new_YY = record.Y.T @ record.Y
    gram = history.gram()
    if not history.full:
        extended = gram + new_YY
        lam = excitation(extended)
        if history.lam <= 0.0:
            if np.linalg.matrix_rank(extended) <= np.linalg.matrix_rank(gram):
                return False
        elif lam < (1.0 + cfg.admit_ratio) * history.lam:
            return False
        history.records.append(record)
        history.lam = lam
        return True

    extended = gram + new_YY
    candidates = [excitation(extended - r.Y.T @ r.Y) for r in history.records]
    slot = int(np.argmax(candidates))
    lam = candidates[slot]
    if lam <= history.lam or lam < (1.0 + cfg.admit_ratio) * history.lam:
        return False
    history.records[slot] = record
    history.lam = lam
    return True


class IclAccumulator:
    """Buffers controller samples and proposes records on a fixed cadence"""

    def __init__(self, p: SpacecraftParams, cfg: IclConfig, control_period: float):
        self.params = p
        self.cfg = cfg
        self.history = IclHistory(capacity=cfg.history_size, N=p.N)
        window_samples = int(round(cfg.window / control_period))
        self.buffer: Deque[IclSample] = deque(maxlen=window_samples + 1)
        self.candidate_every = int(round(cfg.candidate_period / control_period))
        self._count = 0

    def icl_accumulate(self, sample: IclSample) -> bool:
        """Feed one control-tick sample; returns True if a record was admitted"""
        self.buffer.append(sample)
        self._count += 1
        if self._count % self.candidate_every:
            return False
        span = self.buffer[-1].t - self.buffer[0].t
        if span < self.cfg.window * (1.0 - WINDOW_SLACK):
            return False

        record = build_record(list(self.buffer), self.params, self.cfg.quadrature)
        previous = self.history.lam
        admitted = admit_record(self.history, record, self.cfg)
        if admitted:
            logger.debug(
                "ICL record admitted",
                t=record.t,
                size=len(self.history.records),
                lam=self.history.lam,
                lam_previous=previous,
            )
        return admitted


def project(theta: np.ndarray, theta_dot: np.ndarray, g: ControlGains) -> np.ndarray:
    """Zero derivative components pushing θ̂ out of [θ_min, θ_max]"""
    outward = ((theta <= g.theta_min) & (theta_dot < 0.0)) | ((theta >= g.theta_max) & (theta_dot > 0.0))
    return np.where(outward, 0.0, theta_dot)


def adaptation_step(
    theta: np.ndarray,
    r: np.ndarray,
    B: np.ndarray,
    p: SpacecraftParams,
    u: np.ndarray,
    history: IclHistory,
    g: ControlGains,
    dt: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One forward-Euler step of the projected ICL adaptation law.

    Returns (θ̂′, θ̂̇). The concurrent term is active only once λ ≥ λ̄.
    """
    Y = p.G * u
    theta_dot = 0.25 * g.Gamma @ Y.T @ p.J_inv.T @ B.T @ r
    if history.records and history.lam >= g.lambda_bar:
        theta_dot = theta_dot + g.Gamma @ g.K1 @ (history.moment() - history.gram() @ theta)
    theta_dot = project(theta, theta_dot, g)
    theta_next = np.clip(theta + dt * theta_dot, g.theta_min, g.theta_max)
    return theta_next, theta_dot


def icl_residual_norm(history: IclHistory, theta: np.ndarray) -> Optional[float]:
    """Largest record residual at θ; None for an empty stack"""
    if not history.records:
        return None
    return max(float(np.linalg.norm(icl_residual(r, theta))) for r in history.records)

import bisect
from typing import List, Tuple

import numpy as np
import structlog

from app.models.scenario import GuidanceConfig, OrbitConfig, ScenarioConfig
from app.models.state import GuidanceSample, GuidanceTarget
from app.utils.attitude import mrp_from_dcm

logger = structlog.get_logger()


class OrbitModel:
    """Circular orbit giving the nadir direction and the orbit-normal rate"""

    def __init__(self, cfg: OrbitConfig):
        self.rate = cfg.rate
        self.initial_phase = cfg.initial_phase
        self.normal = np.asarray(cfg.normal, dtype=float)

        # In-plane reference: inertial X projected onto the orbit plane, Y if X is the normal
        for candidate in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
            in_plane = candidate - (candidate @ self.normal) * self.normal
            if np.linalg.norm(in_plane) > 0.5:
                break
        self.p_hat = in_plane / np.linalg.norm(in_plane)
        self.q_hat = np.cross(self.normal, self.p_hat)

    def anomaly(self, t: float) -> float:
        return self.initial_phase + self.rate * t

    def position_direction(self, t: float) -> np.ndarray:
        nu = self.anomaly(t)
        return np.cos(nu) * self.p_hat + np.sin(nu) * self.q_hat

    def nadir_dcm(self, t: float) -> np.ndarray:
        """[DN] of the nadir frame: z toward Earth, y against the orbit normal"""
        r_hat = self.position_direction(t)
        z = -r_hat
        y = -self.normal
        x = np.cross(y, z)
        return np.vstack((x, y, z))


class GuidanceService:
    """Alternating identity / nadir-pointing attitude timeline"""

    def __init__(self, cfg: ScenarioConfig):
        self.orbit = OrbitModel(cfg.orbit)
        self.phases = self.build_timeline(cfg.guidance)
        self._starts = [start for start, _ in self.phases]
        logger.info(
            "Guidance timeline built",
            phases=[(start, target.value) for start, target in self.phases],
        )

    @staticmethod
    def build_timeline(g: GuidanceConfig) -> List[Tuple[float, GuidanceTarget]]:
        """(start time, target) pairs; phase 0 always aligns with the inertial frame"""
        hold = g.nadir_hold_after
        phases = [(0.0, GuidanceTarget.IDENTITY)]
        for k in range(1, g.alternations + 1):
            start = k * g.switch_period
            if hold is not None and start >= hold:
                break
            target = GuidanceTarget.NADIR if k % 2 else GuidanceTarget.IDENTITY
            phases.append((start, target))
        if hold is not None and phases[-1][1] is not GuidanceTarget.NADIR:
            phases.append((max(hold, phases[-1][0]), GuidanceTarget.NADIR))
        return phases

    def phase_index(self, t: float) -> int:
        return bisect.bisect_right(self._starts, t) - 1

    def phase_bounds(self, duration: float) -> List[Tuple[float, float]]:
        """[start, end) of every phase clipped to the run duration"""
        bounds = []
        for i, start in enumerate(self._starts):
            if start >= duration:
                break
            end = self._starts[i + 1] if i + 1 < len(self._starts) else duration
            bounds.append((start, min(end, duration)))
        return bounds

    def guidance(self, t: float) -> GuidanceSample:
        index = self.phase_index(t)
        target = self.phases[index][1]
        if target is GuidanceTarget.IDENTITY:
            return GuidanceSample(
                sigma_d=np.zeros(3),
                omega_d=np.zeros(3),
                omega_dot_d=np.zeros(3),
                phase=index,
                target=target,
            )

        C = self.orbit.nadir_dcm(t)
        return GuidanceSample(
            sigma_d=mrp_from_dcm(C),
            omega_d=self.orbit.rate * (C @ self.orbit.normal),
            omega_dot_d=np.zeros(3),
            phase=index,
            target=target,
        )

import sys
from typing import Optional

import numpy as np

from app.models.messages import (
    COMMAND_MODES,
    ClockPayload,
    ClockPhase,
    EstStatePayload,
    HealthTlmPayload,
    Payload,
    RwCmdPayload,
    RwStatePayload,
    Topic,
)
from app.models.scenario import ScenarioConfig
from app.models.state import CommandMode, WheelCommand, WheelTelemetry
from app.nodes.base import Node, node_main
from app.services.run_log_service import SIM_GROUPS, flatten, group_columns
from app.services.simulator_service import SimulatorCore
from app.utils.helpers import rng_streams


class SimNode(Node):
    """Truth dynamics, sensors and attitude estimator"""

    name = "sim"
    subscriptions = (Topic.RW_STATE, Topic.RW_CMD, Topic.HEALTH_TLM)

    def setup(self, cfg: ScenarioConfig) -> None:
        sensor_rng = rng_streams(cfg.seed, cfg.wheel_count)[0] if cfg.noise_enabled else None
        self.sim = SimulatorCore(cfg, sensor_rng)
        self.n = cfg.wheel_count
        self.columns = group_columns(SIM_GROUPS, self.n)
        self.pending: Optional[WheelTelemetry] = None
        self.health: Optional[HealthTlmPayload] = None
        self.health_updates = 0

    async def on_message(self, payload: Payload) -> None:
        if isinstance(payload, RwStatePayload):
            self.pending = WheelTelemetry(
                t=payload.t,
                Omega_meas=np.asarray(payload.Omega_meas),
                I_meas=np.asarray(payload.I_meas),
            )
        elif isinstance(payload, RwCmdPayload):
            self.sim.on_command(WheelCommand(
                t=payload.t,
                mode=CommandMode(COMMAND_MODES[payload.mode]),
                value=np.asarray(payload.value),
                fault_mask=payload.fault_mask,
            ))
        elif isinstance(payload, HealthTlmPayload):
            self.health = payload
            self.health_updates += 1

    async def on_clock(self, clock: ClockPayload) -> None:
        if clock.phase is ClockPhase.ESTIMATE:
            if self.pending is not None:
                self.sim.on_telemetry(self.pending)
                self.pending = None
            self.sim.begin_frame()
            if clock.control:
                estimate = self.sim.estimate()
                g = estimate.guidance
                await self.client.publish(EstStatePayload(
                    t=estimate.t,
                    sigma_hat=list(estimate.sigma_hat),
                    omega_hat=list(estimate.omega_hat),
                    sigma_d=list(g.sigma_d),
                    omega_d=list(g.omega_d),
                    omega_dot_d=list(g.omega_dot_d),
                ))
                self.rows.append([clock.tick, clock.t] + flatten(SIM_GROUPS, self.n, self.sim.record(estimate)))
        elif clock.phase is ClockPhase.ADVANCE:
            self.sim.advance()

    def report(self) -> dict:
        stats = {"ekf_rejections": self.sim.estimator.rejected, "health_updates": self.health_updates}
        if self.health is not None:
            stats["health_final"] = {"t": self.health.t, "theta_hat": self.health.theta_hat, "lambda": self.health.lam}
        return stats


if __name__ == "__main__":
    sys.exit(node_main(SimNode))

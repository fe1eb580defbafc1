import sys
from typing import Optional

import numpy as np

from app.models.messages import (
    COMMAND_MODE_CODES,
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
from app.models.state import EstimateSnapshot, GuidanceSample
from app.nodes.base import Node, node_main
from app.services.controller_service import AdaptiveController
from app.services.metrics_service import exec_time_stats
from app.services.run_log_service import CONTROLLER_GROUPS, flatten, group_columns
from app.services.simulation_service import controller_record


class ControllerNode(Node):
    """Adaptive fault-tolerant controller on its own control clock"""

    name = "controller"
    subscriptions = (Topic.EST_STATE, Topic.RW_STATE)

    def setup(self, cfg: ScenarioConfig) -> None:
        self.controller = AdaptiveController(cfg)
        self.n = cfg.wheel_count
        self.columns = group_columns(CONTROLLER_GROUPS, self.n)
        self.estimate: Optional[EstimateSnapshot] = None
        self.Omega_meas = np.asarray(cfg.wheels.initial_speeds, dtype=float)

    async def on_message(self, payload: Payload) -> None:
        if isinstance(payload, EstStatePayload):
            self.estimate = EstimateSnapshot(
                t=payload.t,
                sigma_hat=np.asarray(payload.sigma_hat),
                omega_hat=np.asarray(payload.omega_hat),
                guidance=GuidanceSample(
                    sigma_d=np.asarray(payload.sigma_d),
                    omega_d=np.asarray(payload.omega_d),
                    omega_dot_d=np.asarray(payload.omega_dot_d),
                ),
            )
        elif isinstance(payload, RwStatePayload):
            self.Omega_meas = np.asarray(payload.Omega_meas)

    async def on_clock(self, clock: ClockPayload) -> None:
        if clock.phase is not ClockPhase.CONTROL:
            return
        if self.estimate is None or self.estimate.t != clock.t:
            self.log.warning("No fresh estimate for control tick", tick=clock.tick, t=clock.t)
            return
        out = self.controller.step(self.estimate, self.Omega_meas)
        command = out.command
        await self.client.publish(RwCmdPayload(
            t=command.t,
            mode=COMMAND_MODE_CODES[command.mode.value],
            value=list(command.value),
            fault_mask=command.fault_mask,
        ))
        await self.client.publish(HealthTlmPayload(t=out.t, theta_hat=list(out.theta), lam=out.lam))
        self.rows.append([clock.tick, clock.t] + flatten(CONTROLLER_GROUPS, self.n, controller_record(out)))

    def report(self) -> dict:
        return {
            "controller_exec": exec_time_stats(self.controller.exec_times),
            "lambda_crossed_at_s": self.controller.lambda_crossed_at,
            "icl_records": len(self.controller.icl.history.records),
        }


if __name__ == "__main__":
    sys.exit(node_main(ControllerNode))

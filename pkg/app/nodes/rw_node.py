import sys
from typing import Optional

import numpy as np

from app.models.messages import (
    COMMAND_MODES,
    ClockPayload,
    ClockPhase,
    Payload,
    RwCmdPayload,
    RwStatePayload,
    Topic,
)
from app.models.scenario import ScenarioConfig
from app.models.state import CommandMode, WheelCommand, WheelTelemetry
from app.nodes.base import Node, node_main
from app.services.run_log_service import WHEEL_GROUPS, flatten, group_columns
from app.services.simulation_service import build_wheel_emulator, wheel_record


class RwNode(Node):
    """Emulated reaction-wheel array with its drivers"""

    name = "rw"
    subscriptions = (Topic.RW_CMD,)

    def setup(self, cfg: ScenarioConfig) -> None:
        self.wheels = build_wheel_emulator(cfg)
        self.n = cfg.wheel_count
        self.step = cfg.timing.step
        self.frame_steps = cfg.timing.ticks(cfg.timing.telemetry_period)
        self.columns = group_columns(WHEEL_GROUPS, self.n)
        self.telemetry: Optional[WheelTelemetry] = None

    async def on_message(self, payload: Payload) -> None:
        if isinstance(payload, RwCmdPayload):
            self.wheels.apply_command(WheelCommand(
                t=payload.t,
                mode=CommandMode(COMMAND_MODES[payload.mode]),
                value=np.asarray(payload.value),
                fault_mask=payload.fault_mask,
            ))

    async def on_clock(self, clock: ClockPayload) -> None:
        if clock.phase is ClockPhase.MEASURE:
            Omega_meas, I_meas = self.wheels.measure(clock.t)
            self.telemetry = WheelTelemetry(
                t=clock.t, Omega_meas=Omega_meas, I_meas=I_meas, Omega_true=self.wheels.state.Omega.copy()
            )
            await self.client.publish(RwStatePayload(t=clock.t, Omega_meas=list(Omega_meas), I_meas=list(I_meas)))
        elif clock.phase is ClockPhase.CONTROL and self.telemetry is not None:
            self.rows.append([clock.tick, clock.t] + flatten(WHEEL_GROUPS, self.n, wheel_record(self.telemetry)))
        elif clock.phase is ClockPhase.ADVANCE:
            self.wheels.advance(clock.t, self.frame_steps, self.step)


if __name__ == "__main__":
    sys.exit(node_main(RwNode))

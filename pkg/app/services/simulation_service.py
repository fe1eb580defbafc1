import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import structlog

from app.models.scenario import ScenarioConfig
from app.models.state import WheelTelemetry
from app.services.controller_service import AdaptiveController, ControlOutput
from app.services.metrics_service import compute_metrics, host_resources
from app.services.rate_supervisor_service import RateSupervisor
from app.services.run_log_service import RunLog
from app.services.simulator_service import SimulatorCore
from app.services.wheel_service import WheelEmulator
from app.utils.helpers import rng_streams

logger = structlog.get_logger()

EST_STATE = "EST_STATE"
RW_CMD = "RW_CMD"
RW_STATE = "RW_STATE"


@dataclass
class FrameClock:
    """Integer frame arithmetic shared by the MIL loop and the broker"""
    step: float
    frame_steps: int
    control_frames: int
    frames: int

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "FrameClock":
        timing = cfg.timing
        frame_steps = timing.ticks(timing.telemetry_period)
        return cls(
            step=timing.step,
            frame_steps=frame_steps,
            control_frames=timing.ticks(timing.control_period) // frame_steps,
            frames=timing.total_steps // frame_steps,
        )

    def time_of(self, frame: int) -> float:
        return frame * self.frame_steps * self.step

    def tick_of(self, frame: int) -> int:
        return frame * self.frame_steps

    def is_control(self, frame: int) -> bool:
        return frame % self.control_frames == 0


def expected_rates(cfg: ScenarioConfig) -> Dict[str, float]:
    return {
        EST_STATE: cfg.timing.control_period,
        RW_CMD: cfg.timing.control_period,
        RW_STATE: cfg.timing.telemetry_period,
    }


def controller_record(out: ControlOutput) -> Dict[str, List[float]]:
    return {
        "u_d": list(out.u_d),
        "u": list(out.u),
        "u_applied": list(out.u_applied),
        "cmd": list(out.command.value),
        "theta_hat": list(out.theta),
        "lambda": [out.lam],
    }


def wheel_record(telemetry: WheelTelemetry) -> Dict[str, List[float]]:
    return {
        "Omega_meas": list(telemetry.Omega_meas),
        "I_meas": list(telemetry.I_meas),
        "Omega_device": list(telemetry.Omega_true),
    }


@dataclass
class MilResult:
    log: RunLog
    summary: Dict[str, Any] = field(default_factory=dict)


def build_wheel_emulator(cfg: ScenarioConfig) -> WheelEmulator:
    wheel_rngs = rng_streams(cfg.seed, cfg.wheel_count)[1] if cfg.noise_enabled else None
    return WheelEmulator(
        cfg.wheels,
        cfg.faults.schedule(),
        device_faults=cfg.faults.target == "device",
        rngs=wheel_rngs,
    )


def build_nodes(cfg: ScenarioConfig) -> Tuple[SimulatorCore, AdaptiveController, WheelEmulator]:
    """Simulator, controller and wheel emulator seeded as the distributed nodes seed them"""
    sensor_rng = rng_streams(cfg.seed, cfg.wheel_count)[0] if cfg.noise_enabled else None
    return SimulatorCore(cfg, sensor_rng), AdaptiveController(cfg), build_wheel_emulator(cfg)


def run_mil(cfg: ScenarioConfig) -> MilResult:
    """Deterministic single-process closed loop"""
    wall_start, cpu_start = time.perf_counter(), time.process_time()
    clock = FrameClock.from_config(cfg)
    sim, controller, wheels = build_nodes(cfg)
    supervisor = RateSupervisor(expected_rates(cfg))
    log = RunLog(cfg.wheel_count)

    logger.info("MIL run started", scenario=cfg.name, frames=clock.frames, seed=cfg.seed)
    for frame in range(clock.frames + 1):
        t = clock.time_of(frame)
        Omega_meas, I_meas = wheels.measure(t)
        telemetry = WheelTelemetry(t=t, Omega_meas=Omega_meas, I_meas=I_meas, Omega_true=wheels.state.Omega.copy())
        supervisor.observe(RW_STATE, t)
        sim.on_telemetry(telemetry)
        sim.begin_frame()

        if clock.is_control(frame):
            estimate = sim.estimate()
            supervisor.observe(EST_STATE, t)
            out = controller.step(estimate, Omega_meas)
            supervisor.observe(RW_CMD, t)
            log.append(t, sim.record(estimate), controller_record(out), wheel_record(telemetry))
            wheels.apply_command(out.command)
            sim.on_command(out.command)

        if frame == clock.frames:
            break
        wheels.advance(t, clock.frame_steps, clock.step)
        sim.advance()

    summary = compute_metrics(
        log,
        controller_exec_times=controller.exec_times,
        rates=supervisor.report(),
        resources={"mil": host_resources(wall_start, cpu_start)},
        extra={
            "lambda_bar": controller.gains.lambda_bar,
            "mode": "mil",
            "ekf_rejections": sim.estimator.rejected,
            "icl_records": len(controller.icl.history.records),
        },
    )
    logger.info("MIL run completed", scenario=cfg.name, rows=len(log), wall_s=round(time.perf_counter() - wall_start, 2))
    return MilResult(log=log, summary=summary)

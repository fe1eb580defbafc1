import asyncio
import os
import sys
import tempfile
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

import structlog

from app.config.settings import Settings, get_settings
from app.core.exceptions import NodeDownError, RunAbortedError
from app.models.scenario import ScenarioConfig
from app.nodes.broker import Broker
from app.services.metrics_service import compute_metrics, host_resources
from app.services.run_log_service import RunLog, merge_node_logs

logger = structlog.get_logger()

PROJECT_ROOT = Path(__file__).resolve().parents[2]

# node name → module runnable with ``python -m``
NODE_MODULES = {
    "sim": "app.nodes.sim_node",
    "controller": "app.nodes.controller_node",
    "rw": "app.nodes.rw_node",
}

# (tick, t, processes) → None or awaitable
HarnessHook = Callable[[int, float, Dict[str, asyncio.subprocess.Process]], Any]


@dataclass
class DistributedResult:
    log: RunLog
    summary: Dict[str, Any] = field(default_factory=dict)


async def _spawn(name: str, port: int, out: Path, settings: Settings, log_level: Optional[str]):
    args = [
        sys.executable, "-m", NODE_MODULES[name],
        "--host", settings.BUS_HOST,
        "--port", str(port),
        "--out", str(out),
    ]
    if log_level:
        args += ["--log-level", log_level]
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(filter(None, [str(PROJECT_ROOT), env.get("PYTHONPATH")]))
    return await asyncio.create_subprocess_exec(*args, env=env)


async def _stop(processes: Dict[str, asyncio.subprocess.Process], grace: float) -> None:
    for name, proc in processes.items():
        try:
            await asyncio.wait_for(proc.wait(), timeout=grace)
        except asyncio.TimeoutError:
            logger.warning("Node did not exit, terminating", node=name, pid=proc.pid)
            proc.kill()
            await proc.wait()


async def run_distributed_async(
    cfg: ScenarioConfig,
    work_dir: Path,
    accelerated: Optional[bool] = None,
    tick_hook: Optional[HarnessHook] = None,
    settings: Optional[Settings] = None,
    log_level: Optional[str] = None,
) -> DistributedResult:
    settings = settings or get_settings()
    accelerated = cfg.timing.accelerated if accelerated is None else accelerated
    run_id = uuid.uuid4().hex[:12]
    log = logger.bind(run_id=run_id)
    wall_start, cpu_start = time.perf_counter(), time.process_time()

    processes: Dict[str, asyncio.subprocess.Process] = {}

    def hook(tick: int, t: float):
        return tick_hook(tick, t, processes) if tick_hook else None

    broker = Broker(cfg, run_id, accelerated=accelerated, settings=settings, tick_hook=hook if tick_hook else None)
    port = await broker.start()
    paths = {name: work_dir / f"{name}.csv" for name in NODE_MODULES}
    log.info("Distributed run started", scenario=cfg.name, port=port, accelerated=accelerated)

    try:
        for name in NODE_MODULES:
            processes[name] = await _spawn(name, port, paths[name], settings, log_level)
        await broker.wait_ready(NODE_MODULES, cfg.model_dump(mode="json"), settings.NODE_STARTUP_TIMEOUT_S)
        await broker.run()
    except NodeDownError as e:
        log.error("Run halted", node=e.node, reason=e.reason)
        await broker.shutdown(reason=f"node {e.node} down")
        await _stop(processes, grace=2.0)
        raise RunAbortedError(f"Run halted: {e}") from e
    except RunAbortedError as e:
        log.error("Run halted", reason=str(e))
        await broker.shutdown(reason=str(e))
        await _stop(processes, grace=2.0)
        raise

    await broker.shutdown()
    await _stop(processes, grace=settings.NODE_STARTUP_TIMEOUT_S)

    merged = merge_node_logs(cfg.wheel_count, paths["sim"], paths["controller"], paths["rw"])
    reports = broker.reports
    resources = {name: report.get("resources", {}) for name, report in reports.items()}
    resources["broker"] = host_resources(wall_start, cpu_start)
    ctrl = reports.get("controller", {})
    summary = compute_metrics(
        merged,
        rates=broker.supervisor.report(),
        resources=resources,
        extra={
            "lambda_bar": cfg.gains.lambda_bar,
            "mode": "distributed",
            "run_id": run_id,
            "ekf_rejections": reports.get("sim", {}).get("ekf_rejections"),
            "health_final": reports.get("sim", {}).get("health_final"),
            "icl_records": ctrl.get("icl_records"),
            "bus": {name: report.get("bus", {}) for name, report in reports.items()},
            "broker_crc_errors": broker.crc_errors,
            "pacing": {"late_frames": broker.pacer.late_frames, "max_lateness_s": broker.pacer.max_lateness},
        },
    )
    if "controller_exec" in ctrl:
        summary["controller_exec"] = ctrl["controller_exec"]
    log.info("Distributed run completed", rows=len(merged), wall_s=round(time.perf_counter() - wall_start, 2))
    return DistributedResult(log=merged, summary=summary)


def run_distributed(
    cfg: ScenarioConfig,
    work_dir: Optional[Union[str, Path]] = None,
    accelerated: Optional[bool] = None,
    tick_hook: Optional[HarnessHook] = None,
    log_level: Optional[str] = None,
) -> DistributedResult:
    """Broker in this process, one child process per node; node logs merged on tick"""
    if work_dir is not None:
        path = Path(work_dir)
        path.mkdir(parents=True, exist_ok=True)
        return asyncio.run(run_distributed_async(cfg, path, accelerated, tick_hook, log_level=log_level))
    with tempfile.TemporaryDirectory(prefix="rwhil-") as tmp:
        return asyncio.run(run_distributed_async(cfg, Path(tmp), accelerated, tick_hook, log_level=log_level))

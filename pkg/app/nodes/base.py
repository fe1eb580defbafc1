import argparse
import asyncio
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Type

import structlog

from app.clients.bus_client import BusClient
from app.config.scenario import parse_scenario
from app.config.settings import get_settings
from app.core.exceptions import BusError, TestbedException
from app.core.logging import setup_logging
from app.models.messages import (
    AckPayload,
    ClockPayload,
    ClockPhase,
    ConfigPayload,
    HeartbeatPayload,
    NodeReportPayload,
    Payload,
    ShutdownPayload,
    Topic,
)
from app.models.scenario import ScenarioConfig
from app.services.metrics_service import host_resources
from app.services.run_log_service import write_node_log

logger = structlog.get_logger()


class Node:
    """
    One process of the distributed run.

    The bus client's receive loop fills the inbox; ``serve`` drains it in
    order, so data frames published during a phase are applied before the
    CLOCK that follows them. Subclasses implement ``setup``,
    ``on_message`` and ``on_clock`` and append their log rows to ``rows``.
    """

    name: str = "node"
    subscriptions: Tuple[Topic, ...] = ()

    def __init__(self, host: str, port: int, out: Path):
        self.out = Path(out)
        self.client = BusClient(self.name, host, port)
        self.columns: List[str] = []
        self.rows: List[List[float]] = []
        self.log = logger.bind(node=self.name)
        self._wall_start = time.perf_counter()
        self._cpu_start = time.process_time()

    def setup(self, cfg: ScenarioConfig) -> None:
        raise NotImplementedError

    async def on_message(self, payload: Payload) -> None:
        """Data topics this node subscribes to"""

    async def on_clock(self, clock: ClockPayload) -> None:
        raise NotImplementedError

    def report(self) -> dict:
        return {}

    async def _configure(self) -> ScenarioConfig:
        while True:
            message = await self.client.receive()
            if message is None:
                raise BusError("Broker closed before CONFIG")
            _, payload = message
            if isinstance(payload, ConfigPayload):
                self.client.epoch_ns = payload.epoch_ns
                self.log = self.log.bind(run_id=payload.run_id)
                return parse_scenario(payload.scenario)

    async def _finish(self) -> None:
        write_node_log(self.out, self.columns, self.rows)
        stats = {
            "bus": self.client.stats(),
            "resources": host_resources(self._wall_start, self._cpu_start),
            **self.report(),
        }
        await self.client.publish(NodeReportPayload(node=self.name, stats=stats))
        self.log.info("Node log written", path=str(self.out), rows=len(self.rows))

    async def serve(self) -> None:
        await self.client.connect(self.subscriptions)
        cfg = await self._configure()
        self.setup(cfg)
        await self.client.publish(HeartbeatPayload())
        self.log.info("Node ready", scenario=cfg.name)

        try:
            while True:
                message = await self.client.receive()
                if message is None:
                    self.log.warning("Broker connection lost")
                    break
                _, payload = message
                if isinstance(payload, ClockPayload):
                    await self.on_clock(payload)
                    if payload.phase is ClockPhase.FINISH:
                        await self._finish()
                    await self.client.publish(AckPayload(tick=payload.tick, phase=payload.phase))
                elif isinstance(payload, ShutdownPayload):
                    self.log.info("Shutdown received", reason=payload.reason)
                    break
                else:
                    await self.on_message(payload)
        finally:
            await self.client.close()


def node_main(node_cls: Type[Node], argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog=f"app.nodes.{node_cls.name}_node")
    parser.add_argument("--host", required=True)
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--out", type=Path, required=True, help="Node-local CSV log")
    parser.add_argument("--log-level", default=None)
    args = parser.parse_args(argv)

    settings = get_settings()
    setup_logging(args.log_level or settings.LOG_LEVEL, settings.LOG_FORMAT)
    node = node_cls(args.host, args.port, args.out)
    try:
        asyncio.run(node.serve())
    except TestbedException as e:
        node.log.error("Node failed", error=str(e))
        return 2
    except KeyboardInterrupt:
        return 130
    return 0

"""
Hub of the distributed run.

The broker fans frames out to subscribers and owns the virtual clock: each
frame of the run is split into phases (MEASURE, ESTIMATE, CONTROL on
control frames, ADVANCE) and every node must ack a phase before the next
one is broadcast. Frames a node publishes during a phase are forwarded
before its ack is processed, so they reach subscribers ahead of the next
CLOCK. Ordering across topics is not guaranteed otherwise.
"""

import asyncio
import inspect
import time
from typing import Any, Callable, Dict, Iterable, List, Optional

import structlog

from app.config.settings import Settings, get_settings
from app.core.exceptions import BusError, FrameCrcError, FrameError, NodeDownError, RunAbortedError
from app.models.messages import (
    AckPayload,
    ClockPayload,
    ClockPhase,
    ConfigPayload,
    HelloPayload,
    NodeReportPayload,
    Payload,
    ShutdownPayload,
    SubscribePayload,
    Topic,
    decode_payload,
)
from app.models.scenario import ScenarioConfig
from app.services.rate_supervisor_service import RateSupervisor
from app.services.simulation_service import FrameClock, expected_rates
from app.utils.framing import Envelope, decode_frame, encode_frame, read_frame
from app.utils.pacer import Pacer

logger = structlog.get_logger()

SUPERVISED = {Topic.EST_STATE, Topic.RW_CMD, Topic.RW_STATE}

TickHook = Callable[[int, float], Any]


class NodeConnection:
    """Broker-side handle of one connected node"""

    def __init__(self, name: str, writer: asyncio.StreamWriter):
        self.name = name
        self.writer = writer
        self.subscriptions: set = set()
        self.acks: "asyncio.Queue[Optional[AckPayload]]" = asyncio.Queue()
        self.ready = asyncio.Event()
        self.down = False
        self.outbox: "asyncio.Queue[Optional[bytes]]" = asyncio.Queue()
        self.sender = asyncio.create_task(self._send_loop())

    def send(self, frame: bytes) -> None:
        if not self.down:
            self.outbox.put_nowait(frame)

    async def _send_loop(self) -> None:
        try:
            while True:
                frame = await self.outbox.get()
                if frame is None:
                    break
                self.writer.write(frame)
                await self.writer.drain()
        except ConnectionError:
            self.mark_down()

    def mark_down(self) -> None:
        if not self.down:
            self.down = True
            self.acks.put_nowait(None)

    async def close(self) -> None:
        self.outbox.put_nowait(None)
        try:
            await asyncio.wait_for(self.sender, timeout=1.0)
        except (asyncio.TimeoutError, ConnectionError):
            self.sender.cancel()
        self.writer.close()


class Broker:
    def __init__(
        self,
        cfg: ScenarioConfig,
        run_id: str,
        accelerated: bool,
        settings: Optional[Settings] = None,
        tick_hook: Optional[TickHook] = None,
    ):
        self.cfg = cfg
        self.run_id = run_id
        self.settings = settings or get_settings()
        self.clock = FrameClock.from_config(cfg)
        self.pacer = Pacer(
            self.clock.frame_steps * self.clock.step,
            self.settings.HARD_OVERRUN_FACTOR,
            enabled=not accelerated,
        )
        self.supervisor = RateSupervisor(expected_rates(cfg))
        self.tick_hook = tick_hook
        self.nodes: Dict[str, NodeConnection] = {}
        self.reports: Dict[str, Dict[str, Any]] = {}
        self.crc_errors = 0
        self.epoch_ns = time.monotonic_ns()
        self.virtual_t = 0.0
        self._seq: Dict[int, int] = {}
        self._server: Optional[asyncio.AbstractServer] = None
        self._log = logger.bind(run_id=run_id)

    async def start(self) -> int:
        self._server = await asyncio.start_server(
            self._handle, self.settings.BUS_HOST, self.settings.BUS_PORT
        )
        port = self._server.sockets[0].getsockname()[1]
        self._log.info("Broker listening", host=self.settings.BUS_HOST, port=port)
        return port

    def _frame(self, payload: Payload) -> bytes:
        topic = int(payload.topic)
        seq = self._seq.get(topic, 0)
        self._seq[topic] = seq + 1
        stamp = max(time.monotonic_ns() - self.epoch_ns, 0)
        return encode_frame(
            Envelope(topic=topic, seq=seq, timestamp_ns=stamp, payload=payload.pack()),
            self.settings.MAX_FRAME_PAYLOAD,
        )

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn: Optional[NodeConnection] = None
        try:
            raw = await read_frame(reader, self.settings.MAX_FRAME_PAYLOAD)
            envelope = decode_frame(raw, self.settings.MAX_FRAME_PAYLOAD)
            hello = decode_payload(envelope.topic, envelope.payload)
            if not isinstance(hello, HelloPayload):
                raise BusError(f"Expected HELLO, got topic {envelope.topic}")
            conn = NodeConnection(hello.node, writer)
            self.nodes[hello.node] = conn
            self._log.info("Node up", node=hello.node, pid=hello.pid)
            while True:
                raw = await read_frame(reader, self.settings.MAX_FRAME_PAYLOAD)
                try:
                    envelope = decode_frame(raw, self.settings.MAX_FRAME_PAYLOAD)
                except FrameCrcError as e:
                    self.crc_errors += 1
                    self._log.warning("Frame dropped", node=conn.name, reason=str(e))
                    continue
                self._dispatch(conn, envelope, raw)
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        except (FrameError, BusError) as e:
            self._log.error("Connection rejected", node=conn.name if conn else None, reason=str(e))
        finally:
            if conn is not None and not conn.down:
                conn.mark_down()
                self._log.warning("Node down", node=conn.name, reason="disconnected")
            elif conn is None:
                writer.close()

    def _observed_time(self, envelope: Envelope) -> float:
        """Publisher wall time when paced, the current frame's virtual time otherwise"""
        if self.pacer.enabled:
            return envelope.timestamp_ns / 1e9
        return self.virtual_t

    def _dispatch(self, conn: NodeConnection, envelope: Envelope, raw: bytes) -> None:
        topic = envelope.topic
        if topic == Topic.ACK:
            conn.acks.put_nowait(AckPayload.unpack(envelope.payload))
        elif topic == Topic.SUBSCRIBE:
            conn.subscriptions = set(SubscribePayload.unpack(envelope.payload).topics)
        elif topic == Topic.HEARTBEAT:
            conn.ready.set()
        elif topic == Topic.NODE_REPORT:
            report = NodeReportPayload.unpack(envelope.payload)
            self.reports[report.node] = report.stats
        else:
            if topic in SUPERVISED:
                self.supervisor.observe(Topic(topic).name, self._observed_time(envelope))
            for other in self.nodes.values():
                if other is not conn and topic in other.subscriptions:
                    other.send(raw)

    async def wait_ready(self, names: Iterable[str], scenario: Dict[str, Any], timeout: float) -> None:
        """Wait for every node to connect, then hand out CONFIG and wait for readiness"""
        names = list(names)
        deadline = time.monotonic() + timeout
        while not all(n in self.nodes for n in names):
            if time.monotonic() > deadline:
                missing = [n for n in names if n not in self.nodes]
                raise RunAbortedError(f"Nodes never connected: {missing}")
            await asyncio.sleep(0.01)
        config = self._frame(ConfigPayload(run_id=self.run_id, epoch_ns=self.epoch_ns, scenario=scenario))
        for name in names:
            self.nodes[name].send(config)
        try:
            await asyncio.wait_for(
                asyncio.gather(*(self.nodes[n].ready.wait() for n in names)),
                timeout=max(deadline - time.monotonic(), 0.01),
            )
        except asyncio.TimeoutError as e:
            waiting = [n for n in names if not self.nodes[n].ready.is_set()]
            raise RunAbortedError(f"Nodes not ready: {waiting}") from e

    async def _phase(self, tick: int, t: float, phase: ClockPhase, control: bool, timeout: float) -> None:
        frame = self._frame(ClockPayload(tick=tick, t=t, phase=phase, control=control))
        for conn in self.nodes.values():
            conn.send(frame)
        await asyncio.gather(*(self._await_ack(conn, tick, phase, timeout) for conn in self.nodes.values()))

    async def _await_ack(self, conn: NodeConnection, tick: int, phase: ClockPhase, timeout: float) -> None:
        try:
            ack = await asyncio.wait_for(conn.acks.get(), timeout=timeout)
        except asyncio.TimeoutError as e:
            raise NodeDownError(conn.name, f"no ack for {phase.name} at tick {tick} within {timeout:g} s") from e
        if ack is None:
            raise NodeDownError(conn.name, "disconnected")
        if ack.tick != tick or ack.phase != phase:
            raise NodeDownError(conn.name, f"ack out of step ({ack.phase.name}@{ack.tick}, expected {phase.name}@{tick})")

    async def run(self) -> None:
        """Drive the virtual clock through the whole scenario"""
        clock = self.clock
        ack_timeout = self.settings.NODE_ACK_TIMEOUT_S
        self._log.info("Clock started", frames=clock.frames, paced=self.pacer.enabled)
        tick, t = 0, 0.0
        for frame in range(clock.frames + 1):
            tick, t = clock.tick_of(frame), clock.time_of(frame)
            self.virtual_t = t
            await self.pacer.acquire(t)
            if self.tick_hook is not None:
                result = self.tick_hook(tick, t)
                if inspect.isawaitable(result):
                    await result
            control = clock.is_control(frame)
            phases: List[ClockPhase] = [ClockPhase.MEASURE, ClockPhase.ESTIMATE]
            if control:
                phases.append(ClockPhase.CONTROL)
            if frame < clock.frames:
                phases.append(ClockPhase.ADVANCE)
            for phase in phases:
                await self._phase(tick, t, phase, control, ack_timeout)
        # nodes flush their logs and report before acking
        await self._phase(tick, t, ClockPhase.FINISH, False, self.settings.NODE_STARTUP_TIMEOUT_S)
        self._log.info(
            "Clock stopped",
            ticks=tick,
            late_frames=self.pacer.late_frames,
            overruns=self.supervisor.total_overruns,
        )

    async def shutdown(self, reason: str = "finished") -> None:
        frame = self._frame(ShutdownPayload(reason=reason))
        for conn in list(self.nodes.values()):
            conn.send(frame)
            await conn.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

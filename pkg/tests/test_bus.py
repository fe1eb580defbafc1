import asyncio
from typing import List

import numpy as np
import pytest

from app.clients.bus_client import BusClient, SequenceTracker
from app.core.exceptions import BusError, NodeDownError
from app.models.messages import (
    AckPayload,
    ClockPayload,
    ClockPhase,
    ConfigPayload,
    HeartbeatPayload,
    HelloPayload,
    RwStatePayload,
    ShutdownPayload,
    Topic,
)
from app.nodes.broker import Broker
from app.nodes.controller_node import ControllerNode
from app.nodes.rw_node import RwNode
from app.nodes.sim_node import SimNode
from app.services.run_log_service import merge_node_logs
from app.services.simulation_service import run_mil
from app.utils.framing import Envelope, encode_frame
from tests.conftest import make_scenario

HOST = "127.0.0.1"


class FakeNode:
    """Bus client that acks every CLOCK and records what it receives"""

    def __init__(self, name: str, port: int, topics=()):
        self.client = BusClient(name, HOST, port)
        self.topics = topics
        self.phases: List[ClockPhase] = []
        self.data: List[RwStatePayload] = []
        self.task = None

    async def start(self) -> "FakeNode":
        await self.client.connect(self.topics)
        self.task = asyncio.create_task(self._loop())
        return self

    async def _loop(self) -> None:
        while True:
            message = await self.client.receive()
            if message is None:
                break
            _, payload = message
            if isinstance(payload, ConfigPayload):
                await self.client.publish(HeartbeatPayload())
            elif isinstance(payload, ClockPayload):
                self.phases.append(payload.phase)
                await self.client.publish(AckPayload(tick=payload.tick, phase=payload.phase))
            elif isinstance(payload, ShutdownPayload):
                break
            else:
                self.data.append(payload)
        await self.client.close()


def short_scenario(duration: float = 0.1):
    return make_scenario(name="bus", noise_enabled=False, timing={"duration": duration, "accelerated": True})


async def started_broker(cfg) -> tuple:
    broker = Broker(cfg, "test", accelerated=True)
    port = await broker.start()
    return broker, port


async def ready(broker, cfg, nodes):
    await broker.wait_ready([n.client.node for n in nodes], cfg.model_dump(mode="json"), timeout=5.0)


async def finish(broker, nodes):
    await broker.shutdown()
    await asyncio.wait_for(asyncio.gather(*(n.task for n in nodes)), timeout=5.0)


def test_sequence_tracker_counts_gaps():
    tracker = SequenceTracker()
    for topic, seq in [(12, 0), (12, 1), (10, 0), (12, 4), (10, 1), (12, 5)]:
        tracker.observe(topic, seq)
    assert tracker.gaps == 2
    assert tracker.received == 6


async def test_fan_out_preserves_publisher_order():
    cfg = short_scenario()
    broker, port = await started_broker(cfg)
    publisher = await FakeNode("rw", port).start()
    first = await FakeNode("sim", port, (Topic.RW_STATE,)).start()
    second = await FakeNode("controller", port, (Topic.RW_STATE,)).start()
    nodes = [publisher, first, second]
    await ready(broker, cfg, nodes)

    for k in range(20):
        await publisher.client.publish(RwStatePayload(t=k * 0.05, Omega_meas=[float(k)], I_meas=[0.0]))
    for _ in range(200):
        if len(first.data) == 20 and len(second.data) == 20:
            break
        await asyncio.sleep(0.01)

    for node in (first, second):
        assert [p.Omega_meas[0] for p in node.data] == [float(k) for k in range(20)]
        assert node.client.tracker.gaps == 0
    assert publisher.data == []
    await finish(broker, nodes)


async def test_corrupted_frame_is_dropped_and_counted():
    cfg = short_scenario()
    broker, port = await started_broker(cfg)
    reader, writer = await asyncio.open_connection(HOST, port)
    hello = HelloPayload(node="probe", pid=1).pack()
    writer.write(encode_frame(Envelope(topic=Topic.HELLO, seq=0, timestamp_ns=0, payload=hello)))
    bad = bytearray(encode_frame(Envelope(topic=Topic.HEARTBEAT, seq=0, timestamp_ns=5)))
    bad[-1] ^= 0xFF
    writer.write(bytes(bad))
    writer.write(encode_frame(Envelope(topic=Topic.HEARTBEAT, seq=1, timestamp_ns=6)))
    await writer.drain()
    for _ in range(200):
        if "probe" in broker.nodes and broker.nodes["probe"].ready.is_set():
            break
        await asyncio.sleep(0.01)
    assert broker.crc_errors == 1
    assert broker.nodes["probe"].ready.is_set()
    writer.close()
    await broker.shutdown()


async def test_clock_phases_of_a_short_run():
    cfg = short_scenario(0.1)
    broker, port = await started_broker(cfg)
    nodes = [await FakeNode(name, port).start() for name in ("sim", "controller", "rw")]
    await ready(broker, cfg, nodes)
    await broker.run()

    M, E, C, A, F = (ClockPhase.MEASURE, ClockPhase.ESTIMATE, ClockPhase.CONTROL, ClockPhase.ADVANCE, ClockPhase.FINISH)
    for node in nodes:
        assert node.phases == [M, E, C, A, M, E, A, M, E, C, F]
    await finish(broker, nodes)


async def test_lost_node_stops_the_clock():
    cfg = short_scenario(1.0)
    broker, port = await started_broker(cfg)
    nodes = [await FakeNode(name, port).start() for name in ("sim", "controller", "rw")]
    await ready(broker, cfg, nodes)
    await nodes[2].client.close()

    with pytest.raises(NodeDownError) as exc:
        await broker.run()
    assert exc.value.node == "rw"
    await finish(broker, nodes)


async def test_unreachable_broker():
    client = BusClient("sim", HOST, 9)
    with pytest.raises(BusError):
        await client.connect()


async def test_in_process_nodes_match_mil(tmp_path):
    cfg = short_scenario(5.0)
    broker, port = await started_broker(cfg)
    paths = {name: tmp_path / f"{name}.csv" for name in ("sim", "controller", "rw")}
    nodes = [SimNode(HOST, port, paths["sim"]), ControllerNode(HOST, port, paths["controller"]), RwNode(HOST, port, paths["rw"])]
    tasks = [asyncio.create_task(node.serve()) for node in nodes]
    await broker.wait_ready(paths, cfg.model_dump(mode="json"), timeout=10.0)
    await broker.run()
    await broker.shutdown()
    await asyncio.wait_for(asyncio.gather(*tasks), timeout=10.0)

    distributed = merge_node_logs(cfg.wheel_count, paths["sim"], paths["controller"], paths["rw"])
    mil = run_mil(cfg).log
    assert len(distributed) == len(mil) == 51
    assert np.allclose(distributed.t, mil.t)
    assert np.allclose(distributed.group("theta_hat"), mil.group("theta_hat"), atol=0.02)
    assert np.allclose(distributed.group("sigma_e"), mil.group("sigma_e"), atol=1e-6)
    assert set(broker.reports) == {"sim", "controller", "rw"}
    assert broker.reports["controller"]["controller_exec"]["count"] == 51
    assert broker.reports["sim"]["health_updates"] == 51
    final = broker.reports["sim"]["health_final"]
    assert final["t"] == pytest.approx(5.0)
    assert np.allclose(final["theta_hat"], distributed.group("theta_hat")[-1], atol=1e-12)


async def test_accelerated_run_supervises_virtual_periods(tmp_path):
    cfg = short_scenario(2.0)
    broker, port = await started_broker(cfg)
    paths = {name: tmp_path / f"{name}.csv" for name in ("sim", "controller", "rw")}
    nodes = [SimNode(HOST, port, paths["sim"]), ControllerNode(HOST, port, paths["controller"]), RwNode(HOST, port, paths["rw"])]
    tasks = [asyncio.create_task(node.serve()) for node in nodes]
    await broker.wait_ready(paths, cfg.model_dump(mode="json"), timeout=10.0)
    await broker.run()
    await broker.shutdown()
    await asyncio.wait_for(asyncio.gather(*tasks), timeout=10.0)

    report = broker.supervisor.report()
    expected = {"RW_STATE": 50.0, "RW_CMD": 100.0, "EST_STATE": 100.0}
    for topic, period_ms in expected.items():
        assert report[topic]["samples"] > 0
        assert report[topic]["mean_ms"] == pytest.approx(period_ms, abs=1e-6)
        assert report[topic]["max_ms"] == pytest.approx(period_ms, abs=1e-6)
        assert report[topic]["overruns"] == 0

"""
Topic table and payload schemas of the pub/sub bus.

Numeric topics are packed little-endian with ``struct``; control-plane
topics (CONFIG, HELLO, SUBSCRIBE, SHUTDOWN, NODE_REPORT) carry UTF-8 JSON.
"""

import json
import struct
from enum import IntEnum
from typing import Annotated, Any, ClassVar, Dict, List, Type

from pydantic import AfterValidator, BaseModel, ConfigDict, ValidationError

from app.core.exceptions import FrameError, UnknownTopicError


class Topic(IntEnum):
    HEARTBEAT = 0
    CONFIG = 1
    EST_STATE = 10
    RW_CMD = 11
    RW_STATE = 12
    HEALTH_TLM = 13
    CLOCK = 20
    ACK = 21
    SHUTDOWN = 22
    SUBSCRIBE = 30
    HELLO = 31
    NODE_REPORT = 41


# RW_CMD mode byte
COMMAND_MODE_CODES = {"current": 0, "velocity": 1}
COMMAND_MODES = {code: mode for mode, code in COMMAND_MODE_CODES.items()}


class ClockPhase(IntEnum):
    MEASURE = 0
    ESTIMATE = 1
    CONTROL = 2
    ADVANCE = 3
    FINISH = 4


_DOUBLE = struct.Struct("<d")


def _doubles(values: List[float]) -> bytes:
    return struct.pack(f"<{len(values)}d", *values)


def _read_doubles(data: bytes, offset: int, count: int) -> List[float]:
    end = offset + count * _DOUBLE.size
    if len(data) < end:
        raise FrameError(f"Payload too short: need {end} bytes, have {len(data)}")
    return list(struct.unpack_from(f"<{count}d", data, offset))


class Payload(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False, extra="forbid")

    topic: ClassVar[Topic]

    def pack(self) -> bytes:
        return self.model_dump_json().encode("utf-8")

    @classmethod
    def unpack(cls, data: bytes) -> "Payload":
        try:
            return cls.model_validate(json.loads(data.decode("utf-8")))
        except ValueError as e:
            raise FrameError(f"Invalid {cls.topic.name} payload: {e}") from e


def _three_components(value: List[float]) -> List[float]:
    if len(value) != 3:
        raise ValueError(f"expected 3 components, got {len(value)}")
    return value


Vector3 = Annotated[List[float], AfterValidator(_three_components)]


class HeartbeatPayload(Payload):
    topic: ClassVar[Topic] = Topic.HEARTBEAT

    def pack(self) -> bytes:
        return b""

    @classmethod
    def unpack(cls, data: bytes) -> "HeartbeatPayload":
        if data:
            raise FrameError("Heartbeat carries no payload")
        return cls()


class EstStatePayload(Payload):
    """Simulator → controller, once per control period"""
    topic: ClassVar[Topic] = Topic.EST_STATE
    LAYOUT: ClassVar[struct.Struct] = struct.Struct("<16d")

    t: float
    sigma_hat: Vector3
    omega_hat: Vector3
    sigma_d: Vector3
    omega_d: Vector3
    omega_dot_d: Vector3

    def pack(self) -> bytes:
        return self.LAYOUT.pack(
            self.t, *self.sigma_hat, *self.omega_hat, *self.sigma_d, *self.omega_d, *self.omega_dot_d
        )

    @classmethod
    def unpack(cls, data: bytes) -> "EstStatePayload":
        if len(data) != cls.LAYOUT.size:
            raise FrameError(f"EST_STATE payload is {len(data)} bytes, expected {cls.LAYOUT.size}")
        v = cls.LAYOUT.unpack(data)
        return cls(
            t=v[0], sigma_hat=list(v[1:4]), omega_hat=list(v[4:7]),
            sigma_d=list(v[7:10]), omega_d=list(v[10:13]), omega_dot_d=list(v[13:16]),
        )


class RwCmdPayload(Payload):
    """Controller → wheel node; value is current [A] or speed [rad/s] per wheel"""
    topic: ClassVar[Topic] = Topic.RW_CMD
    HEAD: ClassVar[struct.Struct] = struct.Struct("<dBBI")

    t: float
    mode: int
    value: List[float]
    fault_mask: int = 0

    def pack(self) -> bytes:
        return self.HEAD.pack(self.t, self.mode, len(self.value), self.fault_mask) + _doubles(self.value)

    @classmethod
    def unpack(cls, data: bytes) -> "RwCmdPayload":
        if len(data) < cls.HEAD.size:
            raise FrameError("RW_CMD payload shorter than its header")
        t, mode, n, mask = cls.HEAD.unpack_from(data)
        if len(data) != cls.HEAD.size + n * _DOUBLE.size:
            raise FrameError(f"RW_CMD payload length does not match N={n}")
        return cls(t=t, mode=mode, value=_read_doubles(data, cls.HEAD.size, n), fault_mask=mask)


class RwStatePayload(Payload):
    """Wheel node → controller and simulator at the telemetry rate"""
    topic: ClassVar[Topic] = Topic.RW_STATE
    HEAD: ClassVar[struct.Struct] = struct.Struct("<dB")

    t: float
    Omega_meas: List[float]
    I_meas: List[float]

    def pack(self) -> bytes:
        if len(self.Omega_meas) != len(self.I_meas):
            raise FrameError("RW_STATE speed and current arrays differ in length")
        return self.HEAD.pack(self.t, len(self.Omega_meas)) + _doubles(self.Omega_meas) + _doubles(self.I_meas)

    @classmethod
    def unpack(cls, data: bytes) -> "RwStatePayload":
        if len(data) < cls.HEAD.size:
            raise FrameError("RW_STATE payload shorter than its header")
        t, n = cls.HEAD.unpack_from(data)
        if len(data) != cls.HEAD.size + 2 * n * _DOUBLE.size:
            raise FrameError(f"RW_STATE payload length does not match N={n}")
        return cls(
            t=t,
            Omega_meas=_read_doubles(data, cls.HEAD.size, n),
            I_meas=_read_doubles(data, cls.HEAD.size + n * _DOUBLE.size, n),
        )


class HealthTlmPayload(Payload):
    topic: ClassVar[Topic] = Topic.HEALTH_TLM
    HEAD: ClassVar[struct.Struct] = struct.Struct("<dB")

    t: float
    theta_hat: List[float]
    lam: float

    def pack(self) -> bytes:
        return self.HEAD.pack(self.t, len(self.theta_hat)) + _doubles(self.theta_hat) + _DOUBLE.pack(self.lam)

    @classmethod
    def unpack(cls, data: bytes) -> "HealthTlmPayload":
        if len(data) < cls.HEAD.size:
            raise FrameError("HEALTH_TLM payload shorter than its header")
        t, n = cls.HEAD.unpack_from(data)
        if len(data) != cls.HEAD.size + (n + 1) * _DOUBLE.size:
            raise FrameError(f"HEALTH_TLM payload length does not match N={n}")
        values = _read_doubles(data, cls.HEAD.size, n + 1)
        return cls(t=t, theta_hat=values[:n], lam=values[n])


class ClockPayload(Payload):
    """Broker → nodes: run the given phase of a tick"""
    topic: ClassVar[Topic] = Topic.CLOCK
    LAYOUT: ClassVar[struct.Struct] = struct.Struct("<QdBB")

    tick: int
    t: float
    phase: ClockPhase
    control: bool = False

    def pack(self) -> bytes:
        return self.LAYOUT.pack(self.tick, self.t, int(self.phase), int(self.control))

    @classmethod
    def unpack(cls, data: bytes) -> "ClockPayload":
        if len(data) != cls.LAYOUT.size:
            raise FrameError(f"CLOCK payload is {len(data)} bytes, expected {cls.LAYOUT.size}")
        tick, t, phase, control = cls.LAYOUT.unpack(data)
        return cls(tick=tick, t=t, phase=ClockPhase(phase), control=bool(control))


class AckPayload(Payload):
    """Node → broker: the phase of a tick is done"""
    topic: ClassVar[Topic] = Topic.ACK
    LAYOUT: ClassVar[struct.Struct] = struct.Struct("<QB")

    tick: int
    phase: ClockPhase

    def pack(self) -> bytes:
        return self.LAYOUT.pack(self.tick, int(self.phase))

    @classmethod
    def unpack(cls, data: bytes) -> "AckPayload":
        if len(data) != cls.LAYOUT.size:
            raise FrameError(f"ACK payload is {len(data)} bytes, expected {cls.LAYOUT.size}")
        tick, phase = cls.LAYOUT.unpack(data)
        return cls(tick=tick, phase=ClockPhase(phase))


class ConfigPayload(Payload):
    topic: ClassVar[Topic] = Topic.CONFIG

    run_id: str
    epoch_ns: int
    scenario: Dict[str, Any]


class HelloPayload(Payload):
    topic: ClassVar[Topic] = Topic.HELLO

    node: str
    pid: int


class SubscribePayload(Payload):
    topic: ClassVar[Topic] = Topic.SUBSCRIBE

    topics: List[int]


class ShutdownPayload(Payload):
    topic: ClassVar[Topic] = Topic.SHUTDOWN

    reason: str = "finished"


class NodeReportPayload(Payload):
    """Node → broker after FINISH: bus counters, loop timings, resources"""
    topic: ClassVar[Topic] = Topic.NODE_REPORT

    node: str
    stats: Dict[str, Any]


PAYLOADS: Dict[Topic, Type[Payload]] = {
    cls.topic: cls
    for cls in (
        HeartbeatPayload, ConfigPayload, EstStatePayload, RwCmdPayload, RwStatePayload,
        HealthTlmPayload, ClockPayload, AckPayload, ShutdownPayload, SubscribePayload,
        HelloPayload, NodeReportPayload,
    )
}


def decode_payload(topic: int, data: bytes) -> Payload:
    try:
        cls = PAYLOADS[Topic(topic)]
    except ValueError as e:
        raise UnknownTopicError(f"Unknown topic id {topic}") from e
    try:
        return cls.unpack(data)
    except ValidationError as e:
        raise FrameError(f"Invalid {cls.topic.name} payload: {e.error_count()} field error(s)") from e

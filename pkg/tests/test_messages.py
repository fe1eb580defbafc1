import math

import pytest
from pydantic import ValidationError

from app.core.exceptions import FrameError, UnknownTopicError
from app.models.messages import (
    PAYLOADS,
    AckPayload,
    ClockPayload,
    ClockPhase,
    ConfigPayload,
    EstStatePayload,
    HealthTlmPayload,
    HeartbeatPayload,
    RwCmdPayload,
    RwStatePayload,
    Topic,
    decode_payload,
)


def test_every_topic_has_a_schema():
    assert set(PAYLOADS) == set(Topic)


def test_golden_payloads_decode(golden_frames):
    for golden in golden_frames:
        if "decoded" not in golden:
            continue
        payload = decode_payload(golden["topic"], bytes.fromhex(golden["payload_hex"]))
        assert payload.model_dump() == golden["decoded"], golden["name"]
        assert payload.pack().hex() == golden["payload_hex"]


def test_est_state_layout():
    payload = EstStatePayload(
        t=1.5,
        sigma_hat=[0.1, 0.2, 0.3],
        omega_hat=[0.0, 0.0, 0.01],
        sigma_d=[0.0, 0.0, 0.0],
        omega_d=[0.0, -0.0011, 0.0],
        omega_dot_d=[0.0, 0.0, 0.0],
    )
    data = payload.pack()
    assert len(data) == 16 * 8
    assert decode_payload(Topic.EST_STATE, data) == payload


def test_vectors_need_three_components():
    with pytest.raises(ValidationError):
        EstStatePayload(
            t=0.0, sigma_hat=[0.1, 0.2], omega_hat=[0.0] * 3,
            sigma_d=[0.0] * 3, omega_d=[0.0] * 3, omega_dot_d=[0.0] * 3,
        )


def test_non_finite_values_are_rejected():
    with pytest.raises(ValidationError):
        RwCmdPayload(t=0.0, mode=1, value=[math.nan, 0.0])
    data = RwStatePayload(t=0.0, Omega_meas=[1.0], I_meas=[0.0]).pack().replace(
        bytes.fromhex("000000000000f03f"), bytes.fromhex("000000000000f07f")
    )
    with pytest.raises(FrameError):
        decode_payload(Topic.RW_STATE, data)


def test_length_mismatch_is_a_frame_error():
    data = RwCmdPayload(t=0.0, mode=0, value=[0.1, 0.2, 0.3]).pack()
    with pytest.raises(FrameError):
        decode_payload(Topic.RW_CMD, data[:-1])
    with pytest.raises(FrameError):
        decode_payload(Topic.EST_STATE, b"\x00" * 10)


def test_unknown_topic_id():
    with pytest.raises(UnknownTopicError):
        decode_payload(99, b"")


def test_heartbeat_is_empty():
    assert HeartbeatPayload().pack() == b""
    with pytest.raises(FrameError):
        decode_payload(Topic.HEARTBEAT, b"\x00")


def test_clock_and_ack():
    clock = ClockPayload(tick=500, t=5.0, phase=ClockPhase.CONTROL, control=True)
    assert decode_payload(Topic.CLOCK, clock.pack()) == clock
    ack = AckPayload(tick=500, phase=ClockPhase.CONTROL)
    assert decode_payload(Topic.ACK, ack.pack()) == ack


def test_health_telemetry():
    tlm = HealthTlmPayload(t=2.0, theta_hat=[1.0, 1.0, 0.5, 1.0], lam=3e-7)
    decoded = decode_payload(Topic.HEALTH_TLM, tlm.pack())
    assert decoded == tlm


def test_json_payloads():
    config = ConfigPayload(run_id="abc", epoch_ns=123, scenario={"name": "x", "seed": 7})
    assert decode_payload(Topic.CONFIG, config.pack()) == config
    with pytest.raises(FrameError):
        decode_payload(Topic.CONFIG, b"{not json")
    with pytest.raises(FrameError):
        decode_payload(Topic.CONFIG, b'{"run_id": "abc"}')

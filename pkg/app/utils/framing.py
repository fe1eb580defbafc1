"""
Binary frame codec of the bus.

Layout (little-endian)::

    version u8 | topic u16 | seq u64 | payload_len u32 | header_crc16 u16
    timestamp_ns u64 | payload | payload_crc32 u32

The header CRC is CRC-16/CCITT-FALSE over the first 15 bytes; the payload
CRC is CRC-32 (zlib) over timestamp and payload.
"""

import asyncio
import binascii
import struct
import zlib
from dataclasses import dataclass

from app.config.defaults import MAX_PAYLOAD_BYTES, PROTOCOL_VERSION
from app.core.exceptions import (
    FrameCrcError,
    FrameError,
    FrameTruncatedError,
    PayloadTooLargeError,
    UnknownTopicError,
    VersionMismatchError,
)
from app.models.messages import Topic

HEADER = struct.Struct("<BHQI")
HEADER_CRC = struct.Struct("<H")
TIMESTAMP = struct.Struct("<Q")
PAYLOAD_CRC = struct.Struct("<I")

HEADER_SIZE = HEADER.size + HEADER_CRC.size
FRAME_OVERHEAD = HEADER_SIZE + TIMESTAMP.size + PAYLOAD_CRC.size

CRC16_INIT = 0xFFFF

_TOPIC_IDS = frozenset(int(t) for t in Topic)


@dataclass(frozen=True)
class Envelope:
    topic: int
    seq: int
    timestamp_ns: int
    payload: bytes = b""
    version: int = PROTOCOL_VERSION

    @property
    def length(self) -> int:
        return len(self.payload)


def header_crc(header: bytes) -> int:
    return binascii.crc_hqx(header, CRC16_INIT)


def payload_crc(timestamp: bytes, payload: bytes) -> int:
    return zlib.crc32(payload, zlib.crc32(timestamp)) & 0xFFFFFFFF


def encode_frame(envelope: Envelope, max_payload: int = MAX_PAYLOAD_BYTES) -> bytes:
    if envelope.length > max_payload:
        raise PayloadTooLargeError(f"Payload of {envelope.length} bytes exceeds {max_payload}")
    header = HEADER.pack(envelope.version, envelope.topic, envelope.seq, envelope.length)
    stamp = TIMESTAMP.pack(envelope.timestamp_ns)
    return b"".join((
        header,
        HEADER_CRC.pack(header_crc(header)),
        stamp,
        envelope.payload,
        PAYLOAD_CRC.pack(payload_crc(stamp, envelope.payload)),
    ))


def parse_header(data: bytes, max_payload: int = MAX_PAYLOAD_BYTES):
    """Validated (version, topic, seq, payload_len) of a frame header"""
    if len(data) < HEADER_SIZE:
        raise FrameTruncatedError(f"Frame of {len(data)} bytes is shorter than the {HEADER_SIZE}-byte header")
    header = data[:HEADER.size]
    (crc,) = HEADER_CRC.unpack_from(data, HEADER.size)
    if crc != header_crc(header):
        raise FrameCrcError("Header CRC mismatch")
    version, topic, seq, length = HEADER.unpack(header)
    if version != PROTOCOL_VERSION:
        raise VersionMismatchError(f"Protocol version {version}, expected {PROTOCOL_VERSION}")
    if topic not in _TOPIC_IDS:
        raise UnknownTopicError(f"Unknown topic id {topic}")
    if length > max_payload:
        raise PayloadTooLargeError(f"Declared payload of {length} bytes exceeds {max_payload}")
    return version, topic, seq, length


def decode_frame(data: bytes, max_payload: int = MAX_PAYLOAD_BYTES) -> Envelope:
    version, topic, seq, length = parse_header(data, max_payload)
    expected = FRAME_OVERHEAD + length
    if len(data) < expected:
        raise FrameTruncatedError(f"Frame of {len(data)} bytes, header declares {expected}")
    if len(data) > expected:
        raise FrameError(f"{len(data) - expected} trailing bytes after frame")
    stamp = data[HEADER_SIZE:HEADER_SIZE + TIMESTAMP.size]
    body_start = HEADER_SIZE + TIMESTAMP.size
    payload = data[body_start:body_start + length]
    (crc,) = PAYLOAD_CRC.unpack_from(data, body_start + length)
    if crc != payload_crc(stamp, payload):
        raise FrameCrcError(f"Payload CRC mismatch on topic {topic} seq {seq}")
    (timestamp_ns,) = TIMESTAMP.unpack(stamp)
    return Envelope(topic=topic, seq=seq, timestamp_ns=timestamp_ns, payload=bytes(payload), version=version)


async def read_frame(reader: asyncio.StreamReader, max_payload: int = MAX_PAYLOAD_BYTES) -> bytes:
    """
    Raw bytes of the next frame on a stream.

    Header errors leave the stream unsynchronised and propagate; payload CRC
    is left to ``decode_frame`` so a corrupted frame can be dropped and the
    stream kept.
    """
    head = await reader.readexactly(HEADER_SIZE)
    _, _, _, length = parse_header(head, max_payload)
    rest = await reader.readexactly(TIMESTAMP.size + length + PAYLOAD_CRC.size)
    return head + rest

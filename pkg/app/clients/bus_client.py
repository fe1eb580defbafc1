import asyncio
import os
import time
from collections import defaultdict
from typing import Dict, Iterable, Optional, Tuple

import structlog
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from app.config.settings import get_settings
from app.core.exceptions import BusError, FrameCrcError, FrameError
from app.models.messages import HelloPayload, Payload, SubscribePayload, Topic, decode_payload
from app.utils.framing import Envelope, decode_frame, encode_frame, read_frame

logger = structlog.get_logger()
settings = get_settings()

Message = Tuple[Envelope, Payload]


class SequenceTracker:
    """Per-topic sequence bookkeeping on the receiving side"""

    def __init__(self):
        self.last: Dict[int, int] = {}
        self.received = 0
        self.gaps = 0

    def observe(self, topic: int, seq: int) -> int:
        """Frames missing before this one (0 when in order)"""
        self.received += 1
        previous = self.last.get(topic)
        self.last[topic] = seq
        if previous is None or seq == previous + 1:
            return 0
        missing = max(seq - previous - 1, 0)
        self.gaps += missing
        return missing


class BusClient:
    """
    Pub/sub client of one node.

    A background receive loop decodes frames into ``inbox``; frames with a
    bad payload CRC are dropped and counted. ``None`` on the inbox marks
    the end of the connection.
    """

    def __init__(self, node: str, host: str, port: int, max_payload: Optional[int] = None):
        self.node = node
        self.host = host
        self.port = port
        self.max_payload = max_payload or settings.MAX_FRAME_PAYLOAD
        self.epoch_ns: Optional[int] = None
        self.inbox: "asyncio.Queue[Optional[Message]]" = asyncio.Queue()
        self.tracker = SequenceTracker()
        self.crc_errors = 0
        self.decode_errors = 0
        self.sent = 0
        self._seq: Dict[int, int] = defaultdict(int)
        self._reader: Optional[asyncio.StreamReader] = None
        self._writer: Optional[asyncio.StreamWriter] = None
        self._receiver: Optional[asyncio.Task] = None
        self._log = logger.bind(node=node)

    @retry(
        stop=stop_after_attempt(settings.NODE_CONNECT_ATTEMPTS),
        wait=wait_exponential(multiplier=0.05, max=1.0),
        retry=retry_if_exception_type(OSError),
        reraise=True,
    )
    async def _open(self) -> None:
        self._reader, self._writer = await asyncio.open_connection(self.host, self.port)

    async def connect(self, topics: Iterable[Topic] = ()) -> None:
        try:
            await self._open()
        except OSError as e:
            raise BusError(f"Cannot reach broker at {self.host}:{self.port}: {e}") from e
        self._receiver = asyncio.create_task(self._receive_loop())
        await self.publish(HelloPayload(node=self.node, pid=os.getpid()))
        await self.publish(SubscribePayload(topics=[int(t) for t in topics]))
        self._log.info("Connected to broker", host=self.host, port=self.port)

    def timestamp_ns(self) -> int:
        """Run-epoch-relative monotonic time"""
        if self.epoch_ns is None:
            return 0
        return max(time.monotonic_ns() - self.epoch_ns, 0)

    async def publish(self, payload: Payload) -> int:
        if self._writer is None:
            raise BusError(f"Node '{self.node}' is not connected")
        topic = int(payload.topic)
        seq = self._seq[topic]
        self._seq[topic] = seq + 1
        frame = encode_frame(
            Envelope(topic=topic, seq=seq, timestamp_ns=self.timestamp_ns(), payload=payload.pack()),
            self.max_payload,
        )
        self._writer.write(frame)
        await self._writer.drain()
        self.sent += 1
        return seq

    async def receive(self) -> Optional[Message]:
        return await self.inbox.get()

    async def _receive_loop(self) -> None:
        try:
            while True:
                raw = await read_frame(self._reader, self.max_payload)
                try:
                    envelope = decode_frame(raw, self.max_payload)
                except FrameCrcError as e:
                    self.crc_errors += 1
                    self._log.warning("Frame dropped", reason=str(e), crc_errors=self.crc_errors)
                    continue
                missing = self.tracker.observe(envelope.topic, envelope.seq)
                if missing:
                    self._log.warning("Sequence gap", topic=Topic(envelope.topic).name, missing=missing)
                try:
                    payload = decode_payload(envelope.topic, envelope.payload)
                except FrameError as e:
                    self.decode_errors += 1
                    self._log.warning("Payload rejected", topic=envelope.topic, reason=str(e))
                    continue
                await self.inbox.put((envelope, payload))
        except (asyncio.IncompleteReadError, ConnectionError):
            self._log.info("Broker connection closed")
        except FrameError as e:
            self._log.error("Stream desynchronised", reason=str(e))
        finally:
            await self.inbox.put(None)

    def stats(self) -> Dict[str, int]:
        return {
            "sent": self.sent,
            "received": self.tracker.received,
            "crc_errors": self.crc_errors,
            "sequence_gaps": self.tracker.gaps,
            "decode_errors": self.decode_errors,
        }

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except ConnectionError:
                pass
        if self._receiver is not None:
            self._receiver.cancel()

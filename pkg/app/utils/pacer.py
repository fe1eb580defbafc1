import asyncio
from time import perf_counter
from typing import Optional

import structlog

from app.core.exceptions import RunAbortedError

logger = structlog.get_logger()


class Pacer:
    """Async wall-clock pacer holding virtual time to 1× real time"""

    def __init__(self, period: float, hard_overrun_factor: float, enabled: bool = True):
        self.period = period
        self.hard_overrun_factor = hard_overrun_factor
        self.enabled = enabled
        self.start: Optional[float] = None
        self.late_frames = 0
        self.max_lateness = 0.0
        self._lock = asyncio.Lock()

    async def acquire(self, t: float) -> None:
        """Wait until virtual time t is due on the wall clock"""
        if not self.enabled:
            return
        async with self._lock:
            now = perf_counter()
            if self.start is None:
                self.start = now - t
            lateness = now - (self.start + t)

            if lateness > self.hard_overrun_factor * self.period:
                logger.error("Hard overrun", t=t, lateness_ms=round(lateness * 1e3, 3))
                raise RunAbortedError(
                    f"Fell {lateness * 1e3:.1f} ms behind real time at t={t:.3f} s "
                    f"(limit {self.hard_overrun_factor:g} periods)"
                )
            if lateness > 0.0:
                self.max_lateness = max(self.max_lateness, lateness)
                if lateness > self.period:
                    self.late_frames += 1
                return

            await asyncio.sleep(-lateness)

import asyncio
import time

import pytest

from app.core.exceptions import RunAbortedError
from app.utils.pacer import Pacer


async def test_disabled_pacer_never_waits():
    pacer = Pacer(period=1.0, hard_overrun_factor=2.0, enabled=False)
    start = time.perf_counter()
    for k in range(5):
        await pacer.acquire(float(k))
    assert time.perf_counter() - start < 0.5


async def test_pacer_holds_real_time():
    pacer = Pacer(period=0.05, hard_overrun_factor=20.0)
    start = time.perf_counter()
    for k in range(5):
        await pacer.acquire(k * 0.05)
    assert time.perf_counter() - start >= 0.19
    assert pacer.late_frames == 0


async def test_hard_overrun_aborts():
    pacer = Pacer(period=0.01, hard_overrun_factor=5.0)
    await pacer.acquire(0.0)
    await asyncio.sleep(0.2)
    with pytest.raises(RunAbortedError, match="behind real time"):
        await pacer.acquire(0.01)


async def test_late_frames_are_counted():
    pacer = Pacer(period=0.01, hard_overrun_factor=100.0)
    await pacer.acquire(0.0)
    await asyncio.sleep(0.05)
    await pacer.acquire(0.01)
    assert pacer.late_frames == 1
    assert pacer.max_lateness > 0.01

from typing import Dict, List, Optional

import structlog

from app.config.defaults import RATE_TOLERANCE
from app.utils.helpers import period_stats

logger = structlog.get_logger()


class TopicRate:
    def __init__(self, expected: float, tolerance: float):
        self.expected = expected
        self.tolerance = tolerance
        self.periods: List[float] = []
        self.overruns = 0
        self.last: Optional[float] = None


class RateSupervisor:
    """
    Achieved-period statistics per topic.

    An overrun is a period longer than expected·(1 + tolerance); a stall
    spanning several periods counts each missed period.
    """

    def __init__(self, expected: Dict[str, float], tolerance: float = RATE_TOLERANCE):
        self.topics = {name: TopicRate(period, tolerance) for name, period in expected.items()}

    def observe(self, topic: str, t: float) -> None:
        rate = self.topics.get(topic)
        if rate is None:
            return
        if rate.last is not None:
            period = t - rate.last
            rate.periods.append(period)
            if period > rate.expected * (1.0 + rate.tolerance):
                missed = max(1, int(period / rate.expected + 1e-9) - 1)
                rate.overruns += missed
                logger.warning(
                    "Rate overrun",
                    topic=topic,
                    period_ms=round(period * 1e3, 3),
                    expected_ms=round(rate.expected * 1e3, 3),
                    missed=missed,
                )
        rate.last = t

    @property
    def total_overruns(self) -> int:
        return sum(r.overruns for r in self.topics.values())

    def report(self) -> Dict[str, Dict]:
        out = {}
        for name, rate in self.topics.items():
            stats = period_stats(rate.periods)
            out[name] = {
                "expected_ms": rate.expected * 1e3,
                "mean_ms": None if stats["mean"] is None else stats["mean"] * 1e3,
                "p99_ms": None if stats["p99"] is None else stats["p99"] * 1e3,
                "max_ms": None if stats["max"] is None else stats["max"] * 1e3,
                "std_ms": None if stats["std"] is None else stats["std"] * 1e3,
                "samples": stats["count"],
                "overruns": rate.overruns,
            }
        return out

import pytest

from app.services.rate_supervisor_service import RateSupervisor


def test_exact_rate_has_no_overruns():
    supervisor = RateSupervisor({"RW_STATE": 0.05})
    for k in range(1000):
        supervisor.observe("RW_STATE", k * 0.05)
    report = supervisor.report()["RW_STATE"]
    assert report["overruns"] == 0
    assert report["samples"] == 999
    assert report["mean_ms"] == pytest.approx(50.0)
    assert report["expected_ms"] == pytest.approx(50.0)


def test_stall_counts_missed_periods():
    supervisor = RateSupervisor({"RW_STATE": 0.05})
    t = 0.0
    for k in range(100):
        t = k * 0.05
        supervisor.observe("RW_STATE", t)
    supervisor.observe("RW_STATE", t + 0.05 + 0.3)
    assert supervisor.total_overruns >= 2
    assert supervisor.report()["RW_STATE"]["max_ms"] == pytest.approx(350.0)


def test_jitter_within_tolerance_is_not_an_overrun():
    supervisor = RateSupervisor({"EST_STATE": 0.1})
    for t in (0.0, 0.12, 0.2, 0.31, 0.4):
        supervisor.observe("EST_STATE", t)
    assert supervisor.total_overruns == 0


def test_unknown_topics_are_ignored():
    supervisor = RateSupervisor({"EST_STATE": 0.1})
    supervisor.observe("HEARTBEAT", 0.0)
    supervisor.observe("HEARTBEAT", 10.0)
    assert set(supervisor.report()) == {"EST_STATE"}


def test_empty_topic_reports_no_statistics():
    report = RateSupervisor({"RW_CMD": 0.1}).report()["RW_CMD"]
    assert report["mean_ms"] is None
    assert report["samples"] == 0

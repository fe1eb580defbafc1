import numpy as np
import pytest

from app.services.metrics_service import compute_metrics, evaluate_acceptance, exec_time_stats, host_resources
from app.services.run_log_service import CONTROLLER_GROUPS, SIM_GROUPS, WHEEL_GROUPS, RunLog
from tests.conftest import make_scenario

N = 4


def values(groups, fill: float = 0.0):
    return {name: [fill] * (N if width == "N" else width) for name, width in groups}


def synthetic_log(rows: int = 11, theta_final=(1.0, 1.0, 0.5, 1.0), lam_step: float = 1e-8, device_speed=None) -> RunLog:
    log = RunLog(N)
    for k in range(rows):
        sim = values(SIM_GROUPS)
        sim["sigma_e"] = [0.01 * (rows - k), 0.0, 0.0]
        sim["H"] = [1.0, 0.0, 1e-9 * k]
        controller = values(CONTROLLER_GROUPS)
        controller["theta_hat"] = list(theta_final) if k == rows - 1 else [1.0] * N
        controller["lambda"] = [lam_step * k]
        wheels = values(WHEEL_GROUPS, 100.0)
        if device_speed is not None:
            wheels["Omega_device"] = list(device_speed(k))
        log.append(k * 0.1, sim, controller, wheels)
    return log


def test_empty_log_has_no_data():
    assert compute_metrics(RunLog(N)) == {"status": "no data"}


def test_exec_time_stats_in_milliseconds():
    stats = exec_time_stats([0.001, 0.002, 0.003])
    assert stats["count"] == 3
    assert stats["mean_ms"] == pytest.approx(2.0)
    assert stats["max_ms"] == pytest.approx(3.0)
    assert stats["std_ms"] == pytest.approx(np.sqrt(2.0 / 3.0))
    assert exec_time_stats([])["mean_ms"] is None


def test_summary_fields():
    summary = compute_metrics(
        synthetic_log(),
        controller_exec_times=[0.001],
        extra={"lambda_bar": 4.5e-8, "mode": "mil"},
    )
    assert summary["status"] == "completed"
    assert summary["rows"] == 11
    assert summary["duration_s"] == pytest.approx(1.0)
    assert summary["final_theta_hat"] == [1.0, 1.0, 0.5, 1.0]
    assert summary["lambda_crossed_at_s"] == pytest.approx(0.5)
    assert summary["final_sigma_e_norm"] == pytest.approx(0.01)
    assert summary["momentum_drift"] == pytest.approx(1e-8)
    assert summary["mode"] == "mil"
    assert "lambda_bar" not in summary
    assert summary["controller_exec"]["count"] == 1


def test_host_resources_are_positive():
    import time

    usage = host_resources(time.perf_counter() - 1.0, time.process_time())
    assert usage["wall_s"] >= 1.0
    assert usage["peak_rss_mb"] > 0.0


def scenario_with(**acceptance):
    return make_scenario(timing={"duration": 1.0}, acceptance=acceptance)


def test_acceptance_passes_within_bounds():
    log = synthetic_log()
    cfg = scenario_with(theta_final={3: [0.45, 0.55], 1: [0.85, 1.0]}, lambda_cross_before=0.8)
    summary = compute_metrics(log, extra={"lambda_bar": 4.5e-8})
    assert evaluate_acceptance(log, cfg, summary) == []


def test_acceptance_reports_each_failure():
    log = synthetic_log(theta_final=(1.0, 1.0, 0.9, 1.0))
    cfg = scenario_with(theta_final={3: [0.45, 0.55]}, lambda_cross_before=0.2, hold_error_bound=0.05, hold_window=0.5)
    summary = compute_metrics(log, extra={"lambda_bar": 4.5e-8})
    failures = evaluate_acceptance(log, cfg, summary)
    assert len(failures) == 3
    assert any("theta_hat_3" in f for f in failures)
    assert any("lambda crossed" in f for f in failures)
    assert any("sigma_e" in f for f in failures)


def test_no_acceptance_block_means_no_checks():
    log = synthetic_log()
    assert evaluate_acceptance(log, make_scenario(timing={"duration": 1.0}), compute_metrics(log)) == []


def test_stall_check_allows_friction_decay():
    cfg = scenario_with(stalled_wheel_speed_change=1.0)
    decay = cfg.wheels.friction / cfg.wheels.wheel_inertia
    log = synthetic_log(device_speed=lambda k: np.full(N, 100.0 * np.exp(-decay * k * 0.1)))
    assert evaluate_acceptance(log, cfg, compute_metrics(log)) == []


def test_stall_check_flags_moving_wheels():
    cfg = scenario_with(stalled_wheel_speed_change=1.0)
    log = synthetic_log(device_speed=lambda k: np.full(N, 100.0 + 5.0 * k))
    failures = evaluate_acceptance(log, cfg, compute_metrics(log))
    assert len(failures) == 1
    assert "stall" in failures[0]

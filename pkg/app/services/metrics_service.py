import resource
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np
import structlog

from app.models.scenario import AcceptanceConfig, ScenarioConfig
from app.services.guidance_service import GuidanceService
from app.services.run_log_service import RunLog
from app.utils.helpers import period_stats

logger = structlog.get_logger()


def host_resources(wall_start: float, cpu_start: float) -> Dict[str, float]:
    """CPU share and peak resident memory of the calling process"""
    wall = max(time.perf_counter() - wall_start, 1e-12)
    cpu = time.process_time() - cpu_start
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # ru_maxrss is bytes on macOS, kilobytes elsewhere
    peak_mb = peak / (1024.0 * 1024.0) if sys.platform == "darwin" else peak / 1024.0
    return {
        "wall_s": wall,
        "cpu_s": cpu,
        "cpu_share": cpu / wall,
        "peak_rss_mb": peak_mb,
    }


def exec_time_stats(samples: List[float]) -> Dict[str, Optional[float]]:
    """Execution-time statistics in milliseconds"""
    stats = period_stats(samples)
    return {
        "count": stats["count"],
        "mean_ms": None if stats["mean"] is None else stats["mean"] * 1e3,
        "max_ms": None if stats["max"] is None else stats["max"] * 1e3,
        "std_ms": None if stats["std"] is None else stats["std"] * 1e3,
        "p99_ms": None if stats["p99"] is None else stats["p99"] * 1e3,
    }


def compute_metrics(
    log: RunLog,
    controller_exec_times: Optional[List[float]] = None,
    rates: Optional[Dict[str, Any]] = None,
    resources: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Summary block of a completed run"""
    if len(log) == 0:
        return {"status": "no data"}

    t = log.t
    theta = log.group("theta_hat")
    lam = log.column("lambda")
    sigma_e = log.group("sigma_e")
    omega_err = log.group("omega_err")
    H = log.group("H")

    crossed = None
    if extra and extra.get("lambda_bar") is not None:
        above = np.nonzero(lam >= extra["lambda_bar"])[0]
        crossed = float(t[above[0]]) if above.size else None

    H0 = H[0]
    drift = float(np.max(np.linalg.norm(H - H0, axis=1)))
    tracking = log.group("Omega_meas") - log.group("Omega_true")

    summary: Dict[str, Any] = {
        "status": "completed",
        "rows": len(log),
        "duration_s": float(t[-1] - t[0]),
        "final_theta_hat": [float(v) for v in theta[-1]],
        "final_lambda": float(lam[-1]),
        "lambda_crossed_at_s": crossed,
        "final_sigma_e_norm": float(np.linalg.norm(sigma_e[-1])),
        "final_omega_err_norm": float(np.linalg.norm(omega_err[-1])),
        "momentum_drift": drift,
        "momentum_drift_relative": drift / max(1.0, float(np.linalg.norm(H0))),
        "wheel_tracking_rms": float(np.sqrt(np.mean(tracking ** 2))),
        "controller_exec": exec_time_stats(controller_exec_times or []),
        "rates": rates or {},
        "resources": resources or {},
    }
    if extra:
        summary.update({k: v for k, v in extra.items() if k != "lambda_bar"})
    logger.info(
        "Run metrics",
        final_theta_hat=summary["final_theta_hat"],
        lambda_crossed_at_s=crossed,
        controller_mean_ms=summary["controller_exec"]["mean_ms"],
    )
    return summary


def evaluate_acceptance(log: RunLog, cfg: ScenarioConfig, summary: Dict[str, Any]) -> List[str]:
    """Failed acceptance assertions of the scenario (empty when all pass)"""
    acceptance: Optional[AcceptanceConfig] = cfg.acceptance
    if acceptance is None or len(log) == 0:
        return []

    failures: List[str] = []
    final_theta = summary["final_theta_hat"]
    for wheel, (low, high) in sorted(acceptance.theta_final.items()):
        value = final_theta[wheel - 1]
        if not low <= value <= high:
            failures.append(f"theta_hat_{wheel}={value:.4f} outside [{low}, {high}]")

    if acceptance.lambda_cross_before is not None:
        crossed = summary.get("lambda_crossed_at_s")
        if crossed is None or crossed >= acceptance.lambda_cross_before:
            failures.append(f"lambda crossed at {crossed}, required before {acceptance.lambda_cross_before} s")

    t = log.t
    error_norm = np.linalg.norm(log.group("sigma_e"), axis=1)
    rate_norm = np.linalg.norm(log.group("omega_err"), axis=1)
    bounds = GuidanceService(cfg).phase_bounds(cfg.timing.duration)
    for i, (start, end) in enumerate(bounds):
        in_phase = (t >= start) & (t < end) if i < len(bounds) - 1 else (t >= start) & (t <= end)
        if not np.any(in_phase):
            continue
        if acceptance.hold_error_bound is not None:
            window = in_phase & (t >= end - acceptance.hold_window)
            worst = float(np.max(error_norm[window])) if np.any(window) else None
            if worst is not None and worst >= acceptance.hold_error_bound:
                failures.append(f"phase {i}: |sigma_e| reached {worst:.4g} in final {acceptance.hold_window} s")
        if acceptance.phase_end_rate_bound is not None:
            last = np.nonzero(in_phase)[0][-1]
            if rate_norm[last] >= acceptance.phase_end_rate_bound:
                failures.append(f"phase {i}: body-rate error {rate_norm[last]:.4g} rad/s at phase end")

    if acceptance.stalled_wheel_speed_change is not None:
        # a stalled wheel only coasts down under friction
        Omega = log.group("Omega_device")
        coast = np.exp(-cfg.wheels.friction * (t[-1] - t[0]) / cfg.wheels.wheel_inertia)
        change = float(np.max(np.abs(Omega[-1] - Omega[0] * coast)))
        if change > acceptance.stalled_wheel_speed_change:
            failures.append(f"wheels moved {change:.4g} rad/s beyond friction decay, expected a stall")

    for failure in failures:
        logger.warning("Acceptance check failed", detail=failure)
    return failures

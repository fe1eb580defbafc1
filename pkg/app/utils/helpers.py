import hashlib
from typing import Dict, List, Optional, Tuple

import numpy as np


def sign(value):
    """Sign with sign(0) = 0"""
    return np.sign(value)


def content_digest(data: bytes) -> str:
    """Stable hex digest used for configs and run logs"""
    return hashlib.sha256(data).hexdigest()


def lowpass_gain(dt: float, cutoff_hz: float) -> float:
    """Blend factor a of y ← y + a·(x − y) for a first-order filter at cutoff_hz"""
    tau = 1.0 / (2.0 * np.pi * cutoff_hz)
    return dt / (dt + tau)


def period_stats(samples: List[float]) -> Dict[str, Optional[float]]:
    """mean / p99 / max / std of a list of durations (seconds)"""
    if not samples:
        return {"count": 0, "mean": None, "p99": None, "max": None, "std": None}
    arr = np.asarray(samples, dtype=float)
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "p99": float(np.percentile(arr, 99)),
        "max": float(arr.max()),
        "std": float(arr.std()),
    }


def rng_streams(seed: int, n_wheels: int) -> Tuple[np.random.Generator, List[np.random.Generator]]:
    """Independent generators for the sensor suite and for each wheel"""
    sensors, wheels = np.random.SeedSequence(seed).spawn(2)
    return (
        np.random.default_rng(sensors),
        [np.random.default_rng(s) for s in wheels.spawn(n_wheels)],
    )

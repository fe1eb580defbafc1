"""
Named default tables.

Every physical constant the services use comes either from the scenario file
or from one of these tables. The spacecraft and gain tables carry two columns,
``hil`` (the reduced-scale testbed) and ``simulation`` (the full-size model);
``profile`` in the scenario picks the column for fields it leaves out.
"""

import math
from typing import Any, Dict

SCHEMA_VERSION = 1
RUN_LOG_SCHEMA_VERSION = 1

_INV_SQRT3 = 1.0 / math.sqrt(3.0)

# Pyramid of four wheels, one 3-vector per row (row i is spin axis ŝ_i)
SPIN_AXES = [
    [_INV_SQRT3, _INV_SQRT3, _INV_SQRT3],
    [-_INV_SQRT3, _INV_SQRT3, _INV_SQRT3],
    [_INV_SQRT3, -_INV_SQRT3, _INV_SQRT3],
    [-_INV_SQRT3, -_INV_SQRT3, _INV_SQRT3],
]

# Tolerated spin-axis norm error before normalisation at load
SPIN_AXIS_NORM_TOLERANCE = 1e-3

SPACECRAFT_PROFILES: Dict[str, Dict[str, Any]] = {
    "hil": {
        "mass": 20.0,
        "inertia": [0.30, 0.42, 0.42],
        "spin_axes": SPIN_AXES,
    },
    "simulation": {
        "mass": 65.0,
        "inertia": [0.44, 0.70, 0.70],
        "spin_axes": SPIN_AXES,
    },
}

WHEEL_PROFILES: Dict[str, Dict[str, Any]] = {
    "hil": {"max_torque": 50e-3, "max_speed": 366.0},
    "simulation": {"max_torque": 20e-3, "max_speed": 1040.0},
}

GAIN_PROFILES: Dict[str, Dict[str, Any]] = {
    "hil": {
        "k_icl": 1.0,
        "k": 1e-2,
        "alpha": 3e-2,
        "beta": 5e-3,
        "gamma": 100.0,
        "lambda_bar": 1e-7,
    },
    "simulation": {
        "k_icl": 10.0,
        "k": 5e-1,
        "alpha": 3e-2,
        "beta": 5e-3,
        "gamma": 100.0,
        "lambda_bar": 1e-7,
    },
}

WHEEL_DEFAULTS: Dict[str, Any] = {
    "command_mode": "velocity",
    "wheel_inertia": 5.0e-4,
    "torque_constant": 0.05,
    "current_limit": 1.0,
    "deadband_current": 0.3,
    "deadband_compensation": False,
    "kickstart_current": 0.0,
    "kickstart_duration": 0.0,
    "velocity_kp": 0.01,
    "velocity_ki": 0.05,
    "friction": 1e-6,
    "telemetry_cutoff_hz": 5.0,
    "speed_noise_high": 0.05,
    "speed_noise_low": 2.0,
    "noisy_speed_threshold": 20.0,
    "current_noise": 0.005,
    "initial_speeds": [100.0, -100.0, -100.0, 100.0],
}

SENSOR_DEFAULTS: Dict[str, Any] = {
    "gyro_period": 0.1,
    "mag_period": 0.5,
    "sun_period": 0.5,
    # 1e-4 rad/s per 10 Hz sample
    "gyro_noise_density": 1e-4 * math.sqrt(0.1),
    "gyro_bias_walk": 1e-6,
    "gyro_initial_bias": [2e-4, -1e-4, 1.5e-4],
    "mag_noise": 2e-3,
    "sun_noise": 1e-3,
    "mag_reference": [1.0, 0.0, 0.2],
    "sun_reference": [0.0, 1.0, 0.3],
}

# Minimum angle between the two reference directions
MIN_REFERENCE_SEPARATION_DEG = 10.0

ESTIMATOR_DEFAULTS: Dict[str, Any] = {
    "initial_attitude_error": [0.01, -0.01, 0.005],
    "initial_attitude_sigma": 0.05,
    "initial_bias_sigma": 1e-3,
    "gate": 16.0,
    "measurement_noise_floor": 1e-6,
}

ICL_DEFAULTS: Dict[str, Any] = {
    "history_size": 20,
    "window": 10.0,
    "candidate_period": 1.0,
    "admit_ratio": 0.01,
    "min_regressor_norm": 1e-9,
    "quadrature": "trapezoid",
}

HEALTH_BOUNDS: Dict[str, float] = {
    "theta_min": 0.05,
    "theta_max": 1.0,
    "theta_initial": 1.0,
}

TIMING_DEFAULTS: Dict[str, float] = {
    "duration": 4000.0,
    "step": 0.01,
    "control_period": 0.1,
    "telemetry_period": 0.05,
}

GUIDANCE_DEFAULTS: Dict[str, Any] = {
    "switch_period": 720.0,
    "alternations": 3,
    "nadir_hold_after": 2000.0,
}

ORBIT_DEFAULTS: Dict[str, Any] = {
    "rate": 0.0011,
    "initial_phase": 0.0,
    "normal": [0.0, 0.0, 1.0],
}

INITIAL_ATTITUDE = [0.1, -0.2, 0.15]

# Low-pass cutoff of the simulator-side differentiated wheel acceleration
ACCEL_CUTOFF_HZ = 2.0

# Rate-supervisor tolerance on achieved periods
RATE_TOLERANCE = 0.5

PROTOCOL_VERSION = 1
MAX_PAYLOAD_BYTES = 65536

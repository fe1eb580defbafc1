import numpy as np
import pytest
import scipy.linalg
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.core.exceptions import AllocationError
from app.models.state import CommandMode, EstimateSnapshot, GuidanceSample, WheelCommand
from app.services.controller_service import (
    AdaptiveController,
    allocate,
    body_to_wheel_torque,
    command_scales,
    command_to_wheel_torque,
    compute_aux_control,
    fault_mask,
    induce_command_fault,
    torque_to_current_cmd,
    torque_to_velocity_cmd,
)
from app.utils.attitude import dcm_from_mrp
from tests.conftest import make_scenario

IDENTITY_GUIDANCE = GuidanceSample(sigma_d=np.zeros(3), omega_d=np.zeros(3), omega_dot_d=np.zeros(3))


@settings(max_examples=200, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    arrays(np.float64, 4, elements=st.floats(0.05, 1.0)),
    arrays(np.float64, 3, elements=st.floats(-1e-2, 1e-2)),
)
def test_allocation_matches_least_squares(params, theta, u_d):
    A = params.G * theta
    expected = scipy.linalg.lstsq(A, u_d)[0]
    u = allocate(u_d, theta, params.G)
    assert np.allclose(u, expected, atol=1e-9)
    assert np.allclose(A @ u, u_d, atol=1e-9)


def test_allocation_rejects_rank_deficient_array(params):
    with pytest.raises(AllocationError):
        allocate(np.array([1e-3, 0.0, 0.0]), np.array([1.0, 0.0, 0.0, 1.0]), params.G)


def test_allocation_over_ten_thousand_draws(params):
    rng = np.random.default_rng(7)
    for _ in range(10000):
        theta = rng.uniform(0.05, 1.0, 4)
        u_d = rng.uniform(-1e-2, 1e-2, 3)
        A = params.G * theta
        u = allocate(u_d, theta, params.G)
        assert np.allclose(A @ u, u_d, atol=1e-9)
        assert abs(np.linalg.norm(u) - np.linalg.norm(scipy.linalg.lstsq(A, u_d)[0])) < 1e-9


def test_pyramid_splits_yaw_torque_evenly(params):
    tau = 0.01
    u = allocate(np.array([0.0, 0.0, tau]), np.ones(4), params.G)
    assert u == pytest.approx(np.full(4, 0.75 / np.sqrt(3.0) * tau), abs=1e-12)
    assert u / tau == pytest.approx(np.full(4, 0.4330), abs=1e-4)


def kinematics_matrix(s: np.ndarray) -> np.ndarray:
    s2 = s @ s
    cross = np.array([[0.0, -s[2], s[1]], [s[2], 0.0, -s[0]], [-s[1], s[0], 0.0]])
    return (1.0 - s2) * np.eye(3) + 2.0 * cross + 2.0 * np.outer(s, s)


def dense_aux_torque(sigma, omega, g_sample, Omega, p, g) -> np.ndarray:
    """Straight-line evaluation of the auxiliary control law"""
    R = dcm_from_mrp(sigma) @ dcm_from_mrp(g_sample.sigma_d).T
    b0 = 0.5 * np.sqrt(1.0 + np.trace(R))
    b = np.array([R[1, 2] - R[2, 1], R[2, 0] - R[0, 2], R[0, 1] - R[1, 0]]) / (4.0 * b0)
    sigma_e = b / (1.0 + b0)
    omega_err = omega - R @ g_sample.omega_d
    B = kinematics_matrix(sigma_e)
    sigma_e_dot = 0.25 * B @ omega_err
    # B is quadratic in σ, so a unit central difference is exact
    B_dot = 0.5 * (kinematics_matrix(sigma_e + sigma_e_dot) - kinematics_matrix(sigma_e - sigma_e_dot))
    r = sigma_e_dot + g.alpha @ sigma_e
    H = p.J @ omega + p.J_RW * (p.G @ Omega)
    inner = -0.25 * B_dot @ omega_err - g.alpha @ sigma_e_dot - g.K @ r - g.beta * sigma_e
    return (
        np.cross(omega, H)
        + p.J @ R @ g_sample.omega_dot_d
        - p.J @ np.cross(omega_err, R @ g_sample.omega_d)
        + 4.0 * p.J @ np.linalg.inv(B) @ inner
    )


def test_aux_control_matches_dense_evaluation(params, gains):
    rng = np.random.default_rng(11)
    for _ in range(50):
        g_sample = GuidanceSample(
            sigma_d=rng.uniform(-0.1, 0.1, 3),
            omega_d=rng.uniform(-2e-3, 2e-3, 3),
            omega_dot_d=rng.uniform(-1e-4, 1e-4, 3),
        )
        sigma = rng.uniform(-0.15, 0.15, 3)
        omega = rng.uniform(-0.05, 0.05, 3)
        Omega = rng.uniform(-200.0, 200.0, 4)
        aux = compute_aux_control(sigma, omega, g_sample, Omega, params, gains)
        expected = dense_aux_torque(sigma, omega, g_sample, Omega, params, gains)
        assert np.allclose(aux.u_d, expected, rtol=0.0, atol=1e-10)


def test_aux_control_is_zero_on_target(params, gains):
    aux = compute_aux_control(np.zeros(3), np.zeros(3), IDENTITY_GUIDANCE, np.zeros(4), params, gains)
    assert np.allclose(aux.u_d, 0.0)
    assert np.allclose(aux.r, 0.0)


def test_aux_control_restores_attitude(params, gains):
    sigma = np.array([0.05, -0.02, 0.01])
    aux = compute_aux_control(sigma, np.zeros(3), IDENTITY_GUIDANCE, np.zeros(4), params, gains)
    assert aux.u_d @ sigma < 0.0
    assert np.allclose(aux.sigma_e, sigma)


def test_aux_control_damps_rate(params, gains):
    omega = np.array([0.01, 0.0, 0.0])
    aux = compute_aux_control(np.zeros(3), omega, IDENTITY_GUIDANCE, np.zeros(4), params, gains)
    assert aux.u_d[0] < 0.0


def test_body_torque_maps_to_opposite_motor_torque():
    assert body_to_wheel_torque([1e-3, -2e-3]) == pytest.approx([-1e-3, 2e-3])


def test_current_command_is_clamped(default_cfg):
    p = default_cfg.wheels
    current = torque_to_current_cmd([0.01, -0.01, 1.0, -1.0], p)
    assert current == pytest.approx([0.2, -0.2, p.current_limit, -p.current_limit])


def test_velocity_command_integrates_torque(default_cfg):
    p = default_cfg.wheels
    Omega = np.array([100.0, -100.0, 0.0, p.max_speed])
    Omega_cmd = torque_to_velocity_cmd([1e-3, 1e-3, 1.0, 1e-3], Omega, p, 0.1)
    assert Omega_cmd[0] == pytest.approx(100.0 + 1e-3 / p.wheel_inertia * 0.1)
    assert Omega_cmd[2] == pytest.approx(p.max_torque / p.wheel_inertia * 0.1)
    assert Omega_cmd[3] == p.max_speed


def test_command_scales_and_mask(default_cfg):
    cfg = make_scenario(faults={"events": [
        {"time": 5.0, "wheel": 3, "scale": 0.5},
        {"time": 8.0, "wheel": 1, "scale": 0.7},
    ]})
    schedule = cfg.faults.schedule()
    assert command_scales(schedule, 0.0, 4) == pytest.approx([1.0, 1.0, 1.0, 1.0])
    assert command_scales(schedule, 6.0, 4) == pytest.approx([1.0, 1.0, 0.5, 1.0])
    scales = command_scales(schedule, 9.0, 4)
    assert fault_mask(scales) == 0b0101

    u = np.array([0.1, -0.2, 0.3, -0.4])
    assert induce_command_fault(u, schedule, 4.0) == pytest.approx(u)
    assert induce_command_fault(u, schedule, 9.0) == pytest.approx([0.07, -0.2, 0.15, -0.4])


def test_velocity_command_stands_for_its_torque(default_cfg):
    p = default_cfg.wheels
    previous = WheelCommand(t=0.0, mode=CommandMode.VELOCITY, value=np.array([100.0, 0.0]))
    command = WheelCommand(t=0.1, mode=CommandMode.VELOCITY, value=np.array([101.0, -1.0]))
    torque = command_to_wheel_torque(command, previous, p)
    assert torque == pytest.approx([p.wheel_inertia * 10.0, -p.wheel_inertia * 10.0])


def test_compensated_current_model_removes_offset():
    cfg = make_scenario(wheels={"command_mode": "current", "deadband_compensation": True})
    p = cfg.wheels
    command = WheelCommand(t=0.1, mode=CommandMode.CURRENT, value=np.array([0.31, -0.31, 0.0]))
    torque = command_to_wheel_torque(command, command, p)
    assert torque == pytest.approx([p.torque_constant * 0.01, -p.torque_constant * 0.01, 0.0])


def snapshot(t: float, sigma=(0.1, -0.2, 0.15)) -> EstimateSnapshot:
    return EstimateSnapshot(t=t, sigma_hat=np.array(sigma), omega_hat=np.zeros(3), guidance=IDENTITY_GUIDANCE)


def test_controller_applies_command_side_fault():
    cfg = make_scenario(faults={"target": "command", "events": [{"time": 0.0, "wheel": 3, "scale": 0.5}]})
    controller = AdaptiveController(cfg)
    out = controller.step(snapshot(0.0), np.asarray(cfg.wheels.initial_speeds))
    assert out.command.fault_mask == 0b0100
    assert out.u_applied == pytest.approx(out.u * np.array([1.0, 1.0, 0.5, 1.0]))
    assert out.command.mode is CommandMode.VELOCITY
    assert out.exec_time >= 0.0
    assert controller.exec_times == [out.exec_time]


def test_device_side_fault_is_invisible_to_controller():
    cfg = make_scenario(faults={"target": "device", "events": [{"time": 0.0, "wheel": 3, "scale": 0.5}]})
    controller = AdaptiveController(cfg)
    out = controller.step(snapshot(0.0), np.asarray(cfg.wheels.initial_speeds))
    assert out.command.fault_mask == 0
    assert np.array_equal(out.u_applied, out.u)


def test_current_mode_command_opposes_body_torque():
    cfg = make_scenario(wheels={"command_mode": "current"})
    controller = AdaptiveController(cfg)
    out = controller.step(snapshot(0.0), np.zeros(4))
    expected = np.clip(-out.u_applied / cfg.wheels.torque_constant, -cfg.wheels.current_limit, cfg.wheels.current_limit)
    assert out.command.value == pytest.approx(expected)


def test_controller_reports_theta_before_update():
    cfg = make_scenario()
    controller = AdaptiveController(cfg)
    out = controller.step(snapshot(0.0), np.asarray(cfg.wheels.initial_speeds))
    assert out.theta == pytest.approx(np.full(4, cfg.gains.theta_initial))

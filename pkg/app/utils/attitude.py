"""
Attitude mathematics shared by every service.

Conventions:
  * A quaternion is ``[q_s, q_1, q_2, q_3]`` (scalar first) and, like an MRP,
    describes the direction cosine matrix ``C = [BN]`` that maps inertial
    components into body components.
  * ``quat_multiply(a, b)`` composes so that ``dcm(a ⊗ b) = dcm(a) @ dcm(b)``.
  * Quaternions leave every constructor with a non-negative scalar part.
  * MRPs are shadow-switched only by ``mrp_shadow``; callers invoke it after
    attitude integration and after ``attitude_error``.
"""

from typing import Tuple

import numpy as np

Vec3 = np.ndarray
Mat3 = np.ndarray
Quaternion = np.ndarray
Mrp = np.ndarray

# 1 + q_s below this is treated as the q_s = -1 singular point
DEGENERATE_EPS = 1e-9

# below this rotation angle the small-angle series is used
SMALL_ANGLE = 1e-8

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def skew(a: Vec3) -> Mat3:
    """Skew-symmetric matrix with skew(a) @ b == a × b"""
    return np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])


def quat_normalize(q: Quaternion) -> Quaternion:
    """Unit-normalize and fix the scalar part non-negative"""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0.0 else q


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    """Composition with dcm(a ⊗ b) = dcm(a) @ dcm(b)"""
    a0, av = a[0], a[1:]
    b0, bv = b[0], b[1:]
    q0 = a0 * b0 - av @ bv
    qv = a0 * bv + b0 * av - np.cross(av, bv)
    return np.concatenate(([q0], qv))


def quat_from_rotation_vector(theta: Vec3) -> Quaternion:
    """Quaternion of a frame rotation by |theta| about theta/|theta|"""
    angle = float(np.linalg.norm(theta))
    if angle < SMALL_ANGLE:
        return quat_normalize(np.concatenate(([1.0], 0.5 * np.asarray(theta, dtype=float))))
    half = 0.5 * angle
    return quat_normalize(np.concatenate(([np.cos(half)], np.sin(half) * np.asarray(theta) / angle)))


def rotation_vector_from_quat(q: Quaternion) -> Vec3:
    """Inverse of quat_from_rotation_vector (principal angle in [0, π])"""
    q = quat_normalize(q)
    sin_half = float(np.linalg.norm(q[1:]))
    if sin_half < SMALL_ANGLE:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(sin_half, q[0])
    return angle * q[1:] / sin_half


def dcm_from_quat(q: Quaternion) -> Mat3:
    q0, qv = q[0], q[1:]
    return (q0 * q0 - qv @ qv) * np.eye(3) + 2.0 * np.outer(qv, qv) - 2.0 * q0 * skew(qv)


def quat_from_dcm(C: Mat3) -> Quaternion:
    """Stanley's method; picks the best-conditioned component first"""
    tr = np.trace(C)
    b2 = np.array([
        (1.0 + tr) / 4.0,
        (1.0 + 2.0 * C[0, 0] - tr) / 4.0,
        (1.0 + 2.0 * C[1, 1] - tr) / 4.0,
        (1.0 + 2.0 * C[2, 2] - tr) / 4.0,
    ])
    case = int(np.argmax(b2))
    b = np.zeros(4)
    if case == 0:
        b[0] = np.sqrt(b2[0])
        b[1] = (C[1, 2] - C[2, 1]) / 4.0 / b[0]
        b[2] = (C[2, 0] - C[0, 2]) / 4.0 / b[0]
        b[3] = (C[0, 1] - C[1, 0]) / 4.0 / b[0]
    elif case == 1:
        b[1] = np.sqrt(b2[1])
        b[0] = (C[1, 2] - C[2, 1]) / 4.0 / b[1]
        b[2] = (C[0, 1] + C[1, 0]) / 4.0 / b[1]
        b[3] = (C[2, 0] + C[0, 2]) / 4.0 / b[1]
    elif case == 2:
        b[2] = np.sqrt(b2[2])
        b[0] = (C[2, 0] - C[0, 2]) / 4.0 / b[2]
        b[1] = (C[0, 1] + C[1, 0]) / 4.0 / b[2]
        b[3] = (C[1, 2] + C[2, 1]) / 4.0 / b[2]
    else:
        b[3] = np.sqrt(b2[3])
        b[0] = (C[0, 1] - C[1, 0]) / 4.0 / b[3]
        b[1] = (C[2, 0] + C[0, 2]) / 4.0 / b[3]
        b[2] = (C[1, 2] + C[2, 1]) / 4.0 / b[3]
    return quat_normalize(b)


def mrp_from_quat(q: Quaternion) -> Mrp:
    """σ = q_v / (1 + q_s); the negated quaternion is used when q_s < 0"""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0 or 1.0 + q[0] <= DEGENERATE_EPS:
        q = -q
    return q[1:] / (1.0 + q[0])


def quat_from_mrp(sigma: Mrp) -> Quaternion:
    s2 = float(sigma @ sigma)
    q = np.concatenate(([1.0 - s2], 2.0 * np.asarray(sigma, dtype=float))) / (1.0 + s2)
    return quat_normalize(q)


def mrp_shadow(sigma: Mrp) -> Mrp:
    """Map |σ| > 1 onto the shadow set −σ/(σᵀσ); same physical attitude"""
    s2 = float(sigma @ sigma)
    if s2 > 1.0:
        return -np.asarray(sigma, dtype=float) / s2
    return np.asarray(sigma, dtype=float)


def dcm_from_mrp(sigma: Mrp) -> Mat3:
    s2 = float(sigma @ sigma)
    S = skew(sigma)
    return np.eye(3) + (8.0 * S @ S - 4.0 * (1.0 - s2) * S) / (1.0 + s2) ** 2


def mrp_from_dcm(C: Mat3) -> Mrp:
    return mrp_shadow(mrp_from_quat(quat_from_dcm(C)))


def mrp_kinematics_matrix(sigma: Mrp) -> Mat3:
    """B(σ) with σ̇ = ¼ B(σ) ω"""
    s2 = float(sigma @ sigma)
    return (1.0 - s2) * np.eye(3) + 2.0 * skew(sigma) + 2.0 * np.outer(sigma, sigma)


def mrp_kinematics_matrix_dot(sigma: Mrp, sigma_dot: Vec3) -> Mat3:
    """Time derivative of B(σ) along σ̇"""
    return (
        -2.0 * float(sigma @ sigma_dot) * np.eye(3)
        + 2.0 * skew(sigma_dot)
        + 2.0 * (np.outer(sigma_dot, sigma) + np.outer(sigma, sigma_dot))
    )


def mrp_kinematics_inverse(sigma: Mrp) -> Mat3:
    """B(σ)⁻¹ = B(σ)ᵀ / (1 + σᵀσ)²"""
    s2 = float(sigma @ sigma)
    return mrp_kinematics_matrix(sigma).T / (1.0 + s2) ** 2


def mrp_rate(sigma: Mrp, omega: Vec3) -> Vec3:
    return 0.25 * mrp_kinematics_matrix(sigma) @ omega


def quat_rate(q: Quaternion, omega: Vec3) -> Quaternion:
    """q̇ for body rate ω under the [BN] convention"""
    q0, qv = q[0], q[1:]
    return 0.5 * np.concatenate(([-qv @ omega], q0 * omega + np.cross(qv, omega)))


def attitude_error(
    sigma: Mrp,
    sigma_d: Mrp,
    omega: Vec3,
    omega_d: Vec3,
) -> Tuple[Mrp, Vec3, Mat3]:
    """
    Body-relative-to-desired tracking error.

    Returns (σ_e, ω̃, R̃) with R̃ = R(σ)·R(σ_d)ᵀ mapping desired-frame
    components into the body frame, σ_e the shadow-enforced MRP of R̃ and
    ω̃ = ω − R̃ ω_d.
    """
    R_err = dcm_from_mrp(sigma) @ dcm_from_mrp(sigma_d).T
    sigma_e = mrp_from_dcm(R_err)
    omega_err = np.asarray(omega, dtype=float) - R_err @ omega_d
    return sigma_e, omega_err, R_err


def rotation_angle(sigma: Mrp) -> float:
    """Principal rotation angle Φ = 4·atan(|σ|)"""
    return 4.0 * float(np.arctan(np.linalg.norm(sigma)))

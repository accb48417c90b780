"""Rotation algebra on axis-angle vectors and unit quaternions.

All functions operate on float64 numpy arrays. Quaternions use (w, x, y, z)
ordering with w >= 0 for canonical representatives. Axis-angle vectors encode
a rotation of ``theta = norm(v)`` radians about ``v / norm(v)``; the canonical
representative has ``theta`` in [0, pi].
"""

from __future__ import annotations

import numpy as np

# Below this angle, trig ratios are evaluated by their Taylor expansions.
_SMALL_ANGLE = 1e-8


def axis_angle_to_quaternion(v: np.ndarray) -> np.ndarray:
    """Convert an axis-angle 3-vector to a unit quaternion (w, x, y, z)."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v)
    half = 0.5 * theta
    if theta < _SMALL_ANGLE:
        # sin(t/2)/t = 1/2 - t^2/48 + O(t^4)
        k = 0.5 - theta * theta / 48.0
    else:
        k = np.sin(half) / theta
    return np.array([np.cos(half), k * v[0], k * v[1], k * v[2]])


def quaternion_to_axis_angle(q: np.ndarray) -> np.ndarray:
    """Convert a unit quaternion to the canonical axis-angle vector.

    The result always has angle in [0, pi]; q and -q map to the same vector.
    """
    q = np.asarray(q, dtype=np.float64)
    if q[0] < 0.0:
        q = -q
    sin_half = np.linalg.norm(q[1:])
    theta = 2.0 * np.arctan2(sin_half, q[0])
    if sin_half < _SMALL_ANGLE:
        # v ~= 2 * vec(q) to first order
        return 2.0 * q[1:].copy()
    return (theta / sin_half) * q[1:]


def canonicalize_axis_angle(v: np.ndarray) -> np.ndarray:
    """Map an axis-angle vector to its canonical representative (angle in [0, pi])."""
    v = np.asarray(v, dtype=np.float64)
    if np.linalg.norm(v) <= np.pi:
        return v.copy()
    return quaternion_to_axis_angle(axis_angle_to_quaternion(v))


def axis_angle_to_matrix(v: np.ndarray) -> np.ndarray:
    """Rodrigues' formula: axis-angle vector to 3x3 rotation matrix."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v)
    K = _skew(v)
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta * theta / 6.0  # sin(t)/t
        b = 0.5 - theta * theta / 24.0  # (1-cos(t))/t^2
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def rotation_left_jacobian(v: np.ndarray) -> np.ndarray:
    """Left Jacobian of the SO(3) exponential map at axis-angle v.

    Satisfies d(exp([v]x))/dv_c * exp([v]x)^T = [J_l(v) e_c]x, which is the
    identity used to differentiate forward kinematics with respect to
    axis-angle joint parameters.
    """
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v)
    K = _skew(v)
    if theta < _SMALL_ANGLE:
        b = 0.5 - theta * theta / 24.0  # (1-cos t)/t^2
        c = 1.0 / 6.0 - theta * theta / 120.0  # (t-sin t)/t^3
    else:
        b = (1.0 - np.cos(theta)) / (theta * theta)
        c = (theta - np.sin(theta)) / (theta ** 3)
    return np.eye(3) + b * K + c * (K @ K)


def quaternion_slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Spherical linear interpolation between unit quaternions, shortest arc.

    The sign of q1 is aligned to q0 before interpolating so antipodal
    representations of the same rotation interpolate along the zero path.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        # Nearly identical: nlerp is exact to machine precision here.
        out = (1.0 - t) * q0 + t * q1
        return out / np.linalg.norm(out)
    omega = np.arccos(min(dot, 1.0))
    s = np.sin(omega)
    out = (np.sin((1.0 - t) * omega) / s) * q0 + (np.sin(t * omega) / s) * q1
    return out / np.linalg.norm(out)


def slerp_axis_angle(v0: np.ndarray, v1: np.ndarray, t: float) -> np.ndarray:
    """SLERP between two axis-angle vectors; exact at the endpoints."""
    if t == 0.0:
        return np.asarray(v0, dtype=np.float64).copy()
    if t == 1.0:
        return np.asarray(v1, dtype=np.float64).copy()
    q = quaternion_slerp(axis_angle_to_quaternion(v0), axis_angle_to_quaternion(v1), t)
    return quaternion_to_axis_angle(q)


def chordal_mean_quaternion(quats: np.ndarray) -> np.ndarray:
    """Chordal mean of N unit quaternions (rows), via the principal eigenvector
    of the accumulated outer products. Sign-invariant because qq^T = (-q)(-q)^T.
    """
    Q = np.asarray(quats, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != 4 or Q.shape[0] == 0:
        raise ValueError("expected a non-empty (N, 4) array of quaternions")
    A = Q.T @ Q
    w, vecs = np.linalg.eigh(A)
    return vecs[:, -1]


def mean_axis_angle(vectors: np.ndarray) -> np.ndarray:
    """Chordal rotation average of N axis-angle vectors (rows), canonical output."""
    V = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    quats = np.stack([axis_angle_to_quaternion(v) for v in V])
    return quaternion_to_axis_angle(chordal_mean_quaternion(quats))


def geodesic_angle(v0: np.ndarray, v1: np.ndarray) -> float:
    """Rotation angle (radians, in [0, pi]) between two axis-angle rotations."""
    q0 = axis_angle_to_quaternion(v0)
    q1 = axis_angle_to_quaternion(v1)
    dot = abs(float(np.dot(q0, q1)))
    return 2.0 * np.arccos(min(dot, 1.0))


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


# -- batched variants (hot path of the fitting objective) ------------------------

def batch_skew(V: np.ndarray) -> np.ndarray:
    """(n, 3) vectors -> (n, 3, 3) skew-symmetric matrices."""
    V = np.asarray(V, dtype=np.float64)
    n = V.shape[0]
    K = np.zeros((n, 3, 3))
    K[:, 0, 1] = -V[:, 2]
    K[:, 0, 2] = V[:, 1]
    K[:, 1, 0] = V[:, 2]
    K[:, 1, 2] = -V[:, 0]
    K[:, 2, 0] = -V[:, 1]
    K[:, 2, 1] = V[:, 0]
    return K


def _sin_over(theta: np.ndarray) -> np.ndarray:
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    return np.where(small, 1.0 - theta * theta / 6.0, np.sin(safe) / safe)


def _one_minus_cos_over_sq(theta: np.ndarray) -> np.ndarray:
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    return np.where(small, 0.5 - theta * theta / 24.0, (1.0 - np.cos(safe)) / (safe * safe))


def _theta_minus_sin_over_cube(theta: np.ndarray) -> np.ndarray:
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    return np.where(
        small, 1.0 / 6.0 - theta * theta / 120.0, (safe - np.sin(safe)) / (safe ** 3)
    )


def batch_axis_angle_to_matrix(V: np.ndarray) -> np.ndarray:
    """Rodrigues' formula over rows: (n, 3) -> (n, 3, 3)."""
    V = np.asarray(V, dtype=np.float64)
    theta = np.linalg.norm(V, axis=1)
    K = batch_skew(V)
    a = _sin_over(theta)[:, None, None]
    b = _one_minus_cos_over_sq(theta)[:, None, None]
    return np.eye(3)[None] + a * K + b * (K @ K)


def batch_left_jacobian(V: np.ndarray) -> np.ndarray:
    """SO(3) exponential-map left Jacobian over rows: (n, 3) -> (n, 3, 3)."""
    V = np.asarray(V, dtype=np.float64)
    theta = np.linalg.norm(V, axis=1)
    K = batch_skew(V)
    b = _one_minus_cos_over_sq(theta)[:, None, None]
    c = _theta_minus_sin_over_cube(theta)[:, None, None]
    return np.eye(3)[None] + b * K + c * (K @ K)

"""Quaternion helpers.

Quaternions are stored as (x, y, z, w) with the Hamilton product convention.
All functions accept anything array-like and return float64 numpy arrays.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])

UNIT_NORM_TOL = 1e-6


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if n == 0.0:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def is_unit(q, tol: float = UNIT_NORM_TOL) -> bool:
    q = np.asarray(q, dtype=np.float64)
    return bool(np.all(np.isfinite(q))) and abs(float(np.linalg.norm(q)) - 1.0) <= tol


def multiply(a, b) -> np.ndarray:
    """Hamilton product a*b (apply rotation b first, then a)."""
    ax, ay, az, aw = np.asarray(a, dtype=np.float64)
    bx, by, bz, bw = np.asarray(b, dtype=np.float64)
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def conjugate(q) -> np.ndarray:
    x, y, z, w = np.asarray(q, dtype=np.float64)
    return np.array([-x, -y, -z, w])


def rotate_vec(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    return to_matrix(q) @ np.asarray(v, dtype=np.float64)


def to_matrix(q) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion (columns = rotated basis)."""
    x, y, z, w = np.asarray(q, dtype=np.float64)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = float(np.linalg.norm(axis))
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle_rad
    return np.concatenate((np.sin(half) * axis / n, [np.cos(half)]))


def align(q, reference) -> np.ndarray:
    """Flip the sign of q if it sits on the far hemisphere from reference."""
    q = np.asarray(q, dtype=np.float64)
    if float(np.dot(q, np.asarray(reference, dtype=np.float64))) < 0.0:
        return -q
    return q


def slerp(q0, q1, t: float) -> np.ndarray:
    """Spherical interpolation with shortest-path hemisphere alignment.

    Falls back to normalized linear interpolation when the quaternions are
    nearly parallel (sin of the angle too small for the sin-ratio form).
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = align(q1, q0)
    dot = float(np.clip(np.dot(q0, q1), -1.0, 1.0))
    if dot > 0.9995:
        out = q0 + t * (q1 - q0)
        return normalize(out)
    theta = np.arccos(dot)
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) / s) * q0 + (np.sin(t * theta) / s) * q1


def angle_between_deg(a, b) -> float:
    """Rotation angle in degrees between two unit quaternions (sign-agnostic)."""
    d = abs(float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))))
    return float(2.0 * np.arccos(min(d, 1.0)) * 180.0 / np.pi)

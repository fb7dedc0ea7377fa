"""Quaternion rotation primitives used throughout the kinematic pipeline.

Rotations are stored as unit quaternions in (w, x, y, z) order with the sign
canonicalized to w >= 0 so every rotation has exactly one representation.
"""

from __future__ import annotations

import math

import numpy as np

_ZERO_EPS = 1e-12
_ANTIPARALLEL_EPS = 1e-12
_REFERENCE_EPS = 1e-6


class ZeroVectorError(ValueError):
    """A direction was requested from a vector with near-zero norm."""


def _as_unit(v, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{what} must be a 3-vector, got shape {v.shape}")
    n = float(np.linalg.norm(v))
    if n <= _ZERO_EPS:
        raise ZeroVectorError(f"{what} has near-zero norm ({n:.3e})")
    return v / n


class Rotation:
    """Immutable 3D rotation backed by a unit quaternion (w, x, y, z)."""

    __slots__ = ("q",)

    def __init__(self, w: float, x: float, y: float, z: float):
        q = np.array([w, x, y, z], dtype=float)
        n = float(np.linalg.norm(q))
        if n <= _ZERO_EPS:
            raise ZeroVectorError(f"quaternion has near-zero norm ({n:.3e})")
        q /= n
        self.q = _canonical(q)
        self.q.setflags(write=False)

    @classmethod
    def _from_array(cls, q: np.ndarray) -> "Rotation":
        return cls(q[0], q[1], q[2], q[3])

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        """Rotation of `angle` radians about `axis` (need not be unit length)."""
        u = _as_unit(axis, "rotation axis")
        half = 0.5 * float(angle)
        s = math.sin(half)
        return cls(math.cos(half), s * u[0], s * u[1], s * u[2])

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        """Build from a rotation matrix (orthonormal within 1e-6, det +1)."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        err = float(np.max(np.abs(m.T @ m - np.eye(3))))
        if err > 1e-6:
            raise ValueError(f"matrix is not orthonormal (max |M^T M - I| = {err:.3e})")
        if np.linalg.det(m) < 0.0:
            raise ValueError("matrix has negative determinant (reflection)")
        t = float(np.trace(m))
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return cls(w, x, y, z)

    def compose(self, other: "Rotation") -> "Rotation":
        """Hamilton product self * other: apply `other` first, then self."""
        return Rotation._from_array(_quat_mul(self.q, other.q))

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return self.compose(other)

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation(w, -x, -y, -z)

    def apply(self, v) -> np.ndarray:
        """Rotate one 3-vector (or an (..., 3) array of them)."""
        v = np.asarray(v, dtype=float)
        w = self.q[0]
        qv = self.q[1:]
        t = 2.0 * np.cross(qv, v)
        return v + w * t + np.cross(qv, t)

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )

    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        return 2.0 * math.acos(min(1.0, float(self.q[0])))

    def angle_to(self, other: "Rotation") -> float:
        """Angular distance to another rotation, in [0, pi]."""
        d = abs(float(np.dot(self.q, other.q)))
        return 2.0 * math.acos(min(1.0, d))

    def __repr__(self) -> str:
        w, x, y, z = self.q
        return f"Rotation(w={w:.9g}, x={x:.9g}, y={y:.9g}, z={z:.9g})"


def _canonical(q: np.ndarray) -> np.ndarray:
    # w >= 0; at w == 0 exactly, first nonzero vector component made positive so
    # serialization of 180-degree rotations is stable.
    if q[0] < 0.0:
        return -q
    if q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                return q if c > 0.0 else -q
    return q


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def angle_between(a, b) -> float:
    """Angle in [0, pi] between two nonzero vectors (clamped arccos of the dot)."""
    ua = _as_unit(a, "first vector")
    ub = _as_unit(b, "second vector")
    d = float(np.dot(ua, ub))
    return math.acos(max(-1.0, min(1.0, d)))


def solve_rotation(src, dst) -> Rotation:
    """Minimal rotation taking the direction of `src` to the direction of `dst`.

    The rotation axis is the normalized cross product, so there is no twist
    about the source direction. Antiparallel inputs rotate 180 degrees about a
    deterministic axis orthogonal to `src`: the component of global +x
    orthogonal to `src`, falling back to +y when `src` is parallel to +x.
    """
    u = _as_unit(src, "source vector")
    v = _as_unit(dst, "target vector")
    c = np.cross(u, v)
    s = float(np.linalg.norm(c))
    d = float(np.dot(u, v))
    if s > _ANTIPARALLEL_EPS:
        return Rotation.from_axis_angle(c / s, math.atan2(s, d))
    if d > 0.0:
        return Rotation.identity()
    ref = np.array([1.0, 0.0, 0.0])
    axis = ref - np.dot(ref, u) * u
    if np.linalg.norm(axis) <= _REFERENCE_EPS:
        ref = np.array([0.0, 1.0, 0.0])
        axis = ref - np.dot(ref, u) * u
    return Rotation.from_axis_angle(axis, math.pi)

"""Calibration of raw inertial samples into the global skeleton frame.

Each sensor k comes with two fixed rotations: R_kg aligning the sensor's
reference frame with the global frame, and R_kj the mounting offset between
the sensor and the bone of the joint it is strapped to. A raw sample holds the
sensor's orientation R_k in its own reference frame and the accelerometer
reading A_rec in the sensor frame (reaction convention: a stationary sensor
reads +|g| pointing up once rotated into the global frame).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .rotmath import Rotation
from .skeleton import SkeletonDefinition, UnboundJointError

DEFAULT_GRAVITY = (0.0, -9810.0, 0.0)  # mm/s^2, global frame, pointing down


class ImuSample(NamedTuple):
    """One raw reading: sensor orientation plus sensor-frame acceleration (mm/s^2)."""

    orientation: Rotation
    acceleration: np.ndarray


@dataclass(frozen=True)
class SensorCalibration:
    """Fixed per-sensor rotations and the name of the joint whose bone it tracks."""

    sensor_id: str
    joint: str
    r_global: Rotation  # R_kg: sensor reference frame -> global frame
    r_joint: Rotation  # R_kj: mounting offset, sensor -> joint bone frame


@dataclass(frozen=True)
class CalibrationSet:
    """All sensor calibrations plus the global gravity field vector (mm/s^2)."""

    sensors: tuple[SensorCalibration, ...]
    gravity: np.ndarray = field(default=DEFAULT_GRAVITY)

    def __post_init__(self):
        g = np.asarray(self.gravity, dtype=float)
        if g.shape != (3,):
            raise ValueError(f"gravity must be a 3-vector, got shape {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "gravity", g)
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("sensor ids are not unique")
        joints = [s.joint for s in self.sensors]
        if len(set(joints)) != len(joints):
            raise ValueError("a joint is bound to more than one sensor")

    @property
    def sensor_ids(self) -> tuple[str, ...]:
        return tuple(s.sensor_id for s in self.sensors)

    def sensor(self, sensor_id: str) -> SensorCalibration:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        raise KeyError(f"no calibration for sensor {sensor_id!r}")

    def joint_indices(self, skel: SkeletonDefinition) -> np.ndarray:
        """Bound joint index per sensor; raises UnboundJointError on the root or unknown names."""
        idx = np.array([skel.index_of(s.joint) for s in self.sensors], dtype=int)
        if np.any(idx == 0):
            root = self.sensors[int(np.argmax(idx == 0))]
            raise UnboundJointError(f"sensor {root.sensor_id!r} is bound to the root joint, which has no bone")
        return idx


def calibrate_orientation(cal: SensorCalibration, sample: ImuSample) -> Rotation:
    """Global rotation of the bound joint's bone: (R_kj)^-1 * R_kg * R_k."""
    return cal.r_joint.inverse() @ cal.r_global @ sample.orientation


def calibrate_acceleration(cal: SensorCalibration, sample: ImuSample, gravity) -> np.ndarray:
    """Gravity-free global acceleration of the sensor (mm/s^2).

    The raw reading follows the reaction convention, so rotating it into the
    global frame leaves -gravity in it at rest; adding the field removes that.
    A stationary sample calibrates to (0, 0, 0) and a free-fall reading of
    zero calibrates to the gravity field itself.
    """
    a = np.asarray(sample.acceleration, dtype=float)
    return cal.r_global.apply(sample.orientation.apply(a)) + np.asarray(gravity, dtype=float)


def imu_bone_vector(cal: SensorCalibration, sample: ImuSample, skel: SkeletonDefinition) -> np.ndarray:
    """Sensor-predicted bone vector: calibrated joint rotation applied to the T-pose bone.

    The result keeps the T-pose bone length by construction.
    """
    j = skel.index_of(cal.joint)
    if j == 0:
        raise UnboundJointError(f"sensor {cal.sensor_id!r} is bound to the root joint, which has no bone")
    return calibrate_orientation(cal, sample).apply(skel.bones[j])


@dataclass(frozen=True)
class ImuStream:
    """Per-frame, per-sensor raw samples stored as arrays.

    orientations: (T, K, 4) quaternions (w, x, y, z); accels: (T, K, 3) mm/s^2.
    Sensor order matches `sensor_ids`.
    """

    sensor_ids: tuple[str, ...]
    orientations: np.ndarray
    accels: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.orientations, dtype=float)
        a = np.asarray(self.accels, dtype=float)
        k = len(self.sensor_ids)
        if q.ndim != 3 or q.shape[1:] != (k, 4):
            raise ValueError(f"orientations must have shape (T, {k}, 4), got {q.shape}")
        if a.shape != (q.shape[0], k, 3):
            raise ValueError(f"accels must have shape ({q.shape[0]}, {k}, 3), got {a.shape}")
        object.__setattr__(self, "orientations", q)
        object.__setattr__(self, "accels", a)

    @property
    def frame_count(self) -> int:
        return int(self.orientations.shape[0])

    def sample(self, frame: int, sensor: int) -> ImuSample:
        w, x, y, z = self.orientations[frame, sensor]
        return ImuSample(Rotation(w, x, y, z), self.accels[frame, sensor])


def calibrate_stream(
    calib: CalibrationSet, stream: ImuStream, skel: SkeletonDefinition
) -> tuple[list[list[Rotation]], np.ndarray, np.ndarray]:
    """Calibrate a whole stream against a skeleton.

    Returns (rotations, accels, bones): per-frame lists of calibrated joint
    rotations (T x K), gravity-free global accelerations (T, K, 3), and
    sensor-predicted bone vectors (T, K, 3). Sensor order follows the stream;
    every stream sensor id must have a calibration entry.
    """
    cals = [calib.sensor(sid) for sid in stream.sensor_ids]
    joints = [skel.index_of(c.joint) for c in cals]
    if any(j == 0 for j in joints):
        raise UnboundJointError("a sensor is bound to the root joint, which has no bone")
    t_n, k_n = stream.frame_count, len(cals)
    rotations: list[list[Rotation]] = []
    accels = np.empty((t_n, k_n, 3))
    bones = np.empty((t_n, k_n, 3))
    for t in range(t_n):
        row: list[Rotation] = []
        for k in range(k_n):
            s = stream.sample(t, k)
            r = calibrate_orientation(cals[k], s)
            row.append(r)
            accels[t, k] = calibrate_acceleration(cals[k], s, calib.gravity)
            bones[t, k] = r.apply(skel.bones[joints[k]])
        rotations.append(row)
    return rotations, accels, bones

"""End-to-end runs: configuration, the four pipeline modes, dataset output.

Modes:
  baseline  pass the input 3D pose stream through untouched
  sf2       per-frame IMU-gated inverse kinematics only
  rto       fragment optimization of the visual term only (k_inertial = 0)
  rtof      sf2 followed by fragment optimization of the full energy

Runs are deterministic: identical inputs and config produce byte-identical
output files (no timing or environment data is written to results).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import Camera
from .energy import EnergyConfig
from .fileio import (
    read_calibration,
    read_camera,
    read_imu,
    read_pose2d,
    read_pose3d,
    read_skeleton,
    write_calibration,
    write_camera,
    write_imu,
    write_pose2d,
    write_pose3d,
    write_skeleton,
)
from .imu import CalibrationSet, ImuStream, calibrate_stream
from .metrics import MetricReport, evaluate
from .optimizer import RefineStats, SequenceObservations, SolverSettings, refine_batch
from .skeleton import SkeletonDefinition, refine_sequence
from .synth import NoiseSpec, SyntheticDataset, default_script, make_dataset

MODES = ("baseline", "rto", "sf2", "rtof")

# CLI-default corruption: mixed per-frame noise on every stream.
DEFAULT_NOISE = NoiseSpec(
    sigma_depth=25.0,
    sigma_xyz=6.0,
    sigma_transverse=18.0,
    sigma_px=1.0,
    sigma_rot=0.008,
    sigma_acc=40.0,
    occlusion=0.02,
)


class ConfigError(ValueError):
    pass


class MissingInputError(ConfigError):
    pass


def _mode_requirements(mode: str, have_visual: bool, have_inertial: bool) -> None:
    if mode not in MODES:
        raise ConfigError(f"unknown mode '{mode}' (choose from {', '.join(MODES)})")
    if mode in ("rto", "rtof") and not have_visual:
        raise MissingInputError(f"mode {mode} requires 2D observations and a camera")
    if mode in ("sf2", "rtof") and not have_inertial:
        raise MissingInputError(f"mode {mode} requires an IMU stream and calibration")


def _sensor_bindings(
    skel: SkeletonDefinition, calib: CalibrationSet, stream: ImuStream
) -> tuple[np.ndarray, np.ndarray]:
    joints = np.array([skel.index_of(calib.sensor(sid).joint) for sid in stream.sensor_ids])
    parents = np.array([skel.parents[j] for j in joints])
    return joints, parents


def apply_mode(
    mode: str,
    skel: SkeletonDefinition,
    poses: np.ndarray,
    fps: float,
    pixels: np.ndarray | None = None,
    camera: Camera | None = None,
    calib: CalibrationSet | None = None,
    imu: ImuStream | None = None,
    energy: EnergyConfig | None = None,
    solver: SolverSettings | None = None,
) -> tuple[np.ndarray, RefineStats | None]:
    """In-memory form of the run command; returns (refined poses, solver stats).

    Stats are None for the modes that never touch the optimizer.
    """
    energy = energy if energy is not None else EnergyConfig()
    solver = solver if solver is not None else SolverSettings()
    poses = np.asarray(poses, dtype=float)
    _mode_requirements(mode, pixels is not None and camera is not None,
                       calib is not None and imu is not None)
    if poses.ndim != 3 or poses.shape[1] != skel.joint_count:
        raise ConfigError(
            f"pose stream shape {poses.shape} does not match {skel.joint_count}-joint skeleton")

    if mode == "baseline":
        return poses.copy(), None

    imu_maps = None
    accel = bones = None
    sensor_joints = sensor_parents = None
    if mode in ("sf2", "rtof"):
        if imu.frame_count != poses.shape[0]:
            raise ConfigError(
                f"IMU stream has {imu.frame_count} frames, pose stream {poses.shape[0]}")
        rotations, accel, bones = calibrate_stream(calib, imu, skel)
        sensor_joints, sensor_parents = _sensor_bindings(skel, calib, imu)
        imu_maps = [dict(zip(sensor_joints.tolist(), row)) for row in rotations]

    if mode == "sf2":
        return refine_sequence(skel, poses, imu_maps, energy.theta_t), None

    if pixels.shape[0] != poses.shape[0]:
        raise ConfigError(
            f"2D stream has {pixels.shape[0]} frames, pose stream {poses.shape[0]}")

    if mode == "rto":
        cfg = dataclasses.replace(energy, k_inertial=0.0)
        seq_obs = SequenceObservations(fps=fps, pixels=pixels, camera=camera)
        return refine_batch(poses, seq_obs, cfg, solver)

    start = refine_sequence(skel, poses, imu_maps, energy.theta_t)
    seq_obs = SequenceObservations(
        fps=fps,
        pixels=pixels,
        camera=camera,
        accel=accel,
        bones=bones,
        sensor_joints=sensor_joints,
        sensor_parents=sensor_parents,
    )
    return refine_batch(start, seq_obs, energy, solver)


def _build_from_dict(cls, data: dict, what: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} option(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {what} options: {e}") from None


@dataclass(frozen=True)
class RunConfig:
    """One run of the pipeline; paths are absolute after from_file.

    JSON layout mirrors the fields: {"mode": "rtof", "fps": 25,
    "skeleton": "...", "pose3d": "...", "pose2d": "...", "camera": "...",
    "calibration": "...", "imu": "...", "truth": "...",
    "energy": {...}, "solver": {...}, "per_second_metrics": true, "seed": 0}.
    Relative paths resolve against the config file's directory.
    """

    mode: str
    skeleton: str
    pose3d: str
    fps: float = 25.0
    pose2d: str | None = None
    camera: str | None = None
    calibration: str | None = None
    imu: str | None = None
    truth: str | None = None
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    per_second_metrics: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.fps <= 0.0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        _mode_requirements(
            self.mode,
            self.pose2d is not None and self.camera is not None,
            self.imu is not None and self.calibration is not None,
        )

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | str = ".") -> "RunConfig":
        base = Path(base_dir)
        data = dict(data)
        for key in ("skeleton", "pose3d", "pose2d", "camera", "calibration", "imu", "truth"):
            if data.get(key) is not None:
                data[key] = str(base / data[key])
        if "energy" in data:
            data["energy"] = _build_from_dict(EnergyConfig, data["energy"], "energy")
        if "solver" in data:
            data["solver"] = _build_from_dict(SolverSettings, data["solver"], "solver")
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config option(s): {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"bad config: {e}") from None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise ConfigError(str(e)) from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data, path.parent)


@dataclass(frozen=True)
class RunResult:
    mode: str
    output: np.ndarray
    report: MetricReport | None
    stats: RefineStats | None
    joint_names: tuple[str, ...]
    warnings: tuple[str, ...] = ()


def run_pipeline(config: RunConfig) -> RunResult:
    """Load streams, apply the configured mode, evaluate against truth if given."""
    skel = read_skeleton(config.skeleton)
    poses = read_pose3d(config.pose3d)
    pixels = read_pose2d(config.pose2d) if config.pose2d else None
    camera = read_camera(config.camera) if config.camera else None
    calib = read_calibration(config.calibration) if config.calibration else None
    imu = read_imu(config.imu) if config.imu else None

    output, stats = apply_mode(
        config.mode, skel, poses, config.fps,
        pixels=pixels, camera=camera, calib=calib, imu=imu,
        energy=config.energy, solver=config.solver,
    )

    report = None
    if config.truth:
        truth = read_pose3d(config.truth)
        if truth.shape != output.shape:
            raise ConfigError(
                f"truth shape {truth.shape} does not match output {output.shape}")
        report = evaluate(output, truth, config.fps, config.per_second_metrics)

    warnings = []
    if stats is not None and stats.line_search_failures:
        warnings.append(
            f"line search gave up early on {stats.line_search_failures} fragment(s); "
            "kept their best iterates")
    return RunResult(config.mode, output, report, stats, skel.names, tuple(warnings))


def write_results(result: RunResult, out_dir) -> list[str]:
    """Write refined stream and, when available, metric reports. Returns names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = ["refined_pose3d.txt"]
    write_pose3d(out / "refined_pose3d.txt", result.output)
    if result.report is not None:
        (out / "metrics.txt").write_text(
            result.report.format_text(list(result.joint_names)) + "\n")
        (out / "metrics.json").write_text(result.report.to_json() + "\n")
        written += ["metrics.txt", "metrics.json"]
    return written


# -- synthetic dataset generation ---------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synth command; noise accepts the NoiseSpec field names."""

    seed: int = 0
    duration: float = 60.0
    fps: float = 25.0
    script_seed: int = 7
    noise: NoiseSpec = field(default_factory=lambda: DEFAULT_NOISE)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        if "noise" in data:
            noise = dict(data["noise"])
            for key in ("sigma_depth", "occlusion"):
                if isinstance(noise.get(key), list):
                    noise[key] = np.asarray(noise[key], dtype=float)
            data["noise"] = _build_from_dict(NoiseSpec, noise, "noise")
        return _build_from_dict(cls, data, "synth")

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise ConfigError(str(e)) from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)


def generate_dataset(config: SynthConfig) -> SyntheticDataset:
    script = default_script(config.duration, config.fps, config.script_seed)
    return make_dataset(config.noise, seed=config.seed, script=script)


def _noise_record(noise: NoiseSpec) -> dict:
    rec = {}
    for f in dataclasses.fields(noise):
        v = getattr(noise, f.name)
        rec[f.name] = v.tolist() if isinstance(v, np.ndarray) else float(v)
    return rec


DATASET_FILES = {
    "skeleton": "skeleton.txt",
    "calibration": "calibration.txt",
    "camera": "camera.txt",
    "truth": "truth_pose3d.txt",
    "pose3d": "input_pose3d.txt",
    "pose2d": "pose2d.txt",
    "imu": "imu.txt",
}


def write_dataset(ds: SyntheticDataset, out_dir) -> dict:
    """Write every stream plus manifest.json and a ready-to-run rtof config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_skeleton(out / DATASET_FILES["skeleton"], ds.skeleton)
    write_calibration(out / DATASET_FILES["calibration"], ds.calibration)
    write_camera(out / DATASET_FILES["camera"], ds.camera)
    write_pose3d(out / DATASET_FILES["truth"], ds.truth)
    write_pose3d(out / DATASET_FILES["pose3d"], ds.inputs)
    write_pose2d(out / DATASET_FILES["pose2d"], ds.pixels)
    write_imu(out / DATASET_FILES["imu"], ds.imu)
    manifest = {
        "frames": ds.frame_count,
        "fps": ds.fps,
        "joints": ds.skeleton.joint_count,
        "sensors": len(ds.calibration.sensors),
        "seed": ds.seed,
        "noise": _noise_record(ds.noise),
        "files": dict(DATASET_FILES),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    run_config = {
        "mode": "rtof",
        "fps": ds.fps,
        "skeleton": DATASET_FILES["skeleton"],
        "calibration": DATASET_FILES["calibration"],
        "camera": DATASET_FILES["camera"],
        "pose3d": DATASET_FILES["pose3d"],
        "pose2d": DATASET_FILES["pose2d"],
        "imu": DATASET_FILES["imu"],
        "truth": DATASET_FILES["truth"],
    }
    (out / "run_config.json").write_text(json.dumps(run_config, indent=2, sort_keys=True) + "\n")
    return manifest

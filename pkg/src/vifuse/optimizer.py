"""Fragment scheduling, limited-memory quasi-Newton minimization, and merging.

The sequence is padded with N/2 boundary replicas on each side and cut into
half-overlapping windows of length N (stride N/2), so every original frame is
covered by exactly two windows; overlapping results are averaged. Windows are
independent given their observations, which is what makes the streaming path
produce bitwise-identical output to the batch path.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .camera import Camera
from .energy import EnergyConfig, Fragment, Observations, total_energy

_FIRST_STEP = 1.0  # trial step length (coordinate units) for the first iteration
_CURVATURE_EPS = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    """Limited-memory minimizer knobs.

    Stops on the gradient infinity-norm tolerance or the iteration cap,
    whichever comes first. The strong Wolfe line search only ever accepts
    decreasing steps, so the returned energy never exceeds the initial one;
    a failed line search returns the best iterate so far with a warning flag
    rather than raising.
    """

    max_iterations: int = 30
    history: int = 10
    grad_tol: float = 1e-6
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    workers: int = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.history < 1:
            raise ValueError("history must be >= 1")
        if self.grad_tol <= 0.0:
            raise ValueError("grad_tol must be positive")
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


class MinimizeResult(NamedTuple):
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    line_search_failed: bool


class _LineSearchResult(NamedTuple):
    ok: bool
    alpha: float
    value: float
    grad: np.ndarray | None


def _strong_wolfe(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    f0: float,
    g0: np.ndarray,
    direction: np.ndarray,
    alpha_init: float,
    c1: float,
    c2: float,
    max_expand: int = 20,
    max_zoom: int = 30,
) -> _LineSearchResult:
    dphi0 = float(np.dot(g0, direction))
    if not np.isfinite(dphi0) or dphi0 >= 0.0:
        return _LineSearchResult(False, 0.0, f0, None)

    def probe(a: float) -> tuple[float, np.ndarray, float]:
        fa, ga = fun(x0 + a * direction)
        return fa, ga, float(np.dot(ga, direction))

    def zoom(a_lo, f_lo, dphi_lo, g_lo, a_hi, f_hi) -> _LineSearchResult:
        for _ in range(max_zoom):
            if abs(a_hi - a_lo) <= 1e-12 * max(1.0, abs(a_lo)):
                break
            a = 0.5 * (a_lo + a_hi)
            fa, ga, dphia = probe(a)
            if fa > f0 + c1 * a * dphi0 or fa >= f_lo:
                a_hi, f_hi = a, fa
            else:
                if abs(dphia) <= -c2 * dphi0:
                    return _LineSearchResult(True, a, fa, ga)
                if dphia * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, dphi_lo, g_lo = a, fa, dphia, ga
        # Interval collapsed before the curvature condition held; the low end
        # still carries a sufficient decrease, so use it rather than fail.
        if f_lo < f0 and g_lo is not None:
            return _LineSearchResult(True, a_lo, f_lo, g_lo)
        return _LineSearchResult(False, 0.0, f0, None)

    a_prev, f_prev, dphi_prev, g_prev = 0.0, f0, dphi0, g0
    a = alpha_init
    for i in range(max_expand):
        fa, ga, dphia = probe(a)
        if fa > f0 + c1 * a * dphi0 or (i > 0 and fa >= f_prev):
            return zoom(a_prev, f_prev, dphi_prev, g_prev, a, fa)
        if abs(dphia) <= -c2 * dphi0:
            return _LineSearchResult(True, a, fa, ga)
        if dphia >= 0.0:
            return zoom(a, fa, dphia, ga, a_prev, f_prev)
        a_prev, f_prev, dphi_prev, g_prev = a, fa, dphia, ga
        a *= 2.0
    if a_prev > 0.0 and f_prev < f0:
        # Expansion never met the curvature condition; keep the decrease.
        return _LineSearchResult(True, a_prev, f_prev, g_prev)
    return _LineSearchResult(False, 0.0, f0, None)


def _two_loop(g, s_list, y_list, rho_list) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    if s_list:
        q *= float(np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1]))
    for s, y, rho, a in zip(s_list, y_list, rho_list, reversed(alphas)):
        b = rho * float(np.dot(y, q))
        q += (a - b) * s
    return -q


def minimize_array(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    settings: SolverSettings,
) -> MinimizeResult:
    """L-BFGS over a flat array; `fun` returns (value, gradient).

    Guaranteed monotone: the result value never exceeds fun(x0).
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    f, g = fun(x)
    g = np.asarray(g, dtype=float).ravel()
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []
    ls_failed = False
    iterations = 0
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    while gnorm > settings.grad_tol and iterations < settings.max_iterations:
        d = _two_loop(g, s_list, y_list, rho_list)
        if not np.all(np.isfinite(d)) or float(np.dot(d, g)) >= 0.0:
            s_list, y_list, rho_list = [], [], []
            d = -g
        if s_list:
            alpha_init = 1.0
        else:
            dnorm = float(np.linalg.norm(d))
            alpha_init = _FIRST_STEP / dnorm if dnorm > 0.0 else 1.0
        ls = _strong_wolfe(fun, x, f, g, d, alpha_init, settings.wolfe_c1, settings.wolfe_c2)
        if not ls.ok:
            ls_failed = True
            break
        x_new = x + ls.alpha * d
        g_new = np.asarray(ls.grad, dtype=float).ravel()
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > _CURVATURE_EPS * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > settings.history:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        x, f, g = x_new, ls.value, g_new
        iterations += 1
        gnorm = float(np.max(np.abs(g)))
    return MinimizeResult(x, f, gnorm, iterations, gnorm <= settings.grad_tol, ls_failed)


@dataclass(frozen=True)
class FragmentSchedule:
    """Half-overlap window layout over a T-frame sequence."""

    frame_count: int
    fragment_len: int

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError("schedule needs at least one frame")
        n = self.fragment_len
        if n < 4 or n % 2 != 0:
            raise ValueError(f"fragment length must be even and >= 4, got {n}")

    @property
    def stride(self) -> int:
        return self.fragment_len // 2

    @property
    def window_count(self) -> int:
        return (self.frame_count - 1) // self.stride + 2

    def window_start(self, k: int) -> int:
        """Original-sequence index of window k's first slot (negative in the leading pad)."""
        return k * self.stride - self.stride

    def window_frames(self, k: int) -> np.ndarray:
        """Original frame index per window slot, boundary replicas clamped."""
        if not 0 <= k < self.window_count:
            raise IndexError(f"window {k} out of range [0, {self.window_count})")
        start = self.window_start(k)
        return np.clip(np.arange(start, start + self.fragment_len), 0, self.frame_count - 1)

    def covering_windows(self, frame: int) -> tuple[int, int]:
        """The two windows whose average produces `frame` in the merged output."""
        if not 0 <= frame < self.frame_count:
            raise IndexError(f"frame {frame} out of range [0, {self.frame_count})")
        k = frame // self.stride
        return k, k + 1


def build_schedule(frame_count: int, fragment_len: int) -> FragmentSchedule:
    return FragmentSchedule(frame_count, fragment_len)


@dataclass(frozen=True)
class SequenceObservations:
    """Whole-sequence observation arrays; fragments slice rows out of these."""

    fps: float
    pixels: np.ndarray | None = None
    camera: Camera | None = None
    accel: np.ndarray | None = None
    bones: np.ndarray | None = None
    sensor_joints: np.ndarray | None = None
    sensor_parents: np.ndarray | None = None

    def window(self, frames: np.ndarray) -> Observations:
        sj = self.sensor_joints if self.sensor_joints is not None else np.empty(0, dtype=int)
        pj = self.sensor_parents if self.sensor_parents is not None else np.empty(0, dtype=int)
        return Observations(
            pixels=None if self.pixels is None else self.pixels[frames],
            camera=self.camera,
            accel=None if self.accel is None else self.accel[frames],
            bones=None if self.bones is None else self.bones[frames],
            sensor_joints=sj,
            sensor_parents=pj,
        )


@dataclass(frozen=True)
class FragmentResult:
    fragment: Fragment
    initial_value: float
    final_value: float
    iterations: int
    converged: bool
    line_search_failed: bool
    behind_camera: int


def minimize_fragment(
    frag: Fragment,
    obs: Observations,
    cfg: EnergyConfig,
    settings: SolverSettings,
) -> FragmentResult:
    """Minimize the total energy over one fragment's coordinates.

    Normalization scales are frozen at the initial point, so the initial total
    is k_visual + k_inertial*(k_accel + k_bone + k_smooth) when every active
    term is nonzero, and the minimizer works on an O(1)-scaled objective.
    """
    frozen = cfg.with_scales(frag, obs)
    shape = frag.positions.shape
    behind = [0]

    def fun(x: np.ndarray) -> tuple[float, np.ndarray]:
        tv = total_energy(Fragment(x.reshape(shape), frag.fps, frag.start), obs, frozen)
        behind[0] = max(behind[0], tv.behind_camera)
        return tv.value, tv.grad.ravel()

    f0, _ = fun(frag.positions.ravel())
    res = minimize_array(fun, frag.positions.ravel(), settings)
    out = Fragment(res.x.reshape(shape), frag.fps, frag.start)
    return FragmentResult(
        fragment=out,
        initial_value=f0,
        final_value=res.value,
        iterations=res.iterations,
        converged=res.converged,
        line_search_failed=res.line_search_failed,
        behind_camera=behind[0],
    )


def merge_fragments(schedule: FragmentSchedule, fragments: list[Fragment]) -> np.ndarray:
    """Average the two overlapping copies of every original frame; padding slots
    (clamped replicas) are discarded."""
    if len(fragments) != schedule.window_count:
        raise ValueError(f"expected {schedule.window_count} fragments, got {len(fragments)}")
    t_n = schedule.frame_count
    j_n = fragments[0].joint_count
    out = np.zeros((t_n, j_n, 3))
    count = np.zeros(t_n, dtype=int)
    for k, frag in enumerate(fragments):
        start = schedule.window_start(k)
        t = np.arange(start, start + schedule.fragment_len)
        m = (t >= 0) & (t < t_n)
        out[t[m]] += frag.positions[m]
        count[t[m]] += 1
    if not np.all(count == 2):
        raise RuntimeError("schedule did not cover every frame exactly twice")
    return out * 0.5


@dataclass(frozen=True)
class RefineStats:
    fragment_count: int
    optimize_seconds: float
    fragments_per_second: float
    output_frames_per_second: float
    line_search_failures: int
    behind_camera_skips: int

    @classmethod
    def collect(cls, results: list[FragmentResult], frames: int, seconds: float) -> "RefineStats":
        seconds = max(seconds, 1e-9)
        return cls(
            fragment_count=len(results),
            optimize_seconds=seconds,
            fragments_per_second=len(results) / seconds,
            output_frames_per_second=frames / seconds,
            line_search_failures=sum(1 for r in results if r.line_search_failed),
            behind_camera_skips=sum(r.behind_camera for r in results),
        )


def refine_batch(
    poses: np.ndarray,
    seq_obs: SequenceObservations,
    cfg: EnergyConfig,
    settings: SolverSettings,
) -> tuple[np.ndarray, RefineStats]:
    """Optimize every window of a (T, J, 3) sequence and merge.

    With settings.workers > 1 the independent windows run on a thread pool;
    results are merged in window order either way, so the output does not
    depend on the worker count.
    """
    poses = np.asarray(poses, dtype=float)
    schedule = build_schedule(poses.shape[0], cfg.fragment_len)

    def run_window(k: int) -> FragmentResult:
        frames = schedule.window_frames(k)
        frag = Fragment(poses[frames], seq_obs.fps, schedule.window_start(k))
        return minimize_fragment(frag, seq_obs.window(frames), cfg, settings)

    t0 = time.perf_counter()
    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(run_window, range(schedule.window_count)))
    else:
        results = [run_window(k) for k in range(schedule.window_count)]
    elapsed = time.perf_counter() - t0
    merged = merge_fragments(schedule, [r.fragment for r in results])
    return merged, RefineStats.collect(results, poses.shape[0], elapsed)


class StreamingRefiner:
    """Frame-at-a-time variant of refine_batch with bounded latency.

    Poses and their observation rows are pushed together, one frame per call.
    A window is optimized as soon as its last real frame arrives, and a frame
    is emitted once both of its covering windows are done (at most N frames
    plus one solve behind the input). finish() flushes the trailing
    replica-padded windows. Output is bitwise-identical to refine_batch on
    the same data.
    """

    def __init__(
        self,
        fps: float,
        cfg: EnergyConfig,
        settings: SolverSettings,
        camera: Camera | None = None,
        sensor_joints: np.ndarray | None = None,
        sensor_parents: np.ndarray | None = None,
    ):
        self._fps = fps
        self._cfg = cfg
        self._settings = settings
        self._camera = camera
        self._sj = sensor_joints if sensor_joints is not None else np.empty(0, dtype=int)
        self._sp = sensor_parents if sensor_parents is not None else np.empty(0, dtype=int)
        self._half = cfg.fragment_len // 2
        self._len = cfg.fragment_len
        self._pos: list[np.ndarray] = []
        self._px: list[np.ndarray] | None = None
        self._acc: list[np.ndarray] | None = None
        self._bone: list[np.ndarray] | None = None
        self._done: dict[int, Fragment] = {}
        self._results: list[FragmentResult] = []
        self._next_window = 0
        self._next_emit = 0
        self._finished = False

    def _window_obs(self, frames: np.ndarray) -> Observations:
        def gather(rows):
            return None if rows is None else np.stack([rows[t] for t in frames])

        return Observations(
            pixels=gather(self._px),
            camera=self._camera,
            accel=gather(self._acc),
            bones=gather(self._bone),
            sensor_joints=self._sj,
            sensor_parents=self._sp,
        )

    def _run_window(self, k: int, t_max: int) -> None:
        start = k * self._half - self._half
        frames = np.clip(np.arange(start, start + self._len), 0, t_max)
        positions = np.stack([self._pos[t] for t in frames])
        frag = Fragment(positions, self._fps, start)
        res = minimize_fragment(frag, self._window_obs(frames), self._cfg, self._settings)
        self._done[k] = res.fragment
        self._results.append(res)
        self._next_window = k + 1

    def _emit_ready(self, total_frames: int) -> list[tuple[int, np.ndarray]]:
        out = []
        h = self._half
        last_done = self._next_window - 1
        while self._next_emit < total_frames and self._next_emit // h + 1 <= last_done:
            t = self._next_emit
            k1 = t // h
            k2 = k1 + 1
            row1 = self._done[k1].positions[t + h - k1 * h]
            row2 = self._done[k2].positions[t + h - k2 * h]
            out.append((t, (row1 + row2) * 0.5))
            self._next_emit += 1
        for k in [k for k in self._done if (k + 1) * h <= self._next_emit]:
            del self._done[k]
        return out

    def push(
        self,
        positions: np.ndarray,
        pixels: np.ndarray | None = None,
        accel: np.ndarray | None = None,
        bones: np.ndarray | None = None,
    ) -> list[tuple[int, np.ndarray]]:
        """Feed one frame and its observation rows; returns any frames now final."""
        if self._finished:
            raise RuntimeError("push after finish")
        first = not self._pos
        if first:
            self._px = [] if pixels is not None else None
            self._acc = [] if accel is not None else None
            self._bone = [] if bones is not None else None
        for rows, value, name in (
            (self._px, pixels, "pixels"),
            (self._acc, accel, "accel"),
            (self._bone, bones, "bones"),
        ):
            if (rows is None) != (value is None):
                raise ValueError(f"{name} must be given for every frame or none")
            if rows is not None:
                rows.append(np.asarray(value, dtype=float))
        self._pos.append(np.asarray(positions, dtype=float))
        arrived = len(self._pos) - 1
        while self._next_window * self._half + self._half - 1 <= arrived:
            self._run_window(self._next_window, arrived)
        return self._emit_ready(len(self._pos))

    def finish(self) -> list[tuple[int, np.ndarray]]:
        """Flush trailing windows; returns the remaining frames in order."""
        if self._finished:
            return []
        self._finished = True
        t_n = len(self._pos)
        if t_n == 0:
            return []
        schedule = build_schedule(t_n, self._len)
        for k in range(self._next_window, schedule.window_count):
            self._run_window(k, t_n - 1)
        return self._emit_ready(t_n)

    @property
    def results(self) -> list[FragmentResult]:
        return list(self._results)


def run_stream(
    poses: np.ndarray,
    seq_obs: SequenceObservations,
    cfg: EnergyConfig,
    settings: SolverSettings,
) -> Iterator[tuple[int, np.ndarray]]:
    """Generator over (frame_index, refined positions), emitted incrementally.

    Convenience wrapper that feeds whole-sequence arrays through a
    StreamingRefiner one frame at a time.
    """
    poses = np.asarray(poses, dtype=float)
    refiner = StreamingRefiner(
        seq_obs.fps,
        cfg,
        settings,
        camera=seq_obs.camera,
        sensor_joints=seq_obs.sensor_joints,
        sensor_parents=seq_obs.sensor_parents,
    )
    for t in range(poses.shape[0]):
        yield from refiner.push(
            poses[t],
            pixels=None if seq_obs.pixels is None else seq_obs.pixels[t],
            accel=None if seq_obs.accel is None else seq_obs.accel[t],
            bones=None if seq_obs.bones is None else seq_obs.bones[t],
        )
    yield from refiner.finish()

import numpy as np
import pytest

from vifuse import Rotation


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_rotation(rng) -> Rotation:
    return Rotation(*rng.standard_normal(4))


def rot_distance(a: Rotation, b: Rotation) -> float:
    """Small-angle-accurate rotation distance: angle ~ 2 * quaternion distance."""
    d = min(float(np.linalg.norm(a.q - b.q)), float(np.linalg.norm(a.q + b.q)))
    return 2.0 * d


def fd_gradient(fun, x: np.ndarray, h_rel: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat array."""
    x = np.asarray(x, dtype=float).ravel()
    g = np.empty_like(x)
    for i in range(x.size):
        h = h_rel * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / denom))

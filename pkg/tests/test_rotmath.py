import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from vifuse import Rotation, ZeroVectorError, angle_between, solve_rotation

from conftest import random_rotation, rot_distance

finite_quat = st.lists(
    st.floats(min_value=-10, max_value=10), min_size=4, max_size=4
).filter(lambda q: sum(v * v for v in q) > 1e-4)

unit_vec = st.lists(
    st.floats(min_value=-5, max_value=5), min_size=3, max_size=3
).filter(lambda v: sum(x * x for x in v) > 1e-4)


def test_identity_fixes_vectors(rng):
    v = rng.standard_normal((7, 3))
    assert np.array_equal(Rotation.identity().apply(v), v)


def test_constructor_normalizes_and_canonicalizes():
    r = Rotation(-2.0, 0.0, 0.0, 2.0)
    np.testing.assert_allclose(r.q, [math.sqrt(0.5), 0, 0, -math.sqrt(0.5)], atol=1e-15)
    assert r.q[0] >= 0.0


def test_canonical_tie_break_at_zero_w():
    r = Rotation(0.0, -1.0, 0.0, 0.0)
    np.testing.assert_array_equal(r.q, [0.0, 1.0, 0.0, 0.0])


def test_zero_quaternion_rejected():
    with pytest.raises(ZeroVectorError):
        Rotation(0.0, 0.0, 0.0, 0.0)


def test_axis_angle_quarter_turn_z():
    r = Rotation.from_axis_angle([0, 0, 1], math.pi / 2)
    np.testing.assert_allclose(r.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)
    assert r.angle() == pytest.approx(math.pi / 2, abs=1e-12)


def test_apply_matches_matrix(rng):
    for _ in range(20):
        r = random_rotation(rng)
        v = rng.standard_normal((5, 3))
        np.testing.assert_allclose(r.apply(v), v @ r.matrix().T, atol=1e-12)


def test_compose_matches_matrix_product(rng):
    a = random_rotation(rng)
    b = random_rotation(rng)
    np.testing.assert_allclose((a @ b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


def test_inverse_round_trip(rng):
    for _ in range(20):
        r = random_rotation(rng)
        assert rot_distance(r @ r.inverse(), Rotation.identity()) < 1e-14
        v = rng.standard_normal(3)
        np.testing.assert_allclose(r.inverse().apply(r.apply(v)), v, atol=1e-12)


def test_from_matrix_round_trip(rng):
    for _ in range(50):
        r = random_rotation(rng)
        assert rot_distance(Rotation.from_matrix(r.matrix()), r) < 1e-13


def test_from_matrix_near_pi_branches():
    for axis in ([1, 0, 0], [0, 1, 0], [0, 0, 1], [0.6, -0.48, 0.64]):
        r = Rotation.from_axis_angle(axis, math.pi - 1e-9)
        assert rot_distance(Rotation.from_matrix(r.matrix()), r) < 1e-7


def test_angle_to_symmetric(rng):
    a = random_rotation(rng)
    b = random_rotation(rng)
    assert a.angle_to(b) == pytest.approx(b.angle_to(a), abs=1e-15)
    assert a.angle_to(a) == pytest.approx(0.0, abs=1e-7)


def test_angle_between_basic():
    assert angle_between([1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2)
    assert angle_between([1, 0, 0], [-2, 0, 0]) == pytest.approx(math.pi)
    assert angle_between([3, 0, 0], [7, 0, 0]) == 0.0
    with pytest.raises(ZeroVectorError):
        angle_between([0, 0, 0], [1, 0, 0])


def test_solve_rotation_quarter_turn():
    r = solve_rotation([1, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(
        r.q, [math.sqrt(0.5), 0.0, 0.0, math.sqrt(0.5)], atol=1e-15
    )


def test_solve_rotation_identity_on_parallel():
    r = solve_rotation([2, 1, 0], [4, 2, 0])
    assert rot_distance(r, Rotation.identity()) == 0.0


def test_solve_rotation_antiparallel_x():
    r = solve_rotation([1, 0, 0], [-1, 0, 0])
    np.testing.assert_allclose(r.q, [0.0, 0.0, 1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(r.apply([1.0, 0.0, 0.0]), [-1.0, 0.0, 0.0], atol=1e-15)


def test_solve_rotation_antiparallel_general():
    u = np.array([0.6, 0.8, 0.0])
    r = solve_rotation(u, -u)
    np.testing.assert_allclose(r.apply(u), -u, atol=1e-12)
    assert r.angle() == pytest.approx(math.pi, abs=1e-12)


def test_solve_rotation_rejects_zero():
    with pytest.raises(ZeroVectorError):
        solve_rotation([0, 0, 0], [1, 0, 0])
    with pytest.raises(ZeroVectorError):
        solve_rotation([1, 0, 0], [0, 0, 0])


@settings(max_examples=200, deadline=None)
@given(finite_quat, finite_quat)
def test_compose_apply_consistent(qa, qb):
    a = Rotation(*qa)
    b = Rotation(*qb)
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose((a @ b).apply(v), a.apply(b.apply(v)), atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(finite_quat)
def test_quaternion_stays_unit_and_canonical(q):
    r = Rotation(*q)
    assert np.linalg.norm(r.q) == pytest.approx(1.0, abs=1e-12)
    assert r.q[0] >= 0.0


def _well_conditioned(u, v):
    """Exclude the near-antiparallel sliver where the axis is ill-defined."""
    un = np.asarray(u, dtype=float)
    vn = np.asarray(v, dtype=float)
    un /= np.linalg.norm(un)
    vn /= np.linalg.norm(vn)
    s = float(np.linalg.norm(np.cross(un, vn)))
    return s == 0.0 or s > 1e-6


@settings(max_examples=200, deadline=None)
@given(unit_vec, unit_vec)
def test_solve_rotation_maps_direction(u, v):
    assume(_well_conditioned(u, v))
    r = solve_rotation(u, v)
    got = r.apply(u)
    got /= np.linalg.norm(got)
    want = np.asarray(v, dtype=float)
    want /= np.linalg.norm(want)
    np.testing.assert_allclose(got, want, atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(unit_vec, unit_vec)
def test_solve_rotation_angle_is_minimal(u, v):
    r = solve_rotation(u, v)
    assert r.angle() == pytest.approx(angle_between(u, v), abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(unit_vec, unit_vec)
def test_solve_rotation_has_zero_twist(u, v):
    """The axis never has a component along the source vector."""
    assume(_well_conditioned(u, v))
    r = solve_rotation(u, v)
    axis = r.q[1:]
    un = np.asarray(u, dtype=float)
    un /= np.linalg.norm(un)
    assert abs(float(np.dot(axis, un))) < 1e-8

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from pose6d.so3 import (
    Intrinsics,
    Pose,
    angular_distance,
    check_rotation,
    exp_map,
    hat,
    log_map,
    nearest_rotation,
    orthonormality_error,
    project_points,
    transform_points,
    vee,
)

vec3 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3).map(np.array)


def random_rotvec(rng, lo=1e-6, hi=np.pi - 1e-3):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(lo, hi)


def expm_series(k, terms=20):
    out = np.eye(3)
    term = np.eye(3)
    for n in range(1, terms):
        term = term @ k / n
        out = out + term
    return out


# -- hat / vee ------------------------------------------------------------------

def test_hat_examples():
    assert np.array_equal(hat([0, 0, 0]), np.zeros((3, 3)))
    assert np.array_equal(hat([0, 0, 1]), [[0, -1, 0], [1, 0, 0], [0, 0, 0]])


@given(vec3, vec3)
def test_hat_is_cross_product(r, v):
    s = hat(r)
    assert np.allclose(s.T, -s)
    assert np.allclose(s @ v, np.cross(r, v), atol=1e-12)
    assert np.allclose(s @ r, 0, atol=1e-12)
    assert np.allclose(vee(s), r)


@pytest.mark.parametrize("bad", [[1, 2], [np.nan, 0, 0], [np.inf, 0, 0]])
def test_hat_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        hat(bad)


# -- exp_map --------------------------------------------------------------------------

def test_exp_examples():
    assert np.array_equal(exp_map([0, 0, 0]), np.eye(3))
    assert np.allclose(exp_map([np.pi / 2, 0, 0]), [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_exp_matches_series(seed):
    rng = np.random.default_rng(seed)
    r = random_rotvec(rng, 0.3, 0.3)
    assert np.abs(exp_map(r) - expm_series(hat(r))).max() <= 1e-12


@pytest.mark.parametrize("theta", [0.0, 1e-12, 1e-8, 9.99e-5, 1e-4, 1.01e-4, 1e-2, 1.0, 3.0, np.pi, 5.0, 10.0])
def test_exp_is_rotation_across_scales(theta):
    r = theta * np.array([0.6, -0.8, 0.0])
    m = exp_map(r)
    assert orthonormality_error(m) <= 1e-12
    assert abs(np.linalg.det(m) - 1) <= 1e-12
    assert np.allclose(m, Rotation.from_rotvec(r).as_matrix(), atol=1e-13)


def test_exp_small_angle_continuity():
    # Taylor branch and closed form agree across the switch
    a = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
    lo, hi = exp_map(a * (1e-4 - 1e-12)), exp_map(a * (1e-4 + 1e-12))
    assert np.abs(lo - hi).max() < 1e-11


# -- log_map ------------------------------------------------------------------------------

def test_log_examples():
    assert np.array_equal(log_map(np.eye(3)), np.zeros(3))
    r = np.array([0.1, -0.2, 0.3])
    assert np.abs(log_map(exp_map(r)) - r).max() <= 1e-10
    flip = log_map(np.diag([1.0, -1.0, -1.0]))
    assert np.allclose(np.abs(flip), [np.pi, 0, 0], atol=1e-12)


@pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [1, -2, 3], [-1, -1, -1]])
@pytest.mark.parametrize("gap", [0.0, 1e-10, 1e-6, 1e-3, 0.3])
def test_log_near_pi(axis, gap):
    a = np.array(axis, float) / np.linalg.norm(axis)
    r = (np.pi - gap) * a
    out = log_map(exp_map(r))
    assert np.linalg.norm(out) <= np.pi + 1e-12
    assert np.abs(exp_map(out) - exp_map(r)).max() <= 1e-9
    if gap > 0:
        assert np.abs(out - r).max() <= 1e-6


def test_log_pi_canonical_sign():
    out = log_map(exp_map([0, -np.pi, 0]))
    assert np.allclose(out, [0, np.pi, 0])


def test_log_of_long_vector_is_canonical():
    r = np.array([0, 0, 1.5 * np.pi])
    assert np.allclose(log_map(exp_map(r)), [0, 0, -0.5 * np.pi])


def test_log_rejects_non_rotation():
    with pytest.raises(ValueError):
        log_map(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        log_map(exp_map([0.1, 0.2, 0.3]) * (1 + 1e-6))
    with pytest.raises(ValueError):
        log_map(np.eye(2))


def test_nearest_rotation_repairs_drift():
    m = exp_map([0.3, 0.2, -0.1])
    bad = m + 1e-6 * np.random.default_rng(0).normal(size=(3, 3))
    with pytest.raises(ValueError):
        check_rotation(bad)
    fixed = nearest_rotation(bad)
    assert orthonormality_error(fixed) < 1e-12
    assert np.abs(fixed - m).max() < 1e-5
    assert np.allclose(log_map(fixed), [0.3, 0.2, -0.1], atol=1e-5)


@settings(max_examples=300)
@given(st.floats(1e-6, np.pi - 1e-3), vec3)
def test_round_trip_property(theta, v):
    if np.linalg.norm(v) < 1e-3:
        v = np.array([1.0, 0, 0])
    r = theta * v / np.linalg.norm(v)
    assert np.linalg.norm(log_map(exp_map(r)) - r) <= 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_exp_log_on_random_matrices(seed):
    for m in Rotation.random(200, random_state=seed).as_matrix():
        assert np.linalg.norm(exp_map(log_map(m)) - m) <= 1e-9
        assert np.linalg.norm(log_map(m)) <= np.pi + 1e-12


# -- angular distance ---------------------------------------------------------------------------

def test_angular_distance_examples():
    m = exp_map([0.3, -1.0, 2.0])
    assert angular_distance(m, m) == pytest.approx(0.0, abs=2e-8)
    assert angular_distance(np.eye(3), exp_map([0.5, 0, 0])) == pytest.approx(0.5, abs=1e-12)


def test_angular_distance_matches_log_and_metric_axioms():
    rng = np.random.default_rng(7)
    mats = Rotation.random(300, random_state=7).as_matrix()
    for a, b, c in zip(mats[:100], mats[100:200], mats[200:]):
        d_ab = angular_distance(a, b)
        # arccos loses precision near 0 and pi; skip those for the 1e-9 comparison
        if 1e-3 < d_ab < np.pi - 1e-3:
            assert abs(d_ab - np.linalg.norm(log_map(a @ b.T))) <= 1e-9
        assert abs(d_ab - angular_distance(b, a)) <= 1e-12
        assert d_ab <= angular_distance(a, c) + angular_distance(c, b) + 1e-9
    assert rng is not None


# -- poses and projection --------------------------------------------------------------------------

def test_transform_examples():
    pts = np.random.default_rng(0).normal(size=(10, 3))
    assert np.array_equal(transform_points(Pose(), pts), pts)
    assert np.array_equal(transform_points(Pose(np.eye(3), [0, 0, 1]), [0, 0, 0]), [0, 0, 1])


def test_composition_and_inverse():
    rng = np.random.default_rng(1)
    p1 = Pose.from_rotvec(random_rotvec(rng), rng.normal(size=3))
    p2 = Pose.from_rotvec(random_rotvec(rng), rng.normal(size=3))
    x = rng.normal(size=(50, 3))
    lhs = transform_points(p2, transform_points(p1, x))
    assert np.abs(lhs - transform_points(p2.compose(p1), x)).max() <= 1e-12
    back = transform_points(p1.inverse(), transform_points(p1, x))
    assert np.abs(back - x).max() <= 1e-12


def test_rigidity():
    rng = np.random.default_rng(2)
    p = Pose.from_rotvec(random_rotvec(rng), rng.normal(size=3))
    x = rng.normal(size=(40, 3))
    y = transform_points(p, x)
    dx = np.linalg.norm(x[:, None] - x[None], axis=2)
    dy = np.linalg.norm(y[:, None] - y[None], axis=2)
    assert np.abs(dx - dy).max() <= 1e-9


def test_pose_matrix_round_trip_and_equality():
    p = Pose.from_rotvec([0.1, 0.2, 0.3], [1, 2, 3])
    assert Pose.from_matrix(p.matrix()) == p
    assert Pose.from_matrix(p.matrix()[:3]) == p
    assert p != Pose.from_rotvec([0.1, 0.2, 0.3], [1, 2, 3.0000001])
    with pytest.raises(ValueError):
        Pose(np.eye(3), [0, 0, np.nan])
    with pytest.raises((ValueError, TypeError)):
        p.rotation[0, 0] = 2.0


K500 = Intrinsics(500, 500, 320, 240)


def test_project_examples():
    assert np.allclose(project_points([[0, 0, 1]], K500), [[320, 240]])
    assert np.allclose(project_points([[0.2, 0, 1]], K500), [[420, 240]])


@given(vec3.filter(lambda v: abs(v[2]) > 1e-3), st.floats(0.01, 100))
def test_projective_invariance(p, s):
    p = p.copy()
    p[2] = abs(p[2])
    assert np.allclose(project_points([p], K500), project_points([s * p], K500), rtol=1e-9, atol=1e-7)


@pytest.mark.parametrize("z", [0.0, -1.0])
def test_project_rejects_behind_camera(z):
    with pytest.raises(ValueError):
        project_points([[0, 0, 1], [0, 0, z]], K500)


@pytest.mark.parametrize("args", [(0, 1, 0, 0), (1, -1, 0, 0), (1, 1, np.nan, 0)])
def test_intrinsics_validation(args):
    with pytest.raises(ValueError):
        Intrinsics(*args)


def test_intrinsics_matrix():
    assert np.array_equal(K500.matrix(), [[500, 0, 320], [0, 500, 240], [0, 0, 1]])

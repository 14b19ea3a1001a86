import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from symnet.transforms import (
    CUBE_CENTER,
    AxisAngle,
    ParameterError,
    RotQuat,
    SymPlane,
    canonicalize_plane,
    dihedral_angle,
    quat_mul,
    quat_to_axis_angle,
    reflect,
    rotate,
    transform_plane,
)

finite = st.floats(-3, 3, allow_nan=False)
vec3 = st.tuples(finite, finite, finite)
nonzero3 = vec3.filter(lambda v: np.linalg.norm(v) > 1e-3)
quat4 = st.tuples(finite, finite, finite, finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def householder(n, d, q):
    n = np.asarray(n, float)
    H = np.eye(3) - 2 * np.outer(n, n) / (n @ n)
    return np.asarray(q) @ H.T - 2 * d * n / (n @ n)


def unit(q):
    q = np.asarray(q, float)
    return RotQuat(tuple(q / np.linalg.norm(q)))


# -- reflection ----------------------------------------------------------------


def test_point_on_plane_fixed():
    p = SymPlane((1, 2, 3), -1.0)
    q = np.array([1.0, 0.0, 0.0])
    assert np.allclose(reflect(p, q), q, atol=1e-15)


def test_mirror_z_half():
    assert np.allclose(reflect(SymPlane((0, 0, 1), -0.5), [0.2, 0.2, 0.8]), [0.2, 0.2, 0.2])


def test_reflect_oblique_matches_householder():
    # (1,0,0) lies on x + y - 1 = 0, so the oracle leaves it in place too
    out = reflect(SymPlane((1, 1, 0), -1.0), [1.0, 0.0, 0.0])
    assert np.allclose(out, householder((1, 1, 0), -1.0, [1.0, 0.0, 0.0]))
    assert np.allclose(out, [1.0, 0.0, 0.0])


def test_zero_normal_rejected():
    with pytest.raises(ParameterError):
        reflect(SymPlane((0, 0, 0), 1.0), [0, 0, 0])


@given(nonzero3, finite, vec3)
def test_reflection_involution(n, d, q):
    p = SymPlane(n, d)
    assert np.allclose(reflect(p, reflect(p, q)), q, atol=1e-12)


@given(nonzero3, finite, st.integers(0, 2**31 - 1))
def test_reflection_isometry(n, d, seed):
    pts = np.random.default_rng(seed).uniform(-2, 2, (8, 3))
    r = reflect(SymPlane(n, d), pts)
    D0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    D1 = np.linalg.norm(r[:, None] - r[None], axis=-1)
    assert np.allclose(D0, D1, atol=1e-12)


# -- rotation ------------------------------------------------------------------


def test_identity_rotation():
    q = np.array([0.3, -0.2, 0.9])
    assert np.allclose(rotate(RotQuat((1, 0, 0, 0)), q, center=np.zeros(3)), q)


def test_half_turn_about_z():
    assert np.allclose(rotate(RotQuat((0, 0, 0, 1)), [1.0, 0, 0], center=np.zeros(3)), [-1, 0, 0], atol=1e-15)


def test_rotation_about_cube_center():
    # half-turn about z through (0.5, 0.5, 0.5)
    out = rotate(RotQuat((0, 0, 0, 1)), [1.0, 0.5, 0.2], center=CUBE_CENTER)
    assert np.allclose(out, [0.0, 0.5, 0.2], atol=1e-15)


def test_random_quat_vs_matrix_oracle():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(1000, 3))
    for _ in range(20):
        q = unit(rng.normal(size=4))
        w, x, y, z = q.q
        ref = Rotation.from_quat([x, y, z, w]).as_matrix()
        assert np.max(np.abs(rotate(q, pts, center=np.zeros(3)) - pts @ ref.T)) < 1e-9


def test_non_unit_quaternion_rejected():
    with pytest.raises(ParameterError):
        rotate(RotQuat((2, 0, 0, 0)), [0, 0, 0])


@given(quat4, quat4, vec3)
def test_rotation_composes(a, b, q):
    qa, qb = unit(a), unit(b)
    c = np.zeros(3)
    lhs = rotate(qa, rotate(qb, q, c), c)
    rhs = rotate(RotQuat(tuple(quat_mul(qa.as_array(), qb.as_array()))), q, c)
    assert np.allclose(lhs, rhs, atol=1e-9)
    assert math.isclose(np.linalg.norm(lhs), np.linalg.norm(q), abs_tol=1e-9)


# -- axis-angle ----------------------------------------------------------------


def test_half_turn_axis_angle():
    aa = quat_to_axis_angle(RotQuat((math.cos(math.pi / 2), 0, 0, math.sin(math.pi / 2))))
    assert np.allclose(aa.axis, [0, 0, 1]) and math.isclose(aa.angle, math.pi)
    assert aa.anchor == (0.5, 0.5, 0.5)


def test_identity_axis_angle():
    aa = quat_to_axis_angle(RotQuat((1, 0, 0, 0)))
    assert aa.angle == 0.0 and aa.axis == (0.0, 0.0, 1.0)


@given(nonzero3, st.floats(0.1, math.pi))
def test_axis_angle_roundtrip(axis, angle):
    aa = quat_to_axis_angle(RotQuat.from_axis_angle(axis, angle))
    a = np.asarray(axis) / np.linalg.norm(axis)
    assert np.allclose(aa.axis, a, atol=1e-9)
    assert math.isclose(aa.angle, angle, abs_tol=1e-9)


def test_axis_angle_json_roundtrip():
    aa = AxisAngle((0, 1, 1), 1.25)
    assert AxisAngle.from_json(aa.to_json()) == aa


# -- canonicalization ----------------------------------------------------------


def test_canonical_scaling():
    p = canonicalize_plane(SymPlane((0, 0, 2), 1.0))
    assert p.n == (0.0, 0.0, 1.0) and p.d == 0.5


def test_canonical_sign_flip():
    p = canonicalize_plane(SymPlane((-1, 0, 0), 0.3))
    assert p.n == (1.0, 0.0, 0.0) and p.d == -0.3


@given(nonzero3, finite)
def test_canonicalize_idempotent(n, d):
    once = canonicalize_plane(SymPlane(n, d))
    assert canonicalize_plane(once) == once


@given(nonzero3, finite, st.integers(0, 2**31 - 1))
def test_canonicalize_preserves_incidence(n, d, seed):
    pts = np.random.default_rng(seed).uniform(-3, 3, (20, 3))
    before = pts @ np.asarray(n) + d
    c = canonicalize_plane(SymPlane(n, d))
    after = pts @ c.normal + c.d
    keep = np.abs(before) > 1e-9 * np.linalg.norm(n)
    s = np.sign(before[keep]) * np.sign(after[keep])
    assert np.all(s == s[0]) if len(s) else True


# -- misc ------------------------------------------------------------------------


def test_dihedral_angle_is_undirected():
    assert dihedral_angle((1, 0, 0), (-1, 0, 0)) == 0.0
    assert math.isclose(dihedral_angle((1, 0, 0), (1, 1, 0)), math.pi / 4)
    assert math.isclose(dihedral_angle((1, 0, 0), (0, 0, 5)), math.pi / 2)


@given(nonzero3, st.floats(-1, 1), st.integers(0, 2**31 - 1), st.floats(0.2, 5), vec3)
def test_transform_plane_maps_points_on_plane(n, d, seed, s, t):
    rot = Rotation.random(random_state=seed).as_matrix()
    p = SymPlane(n, d)
    # a few points on the original plane
    nn = np.asarray(n) / np.linalg.norm(n)
    base = -d * np.asarray(n) / (np.asarray(n) @ np.asarray(n))
    u = np.cross(nn, [1, 0, 0] if abs(nn[0]) < 0.9 else [0, 1, 0])
    pts = base + np.outer([0, 1, -2], u)
    img = s * pts @ rot.T + np.asarray(t)
    q = transform_plane(p, rot, s, t)
    assert np.allclose(img @ q.normal + q.d, 0, atol=1e-8 * (1 + np.abs(img).max()) * np.linalg.norm(q.normal))

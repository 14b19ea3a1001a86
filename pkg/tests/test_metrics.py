import math

import numpy as np
from hypothesis import given, strategies as st

from conftest import rand_unit
from symnet.loss import INIT_PLANES, INIT_QUATS, SymCandidates, symmetry_distance
from symnet.mesh import closest_surface_points, sample_surface
from symnet.metrics import MAX_PLANES, RECALL_MAX_GTE, gte, match_gte, sde_eval
from symnet.transforms import SymPlane, reflect, rotate, CUBE_CENTER
from symnet.validate import DetectionResult
from symnet.voxel import build_cp_grid


def test_gte_identical_is_zero():
    p = SymPlane((0.0, 0.0, 1.0), -0.5)
    assert gte(p, p) == 0.0


def test_gte_ignores_normal_sign():
    assert gte(SymPlane((-1.0, 0, 0), 0.5), SymPlane((1.0, 0, 0), -0.5)) == 0.0


def test_gte_perpendicular_planes():
    # (1,0,0,-0.5) vs (0,1,0,-0.5): squared distance 1 + 1 + 0 + 0
    assert math.isclose(gte(SymPlane((1.0, 0, 0), -0.5), SymPlane((0, 1.0, 0), -0.5)), 2.0)


def test_gte_scale_invariant():
    assert math.isclose(gte(SymPlane((0, 0, 4.0), -2.0), SymPlane((0, 0, 1.0), -0.5)), 0.0, abs_tol=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_gte_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = SymPlane(tuple(rand_unit(rng)), float(rng.uniform(-1, 1)))
    b = SymPlane(tuple(rand_unit(rng)), float(rng.uniform(-1, 1)))
    assert math.isclose(gte(a, b), gte(b, a), rel_tol=1e-12, abs_tol=1e-15)
    assert gte(a, b) >= 0.0


def test_small_tilt_gives_small_gte():
    g = SymPlane((1.0, 0, 0), -0.5)
    t = math.radians(1.0)
    p = SymPlane((math.cos(t), math.sin(t), 0.0), -0.5 * math.cos(t))
    assert gte(p, g) < 1e-3


# -- matching ---------------------------------------------------------------------------


def _planes(*normals):
    return [SymPlane(tuple(np.asarray(n, float) / np.linalg.norm(n)), -0.5) for n in normals]


def test_swapped_predictions_pair_correctly():
    gt = _planes([1, 0, 0], [0, 1, 0])
    pred = _planes([0, 1, 0.01], [1, 0.01, 0])
    rep = match_gte(pred, gt)
    assert [m.pred_index for m in rep.matches] == [1, 0]
    assert rep.recall == 1.0


def test_one_prediction_two_truths():
    gt = _planes([1, 0, 0], [0, 1, 0])
    rep = match_gte(_planes([1, 0, 0]), gt)
    assert len(rep.matched) == 1 and len(rep.misses) == 1
    assert rep.misses[0].gte is None
    assert rep.recall == 0.5
    assert rep.mean_gte == 0.0


def test_recall_caps_denominator():
    # a 6-sided prism has 7 planes; at most 3 can ever be predicted
    gt = _planes(*[[math.cos(a), math.sin(a), 0] for a in np.linspace(0, math.pi, 6, endpoint=False)], [0, 0, 1])
    rep = match_gte(_planes([1, 0, 0], [0, 0, 1], [0.5, math.sqrt(3) / 2, 0]), gt)
    assert rep.recall_denominator() == MAX_PLANES
    assert rep.recall == 1.0


def test_far_match_does_not_count_for_recall():
    gt = _planes([1, 0, 0])
    rep = match_gte(_planes([0, 1, 0]), gt)
    assert rep.matches[0].gte > RECALL_MAX_GTE
    assert rep.recall == 0.0


def test_accepts_detection_result():
    gt = _planes([1, 0, 0])
    res = DetectionResult(planes=_planes([1, 0, 0]), plane_sde=[1e-5])
    assert match_gte(res, gt).recall == 1.0


def test_no_truth_gives_nan_recall():
    assert math.isnan(match_gte(_planes([1, 0, 0]), []).recall)


@given(st.integers(0, 2**31 - 1))
def test_one_degree_perturbation_mean_gte(seed):
    rng = np.random.default_rng(seed)
    gt = [SymPlane(tuple(n), -float(n @ [0.5, 0.5, 0.5])) for n in np.linalg.qr(rng.normal(size=(3, 3)))[0]]
    pred = []
    for g in gt:
        axis = rand_unit(rng)
        n = np.asarray(g.n)
        w = np.cross(n, axis)
        w /= np.linalg.norm(w)
        t = math.radians(1.0)
        m = math.cos(t) * n + math.sin(t) * w
        pred.append(SymPlane(tuple(m), -float(m @ [0.5, 0.5, 0.5])))
    assert match_gte(pred, gt).mean_gte < 1e-3


@given(st.permutations(range(3)), st.integers(0, 2**31 - 1))
def test_matching_is_permutation_invariant(perm, seed):
    rng = np.random.default_rng(seed)
    gt = _planes([1, 0, 0], [0, 1, 0], [0, 0, 1])
    pred = [SymPlane(tuple(np.asarray(g.n) + rng.normal(0, 0.02, 3)), g.d) for g in gt]
    a = match_gte(pred, gt)
    b = match_gte([pred[i] for i in perm], gt)
    assert [m.gte for m in a.matches] == [m.gte for m in b.matches]


# -- SDE -----------------------------------------------------------------------------------


def test_sde_eval_equals_loss_report(cube_mesh):
    s = sample_surface(cube_mesh, 1000, seed=0)
    g = build_cp_grid(sample_surface(cube_mesh, 20000, seed=1), 32)
    c = SymCandidates(INIT_PLANES, INIT_QUATS)
    assert np.array_equal(sde_eval(c, s, g), np.array(symmetry_distance(c, s, g).per_candidate_sde))


def test_sde_eval_offset_plane_vs_exact(cube_mesh):
    s = sample_surface(cube_mesh, 1000, seed=0)
    g = build_cp_grid(sample_surface(cube_mesh, 20000, seed=1), 32)
    planes = INIT_PLANES.copy()
    planes[:, 3] -= 0.1  # x = 0.6, y = 0.6, z = 0.6
    sde = sde_eval(SymCandidates(planes, INIT_QUATS), s, g)
    for i in range(3):
        exact = closest_surface_points(cube_mesh, reflect(SymPlane.from_array(planes[i]), s.points))[1]
        assert math.isclose(sde[i], float(np.mean(exact**2)), rel_tol=0.1)
        assert sde[i] > 4e-4
    # half-turns about the center are exact symmetries of the cube
    for j in range(3):
        from symnet.transforms import RotQuat

        exact = closest_surface_points(cube_mesh, rotate(RotQuat(tuple(INIT_QUATS[j])), s.points, CUBE_CENTER))[1]
        assert np.max(exact) < 1e-12
        assert sde[3 + j] <= (math.sqrt(3) / 32) ** 2


# -- nearest true symmetry plane -----------------------------------------------------------


@given(st.floats(0, 2 * math.pi))
def test_any_plane_through_revolution_axis_is_exact(phi):
    from symnet.metrics import nearest_symmetry_gte
    from symnet.transforms import AxisAngle

    ax = AxisAngle((0.0, 0.0, 1.0), 0.0, (0.3, 0.6, 0.5))
    n = np.array([math.cos(phi), math.sin(phi), 0.0])
    plane = SymPlane(tuple(n), -float(n @ [0.3, 0.6, 0.5]))
    assert nearest_symmetry_gte(plane, [], [ax]) < 1e-24


def test_nearest_symmetry_gte_prefers_listed_or_pencil():
    from symnet.metrics import nearest_symmetry_gte
    from symnet.transforms import AxisAngle

    ax = AxisAngle((0.0, 0.0, 1.0), 0.0, (0.5, 0.5, 0.5))
    cap = SymPlane((0.0, 0.0, 1.0), -0.5)
    assert nearest_symmetry_gte(cap, [cap], [ax]) == 0.0
    # perpendicular to the axis and off the cap: the pencil is 90 degrees away
    off = SymPlane((0.0, 0.0, 1.0), -0.6)
    assert math.isclose(nearest_symmetry_gte(off, [cap], [ax]), gte(off, cap))
    assert nearest_symmetry_gte(off, [], [ax]) > 1.0
    # 1 degree tilt out of the pencil stays small
    t = math.radians(1.0)
    n = np.array([math.cos(t), 0.0, math.sin(t)])
    assert nearest_symmetry_gte(SymPlane(tuple(n), -float(n @ [0.5, 0.5, 0.5])), [cap], [ax]) < 1e-3
    assert nearest_symmetry_gte(cap, [], []) == math.inf

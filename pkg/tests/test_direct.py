import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from symnet import dataset as ds
from symnet.direct import DirectConfig, optimize_candidates, pca_init, refine_plane_exact, restart_schedule
from symnet.loss import SymCandidates
from symnet.mesh import TriMesh, sample_surface
from symnet.metrics import axis_angle_error, gte
from symnet.pipeline import detect_direct, prepare
from symnet.transforms import ParameterError, SymPlane, dihedral_angle


def _angle_deg(a, b):
    return math.degrees(dihedral_angle(a, b))


@pytest.fixture(scope="module")
def rotated_boxes():
    out = []
    for seed in (0, 1):
        s = ds.generate("box", None, seed=seed, rotation_seed=seed + 10)
        out.append((s, prepare(s.mesh, seed=0)))
    return out


def test_cube_rotated_about_z():
    m = ds.box_mesh((1, 1, 1))
    rot = Rotation.from_euler("z", 20, degrees=True).as_matrix()
    shape = prepare(TriMesh(m.vertices @ rot.T, m.faces), seed=0)
    res, _ = detect_direct(shape)
    truth = [rot[:, 0], rot[:, 1], np.array([0.0, 0.0, 1.0])]
    assert len(res.planes) == 3
    for t in truth:
        assert min(_angle_deg(p.normal, t) for p in res.planes) < 3.0


def test_true_planes_are_stationary(box_shape, box_prepared):
    planes = np.array([p.as_array() for p in box_shape.gt_planes])
    init = SymCandidates(planes, np.array([[0.0, 1, 0, 0], [0.0, 0, 1, 0], [0.0, 0, 0, 1]]))
    res = optimize_candidates(box_prepared.sample, box_prepared.grid, steps=200, init=init)
    for p, g in zip(res.candidates.planes, box_shape.gt_planes):
        assert gte(SymPlane.from_array(p), g) < 1e-4


def test_cylinder_axis_recovered(cylinder_shape, cylinder_prepared):
    res, _ = detect_direct(cylinder_prepared)
    gt_axis = cylinder_shape.gt_axes[0]
    assert res.axes, "expected a validated revolution axis"
    assert min(math.degrees(axis_angle_error(a, gt_axis)) for a in res.axes) < 3.0
    assert all(m <= 4e-4 for m in res.axis_sweep_max)


def test_cone_axis_recovered():
    # the axis of a rotated cone misses the cube center; rotations must turn about the centroid
    shape = ds.generate("cone", None, seed=2, rotation_seed=9)
    res, _ = detect_direct(prepare(shape.mesh, seed=0))
    g = shape.gt_axes[0]
    assert res.axes, "expected a validated revolution axis"
    a = min(res.axes, key=lambda a: axis_angle_error(a, g))
    assert math.degrees(axis_angle_error(a, g)) < 3.0
    # reported anchor lies on the true axis line
    off = np.subtract(a.anchor, g.anchor)
    assert np.linalg.norm(off - (off @ np.asarray(g.axis)) * np.asarray(g.axis)) < 1e-2


def test_pca_start_converges_faster(rotated_boxes):
    for _, shape in rotated_boxes:
        a = optimize_candidates(shape.sample, shape.grid)
        b = optimize_candidates(shape.sample, shape.grid, init=pca_init(shape.sample))
        assert b.steps_to_converge() < a.steps_to_converge()


def test_both_starts_agree(rotated_boxes):
    for _, shape in rotated_boxes:
        a = optimize_candidates(shape.sample, shape.grid)
        b = optimize_candidates(shape.sample, shape.grid, init=pca_init(shape.sample))
        for n in a.candidates.planes[:, :3]:
            assert min(_angle_deg(n, m) for m in b.candidates.planes[:, :3]) < 3.0


def test_restart_keeps_lower_total(rotated_boxes):
    _, shape = rotated_boxes[0]
    best = restart_schedule(shape.sample, shape.grid)
    only = restart_schedule(shape.sample, shape.grid, DirectConfig(use_pca=False))
    assert best.breakdown.total <= only.breakdown.total
    assert best.init in ("canonical", "pca")


def test_rotated_box_planes_recovered(rotated_boxes):
    for s, shape in rotated_boxes:
        res, _ = detect_direct(shape)
        for g in s.gt_planes:
            assert min(gte(p, g) for p in res.planes) < 1e-2


def test_blob_is_fully_rejected(blob_prepared):
    res, _ = detect_direct(blob_prepared)
    assert res.planes == [] and res.axes == []
    assert len(res.rejected) == 6


def test_best_trace_monotone(box_prepared):
    res = optimize_candidates(box_prepared.sample, box_prepared.grid, steps=60, jitter=0.1, seed=4)
    bt = np.array(res.best_trace)
    assert np.all(np.diff(bt) <= 0)
    assert bt[-1] == res.breakdown.total
    assert len(res.trace) == 61


def test_jitter_is_seeded(box_prepared):
    a = optimize_candidates(box_prepared.sample, box_prepared.grid, steps=5, jitter=0.1, seed=4)
    b = optimize_candidates(box_prepared.sample, box_prepared.grid, steps=5, jitter=0.1, seed=4)
    assert np.array_equal(a.candidates.planes, b.candidates.planes)


def test_steps_must_be_positive(box_prepared):
    with pytest.raises(ParameterError):
        optimize_candidates(box_prepared.sample, box_prepared.grid, steps=0)


def test_outputs_unit_normals_and_quats(box_prepared):
    res = optimize_candidates(box_prepared.sample, box_prepared.grid, steps=20, jitter=0.3, seed=1)
    assert np.allclose(np.linalg.norm(res.candidates.planes[:, :3], axis=1), 1.0)
    assert np.allclose(np.linalg.norm(res.candidates.quats, axis=1), 1.0)


# -- exact refinement -------------------------------------------------------------


def test_refine_recovers_exact_plane(box_shape):
    g = box_shape.gt_planes[0]
    n = np.asarray(g.n) + [0.0, 0.01, -0.01]
    start = SymPlane(tuple(n / np.linalg.norm(n)), g.d + 0.003)
    pts = sample_surface(box_shape.mesh, 2000, seed=0).points
    out = refine_plane_exact(box_shape.mesh, start, pts)
    assert gte(out, g) < 1e-10


def test_refine_ignores_missing_part(box_shape):
    # drop a chunk of one side; trimming keeps the fit on the intact part
    g = box_shape.gt_planes[0]
    cut = ds.perturb_remove_sphere(box_shape, box_shape.mesh.vertices[np.argmax(box_shape.mesh.vertices[:, 0])], 0.2)
    pts = sample_surface(cut.mesh, 2000, seed=1).points
    start = SymPlane(g.n, g.d + 0.004)
    out = refine_plane_exact(cut.mesh, start, pts)
    assert gte(out, g) < 1e-6

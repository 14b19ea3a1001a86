import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from symnet import dataset as ds
from symnet.mesh import TriMesh
from symnet.pipeline import prepare

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def unit_cube_mesh(div: int = 1) -> TriMesh:
    """Surface of [0, 1]^3, outward winding."""
    return ds.box_mesh((1.0, 1.0, 1.0), div=div, center=(0.5, 0.5, 0.5))


@pytest.fixture(scope="session")
def cube_mesh():
    return unit_cube_mesh(4)


@pytest.fixture(scope="session")
def box_shape():
    """Axis-aligned box with three known planes, already unit-cube normalized."""
    return ds.generate("box", {"extents": [0.8, 0.5, 0.3]}, seed=0)


@pytest.fixture(scope="session")
def box_prepared(box_shape):
    return prepare(box_shape.mesh, seed=0)


@pytest.fixture(scope="session")
def cylinder_shape():
    return ds.generate("cylinder", None, seed=2)


@pytest.fixture(scope="session")
def cylinder_prepared(cylinder_shape):
    return prepare(cylinder_shape.mesh, seed=1)


@pytest.fixture(scope="session")
def blob_prepared():
    return prepare(ds.generate("asymmetric-blob", None, seed=0, rotation_seed=5).mesh, seed=2)


def rand_unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def fd_check(planes, quats, pts, grid, w_r=25.0, h=1e-4):
    """Central differences of the total loss for all 24 parameters.

    Returns ``(rel_err, boundary)``: relative error per coordinate and a flag
    marking probes where some transformed point changed grid cell between
    the +h and -h evaluations (the loss is only piecewise smooth there).
    """
    from symnet.loss import loss_and_gradients, transformed_points
    from symnet.voxel import cell_index

    _, g = loss_and_gradients(planes, quats, pts, grid, w_r)
    analytic = np.concatenate([g.d_planes.ravel(), g.d_quats.ravel()])
    params = np.concatenate([np.asarray(planes, float).ravel(), np.asarray(quats, float).ravel()])
    rel, boundary = [], []
    for i in range(24):
        evals = []
        cells = []
        for sgn in (1, -1):
            x = params.copy()
            x[i] += sgn * h
            P, Q = x[:12].reshape(3, 4), x[12:].reshape(3, 4)
            evals.append(loss_and_gradients(P, Q, pts, grid, w_r)[0].total)
            cells.append(cell_index(grid.resolution, transformed_points(P, Q / np.linalg.norm(Q, axis=1, keepdims=True), pts, grid.center)))
        fd = (evals[0] - evals[1]) / (2 * h)
        denom = max(abs(fd), abs(analytic[i]), 1e-6)
        rel.append(abs(fd - analytic[i]) / denom)
        boundary.append(not np.array_equal(cells[0], cells[1]))
    return np.array(rel), np.array(boundary)


def random_candidates(rng, spread=0.2):
    from symnet.loss import INIT_PLANES, INIT_QUATS

    planes = INIT_PLANES + rng.normal(0, spread, (3, 4))
    quats = INIT_QUATS + rng.normal(0, spread, (3, 4))
    return planes, quats / np.linalg.norm(quats, axis=1, keepdims=True)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

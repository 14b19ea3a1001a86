"""End-to-end detection: normalize, sample, voxelize, build the grid, predict, validate."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .direct import DirectConfig, OptResult, refine_plane_exact, restart_schedule
from .loss import SDE_THRESHOLD, SymCandidates
from .mesh import PointSample, TriMesh, normalize_unit_cube, sample_surface
from .net import SymmetryNet, TrainRecord, predict
from .validate import DetectionResult, candidate_sde, validate_all
from .voxel import ClosestPointGrid, build_cp_grid, voxelize

N_POINTS = 1000
GRID_POINTS = 20000


@dataclass
class PreparedShape:
    mesh: TriMesh  # normalized to the unit cube
    sample: PointSample
    grid: ClosestPointGrid
    voxels: np.ndarray  # (R, R, R) bool

    def record(self) -> TrainRecord:
        return TrainRecord(self.voxels, self.sample.points, self.grid)


def prepare(
    mesh: TriMesh,
    resolution: int = 32,
    n_points: int = N_POINTS,
    grid_points: int = GRID_POINTS,
    seed: int = 0,
) -> PreparedShape:
    """Preprocess one mesh.

    The loss sample has ``n_points`` points. The closest-point grid is built
    from a separate, denser sample of ``grid_points`` so that grid lookups
    approximate the true surface rather than a sparse point set. Rotational
    candidates turn about the exact surface centroid, which lies on every
    rotation axis of the shape.
    """
    mesh = normalize_unit_cube(mesh)
    rng = np.random.default_rng(seed)
    sample = sample_surface(mesh, n_points, rng)
    dense = sample_surface(mesh, grid_points, rng)
    grid = build_cp_grid(dense, resolution, center=mesh.surface_centroid())
    vox = voxelize(mesh, resolution).data
    return PreparedShape(mesh, sample, grid, vox)


def detect_direct(shape: PreparedShape, config: DirectConfig | None = None) -> tuple[DetectionResult, OptResult]:
    opt = restart_schedule(shape.sample, shape.grid, config)
    return validate_all(opt.candidates, shape.sample, shape.grid), opt


def detect_net(shape: PreparedShape, net: SymmetryNet) -> tuple[DetectionResult, SymCandidates]:
    cand = predict(net, shape.voxels)[0]
    return validate_all(cand, shape.sample, shape.grid), cand


def refine_planes(res: DetectionResult, shape: PreparedShape, n_points: int = 2000, seed: int = 0) -> DetectionResult:
    """Polish every validated plane against the exact (normalized) mesh.

    A refined plane replaces the original only if it still passes the grid
    SDE threshold; the reported SDE is recomputed for the refined plane.
    """
    if not res.planes:
        return res
    pts = sample_surface(shape.mesh, n_points, seed).points
    planes, sdes = [], []
    for p, old in zip(res.planes, res.plane_sde):
        q = refine_plane_exact(shape.mesh, p, pts)
        sde = float(candidate_sde(q.as_array()[None], np.zeros((0, 4)), shape.sample, shape.grid)[0][0])
        if sde <= SDE_THRESHOLD:
            planes.append(q)
            sdes.append(sde)
        else:
            planes.append(p)
            sdes.append(old)
    return replace(res, planes=planes, plane_sde=sdes)

"""Surface voxelization and the closest-point grid.

Grids cover the unit cube ``[0, 1]^3`` with ``R`` cells per axis. Arrays are
indexed ``[i, j, k]`` with ``i`` along x; cell ``(i, j, k)`` spans
``[i/R, (i+1)/R] x ...`` and has center ``((i + .5)/R, ...)``.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .mesh import PointSample, TriMesh
from .transforms import ParameterError

RESOLUTIONS = (16, 32, 64, 128)
OCC_MAGIC = b"PRSV"


class GridFormatError(ValueError):
    pass


def check_resolution(R: int) -> int:
    if R not in RESOLUTIONS:
        raise ParameterError(f"resolution must be one of {RESOLUTIONS}, got {R}")
    return int(R)


def cell_centers(R: int) -> np.ndarray:
    """(R, R, R, 3) array of cell centers."""
    c = (np.arange(R) + 0.5) / R
    return np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class VoxelOccupancy:
    resolution: int
    data: np.ndarray  # (R, R, R) bool

    def __eq__(self, other):
        return (
            isinstance(other, VoxelOccupancy)
            and self.resolution == other.resolution
            and np.array_equal(self.data, other.data)
        )

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True, eq=False)
class ClosestPointGrid:
    resolution: int
    cp: np.ndarray  # (R, R, R, 3) nearest sample point per cell center
    index: np.ndarray  # (R, R, R) index of that point in the source sample
    # rotational candidates turn about this point (the shape's surface centroid)
    center: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))


# ---------------------------------------------------------------------------
# triangle / box overlap (separating axis theorem), vectorized over pairs


def _tri_box_overlap(tri: np.ndarray, center: np.ndarray, half: float, eps: float = 1e-12) -> np.ndarray:
    """Boolean per pair: does triangle ``tri[m]`` (3, 3) touch the cube around ``center[m]``?

    Touching counts as overlap.
    """
    v = tri - center[:, None, :]
    e = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1)  # (M, 3, 3)
    r_box = half + eps
    ok = np.ones(len(v), dtype=bool)

    # box face normals
    for ax in range(3):
        lo = v[:, :, ax].min(axis=1)
        hi = v[:, :, ax].max(axis=1)
        ok &= (lo <= r_box) & (hi >= -r_box)

    # triangle normal
    n = np.cross(e[:, 0], e[:, 1])
    dist = np.einsum("mi,mi->m", n, v[:, 0])
    rad = half * np.abs(n).sum(axis=1)
    ok &= np.abs(dist) <= rad + eps * (1.0 + np.abs(n).sum(axis=1))

    # 9 edge cross products
    unit = np.eye(3)
    for a in range(3):
        for k in range(3):
            axis = np.cross(unit[a], e[:, k])  # (M, 3)
            p = np.einsum("mvi,mi->mv", v, axis)
            rad = half * np.abs(axis).sum(axis=1)
            tol = eps * (1.0 + np.abs(axis).sum(axis=1))
            ok &= (p.min(axis=1) <= rad + tol) & (p.max(axis=1) >= -rad - tol)
    return ok


def voxelize(mesh: TriMesh, R: int = 32, chunk: int = 400_000) -> VoxelOccupancy:
    """Conservative surface voxelization: a cell is set iff a triangle touches its box."""
    check_resolution(R)
    tri = mesh.triangles
    h = 1.0 / R
    lo = np.clip(np.floor(tri.min(axis=1) * R - 1e-9).astype(np.int64), 0, R - 1)
    hi = np.clip(np.floor(tri.max(axis=1) * R + 1e-9).astype(np.int64), 0, R - 1)
    span = hi - lo + 1
    counts = span.prod(axis=1)
    occ = np.zeros((R, R, R), dtype=bool)

    starts = np.concatenate([[0], np.cumsum(counts)])
    # process triangles in groups whose candidate-pair count fits a chunk
    t0 = 0
    F = len(tri)
    while t0 < F:
        t1 = int(np.searchsorted(starts, starts[t0] + chunk, side="right")) - 1
        t1 = max(t1, t0 + 1)
        t1 = min(t1, F)
        c = counts[t0:t1]
        tid = np.repeat(np.arange(t0, t1), c)
        local = np.arange(c.sum()) - np.repeat(starts[t0:t1] - starts[t0], c)
        sp = span[tid]
        ii = lo[tid, 0] + local // (sp[:, 1] * sp[:, 2])
        jj = lo[tid, 1] + (local // sp[:, 2]) % sp[:, 1]
        kk = lo[tid, 2] + local % sp[:, 2]
        centers = (np.stack([ii, jj, kk], axis=1) + 0.5) * h
        hit = _tri_box_overlap(tri[tid], centers, 0.5 * h)
        occ[ii[hit], jj[hit], kk[hit]] = True
        t0 = t1
    return VoxelOccupancy(R, occ)


# ---------------------------------------------------------------------------
# closest-point grid


def build_cp_grid(sample: PointSample | np.ndarray, R: int = 32, center=None) -> ClosestPointGrid:
    """Exact nearest sample point to every cell center; ties go to the lowest index.

    ``center`` is the rotation center stored with the grid; it defaults to the
    mean of the sample points.
    """
    check_resolution(R)
    pts = sample.points if isinstance(sample, PointSample) else np.asarray(sample, dtype=float)
    if len(pts) == 0:
        raise ParameterError("empty sample")
    centers = cell_centers(R).reshape(-1, 3)
    # unbalanced, non-compact trees query noticeably faster for far-away cell centers
    tree = cKDTree(pts, balanced_tree=False, compact_nodes=False)
    if len(pts) == 1:
        best = np.zeros(len(centers), dtype=np.int64)
    else:
        dist, idx = tree.query(centers, k=2)
        best = idx[:, 0].copy()
        # resolve exact ties deterministically (lowest index), widening k only where needed
        rows = np.flatnonzero(dist[:, 1] == dist[:, 0])
        k = 2
        while len(rows):
            dk, ik = tree.query(centers[rows], k=k) if k > 2 else (dist[rows], idx[rows])
            tied = dk == dk[:, :1]
            best[rows] = np.where(tied, ik, np.iinfo(np.int64).max).min(axis=1)
            if k >= len(pts):
                break
            rows = rows[tied[:, -1]]
            k = min(2 * k, len(pts))
    best = best.reshape(R, R, R)
    c = pts.mean(axis=0) if center is None else np.asarray(center, dtype=float).reshape(3)
    return ClosestPointGrid(R, pts[best], best, c)


def cell_index(R: int, q: np.ndarray) -> np.ndarray:
    """Cell indices of point(s) ``q`` clamped to ``[0, R-1]`` per axis."""
    return np.clip(np.floor(np.asarray(q) * R), 0, R - 1).astype(np.int64)


def approx_nearest(grid: ClosestPointGrid, q) -> np.ndarray:
    """Stored closest point of the cell containing ``q`` (shape (3,) or (..., 3))."""
    R = grid.resolution
    ijk = cell_index(R, q)
    flat = (ijk[..., 0] * R + ijk[..., 1]) * R + ijk[..., 2]
    return grid.cp.reshape(-1, 3)[flat]


# ---------------------------------------------------------------------------
# occupancy dump: b"PRSV", u32 resolution, bit-packed occupancy


def dump_occupancy(vox: VoxelOccupancy, fh) -> None:
    fh.write(OCC_MAGIC)
    fh.write(struct.pack("<I", vox.resolution))
    fh.write(np.packbits(vox.data.reshape(-1)).tobytes())


def load_occupancy(fh) -> VoxelOccupancy:
    head = fh.read(8)
    if len(head) < 8:
        raise GridFormatError("truncated occupancy file")
    if head[:4] != OCC_MAGIC:
        raise GridFormatError("not an occupancy file (bad magic)")
    (R,) = struct.unpack("<I", head[4:])
    if R not in RESOLUTIONS:
        raise GridFormatError(f"unsupported resolution {R}")
    nbytes = (R**3 + 7) // 8
    body = fh.read(nbytes)
    if len(body) != nbytes:
        raise GridFormatError("truncated occupancy file")
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8))[: R**3]
    return VoxelOccupancy(R, bits.astype(bool).reshape(R, R, R))


def save_occupancy(vox: VoxelOccupancy, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        dump_occupancy(vox, fh)


def read_occupancy(path: str | os.PathLike) -> VoxelOccupancy:
    with open(path, "rb") as fh:
        return load_occupancy(fh)


def occupancy_bytes(vox: VoxelOccupancy) -> bytes:
    buf = io.BytesIO()
    dump_occupancy(vox, buf)
    return buf.getvalue()

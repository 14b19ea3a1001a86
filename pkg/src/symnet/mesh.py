"""Triangle meshes: OBJ I/O, unit-cube normalization, surface sampling, PCA planes."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .transforms import ParameterError, SymPlane


class MeshFormatError(ValueError):
    """Malformed OBJ input."""


class EmptyInputError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ParameterError("vertices must have shape (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ParameterError("faces must have shape (F, 3)")
        if len(f) == 0:
            raise EmptyInputError("mesh has no faces")
        if f.min() < 0 or f.max() >= len(v):
            raise ParameterError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ParameterError("face with repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner positions."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def surface_centroid(self) -> np.ndarray:
        """Area-weighted mean of the face centroids."""
        a = self.face_areas()
        if a.sum() <= 0:
            raise DegenerateInputError("mesh has zero surface area")
        return (a[:, None] * self.triangles.mean(axis=1)).sum(axis=0) / a.sum()

    def face_normals(self) -> np.ndarray:
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm == 0, 1.0, norm)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals."""
        t = self.triangles
        fn = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], fn)
        norm = np.linalg.norm(vn, axis=1, keepdims=True)
        return vn / np.where(norm == 0, 1.0, norm)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.faces)]
        return used.min(axis=0), used.max(axis=0)

    def transformed(self, rot=None, scale: float = 1.0, shift=None) -> "TriMesh":
        v = self.vertices if rot is None else self.vertices @ np.asarray(rot).T
        v = v * scale
        if shift is not None:
            v = v + np.asarray(shift)
        return TriMesh(v, self.faces)


class PointSample(NamedTuple):
    points: np.ndarray  # (N, 3)
    face_index: np.ndarray  # (N,) source face per point

    @property
    def n(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------------
# OBJ


def _parse_index(tok: str, nverts: int, lineno: int) -> int:
    head = tok.split("/")[0]
    try:
        idx = int(head)
    except ValueError:
        raise MeshFormatError(f"line {lineno}: bad face index {tok!r}") from None
    if idx == 0:
        raise MeshFormatError(f"line {lineno}: face index 0 (OBJ indices are 1-based)")
    if idx < 0:
        idx = nverts + idx + 1
    if idx < 1 or idx > nverts:
        raise MeshFormatError(f"line {lineno}: face index {head} out of range")
    return idx - 1


def parse_obj(text: str) -> TriMesh:
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshFormatError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshFormatError(f"line {lineno}: bad vertex coordinate") from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshFormatError(f"line {lineno}: face needs at least 3 vertices")
            idx = [_parse_index(t, len(verts), lineno) for t in parts[1:]]
            if len(set(idx)) != len(idx):
                raise MeshFormatError(f"line {lineno}: face repeats a vertex")
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        # vn, vt, o, g, s, usemtl, ... are ignored
    if not faces:
        raise EmptyInputError("OBJ contains no faces")
    return TriMesh(np.array(verts, dtype=float), np.array(faces, dtype=np.int64))


def load_mesh(path: str | os.PathLike) -> TriMesh:
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return parse_obj(fh.read())


def save_obj(mesh: TriMesh, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


# ---------------------------------------------------------------------------
# normalization & sampling


def unit_cube_transform(mesh: TriMesh) -> tuple[float, np.ndarray]:
    """Uniform scale ``s`` and shift ``t`` so that ``s * v + t`` fits the unit cube.

    The longest bounding-box edge becomes 1 and the box is centered on
    (0.5, 0.5, 0.5).
    """
    lo, hi = mesh.bounds()
    extent = float(np.max(hi - lo))
    if not extent > 0:
        raise DegenerateInputError("mesh has zero extent")
    s = 1.0 / extent
    t = 0.5 - s * (lo + hi) / 2.0
    return s, t


def normalize_unit_cube(mesh: TriMesh) -> TriMesh:
    lo, hi = mesh.bounds()
    s, t = unit_cube_transform(mesh)
    if abs(s - 1.0) < 1e-12 and np.all(np.abs(t) < 1e-12):
        return mesh
    v = mesh.vertices * s + t
    # pin the extremes so a second pass is a fixed point
    span = hi - lo
    longest = span == span.max()
    for ax in np.flatnonzero(longest):
        v[mesh.vertices[:, ax] == lo[ax], ax] = 0.0
        v[mesh.vertices[:, ax] == hi[ax], ax] = 1.0
    return TriMesh(v, mesh.faces)


def sample_surface(mesh: TriMesh, n: int = 1000, seed: int | np.random.Generator = 0) -> PointSample:
    """Draw ``n`` points uniformly by area over the mesh surface."""
    if n < 4:
        raise ParameterError("need at least 4 sample points")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    areas = mesh.face_areas()
    cdf = np.cumsum(areas)
    if cdf[-1] <= 0:
        raise DegenerateInputError("mesh has zero surface area")
    face = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    face = np.minimum(face, len(areas) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = mesh.triangles[face]
    pts = (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]
    lo, hi = mesh.bounds()
    return PointSample(np.clip(pts, lo, hi), face)


# ---------------------------------------------------------------------------
# PCA baseline


class PcaPlanes(NamedTuple):
    planes: tuple[SymPlane, SymPlane, SymPlane]
    eigenvalues: np.ndarray
    degenerate: tuple[bool, bool, bool]

    @property
    def well_defined(self) -> list[SymPlane]:
        return [p for p, bad in zip(self.planes, self.degenerate) if not bad]


def pca_planes(sample: PointSample | np.ndarray, rel_gap: float = 1e-3) -> PcaPlanes:
    """Planes through the centroid orthogonal to the principal axes.

    An eigenvector whose eigenvalue lies within ``rel_gap`` (relative to the
    largest eigenvalue) of another one is flagged as degenerate.
    """
    pts = sample.points if isinstance(sample, PointSample) else np.asarray(sample, dtype=float)
    if len(pts) == 0:
        raise EmptyInputError("empty sample")
    c = pts.mean(axis=0)
    cov = np.cov((pts - c).T, bias=True)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    scale = max(w[0], np.finfo(float).tiny)
    flags = []
    for i in range(3):
        flags.append(any(abs(w[i] - w[j]) / scale < rel_gap for j in range(3) if j != i))
    planes = tuple(SymPlane.through_point(v[:, i], c) for i in range(3))
    return PcaPlanes(planes, w, tuple(flags))


# ---------------------------------------------------------------------------
# exact point-to-surface distance (brute force over all triangles)


def _closest_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest points on triangles (a, b, c) to points ``p``; all (..., 3), broadcast."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("...i,...i->...", ab, ap)
    d2 = np.einsum("...i,...i->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...i,...i->...", ab, bp)
    d4 = np.einsum("...i,...i->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...i,...i->...", ab, cp)
    d6 = np.einsum("...i,...i->...", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        out = a + v[..., None] * ab + w[..., None] * ac  # interior

        # edge regions (checked before vertices so vertices win)
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + t_ab[..., None] * ab, out)
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + t_ac[..., None] * ac, out)
        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        out = np.where(m[..., None], b + t_bc[..., None] * (c - b), out)

    out = np.where(((d1 <= 0) & (d2 <= 0))[..., None], a, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[..., None], b, out)
    out = np.where(((d6 >= 0) & (d5 <= d6))[..., None], c, out)
    return out


def closest_surface_points(mesh: TriMesh, points: np.ndarray, chunk: int = 2_000_000, return_face: bool = False):
    """Exact closest point on the mesh for every query point, and its distance.

    With ``return_face`` the index of the face holding each closest point is
    returned as a third array.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    tri = mesh.triangles
    F = len(tri)
    step = max(1, chunk // max(F, 1))
    best = np.empty_like(pts)
    dist = np.empty(len(pts))
    face = np.empty(len(pts), dtype=np.int64)
    for s in range(0, len(pts), step):
        q = pts[s : s + step, None, :]
        cand = _closest_on_triangles(q, tri[None, :, 0], tri[None, :, 1], tri[None, :, 2])
        d2 = np.einsum("mfi,mfi->mf", cand - q, cand - q)
        k = d2.argmin(axis=1)
        r = np.arange(len(k))
        best[s : s + step] = cand[r, k]
        dist[s : s + step] = np.sqrt(d2[r, k])
        face[s : s + step] = k
    if return_face:
        return best, dist, face
    return best, dist

"""Procedural shapes with analytically known symmetries.

Every family is built centered on the origin in a local frame whose
symmetry planes / axes are known in closed form, then optionally rotated and
finally normalized into the unit cube. Ground truth is pushed through the
same transforms, so it always lives in the shape's normalized frame.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from .mesh import DegenerateInputError, TriMesh, closest_surface_points, sample_surface, save_obj, unit_cube_transform
from .transforms import AxisAngle, ParameterError, SymPlane, reflect, transform_axis, transform_plane

FAMILIES = ("box", "ellipsoid", "cylinder", "cone", "box-union", "prism", "asymmetric-blob")
GT_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class SyntheticShape:
    mesh: TriMesh
    gt_planes: list[SymPlane]
    gt_axes: list[AxisAngle]
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    rotation_seed: int | None = None
    rotation: np.ndarray | None = None  # applied before normalization

    def manifest_entry(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "seed": self.seed,
            "rotation_seed": self.rotation_seed,
            "gt_planes": [p.to_json() for p in self.gt_planes],
            "gt_axes": [a.to_json() for a in self.gt_axes],
        }


# ---------------------------------------------------------------------------
# mesh builders (local frame, centered on the origin)


def _grid_patch(origin, u, v, nu: int, nv: int):
    """Quad patch ``origin + s*u + t*v`` for s, t in [0, 1], split into triangles."""
    s = np.linspace(0.0, 1.0, nu + 1)
    t = np.linspace(0.0, 1.0, nv + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    verts = origin + S[..., None] * u + T[..., None] * v
    idx = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return verts.reshape(-1, 3), faces


def _merge(parts) -> TriMesh:
    verts, faces, off = [], [], 0
    for v, f in parts:
        verts.append(v)
        faces.append(f + off)
        off += len(v)
    return TriMesh(np.concatenate(verts), np.concatenate(faces))


def box_mesh(extents, div: int = 4, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned box with each face split into ``div x div`` quads, wound outward."""
    ex, ey, ez = (float(e) for e in extents)
    X, Y, Z = np.array([ex, 0, 0]), np.array([0, ey, 0]), np.array([0, 0, ez])
    lo = np.asarray(center, dtype=float) - (X + Y + Z) / 2.0
    parts = [
        _grid_patch(lo, Z, Y, div, div),
        _grid_patch(lo + X, Y, Z, div, div),
        _grid_patch(lo, X, Z, div, div),
        _grid_patch(lo + Y, Z, X, div, div),
        _grid_patch(lo, Y, X, div, div),
        _grid_patch(lo + Z, X, Y, div, div),
    ]
    return _merge(parts)


def _revolve(profile_r, profile_z, segments: int, phase: float = 0.0) -> TriMesh:
    """Surface of revolution about z through the profile polyline.

    Profile points with radius 0 collapse to a single pole vertex.
    """
    ang = phase + 2 * math.pi * np.arange(segments) / segments
    verts: list[np.ndarray] = []
    rings: list[np.ndarray | int] = []
    for r, z in zip(profile_r, profile_z):
        if r == 0:
            rings.append(len(verts))
            verts.append(np.array([0.0, 0.0, z]))
        else:
            start = len(verts)
            for a in ang:
                verts.append(np.array([r * math.cos(a), r * math.sin(a), z]))
            rings.append(np.arange(start, start + segments))
    faces = []
    for lo, hi in zip(rings[:-1], rings[1:]):
        for k in range(segments):
            k1 = (k + 1) % segments
            if isinstance(lo, int) and isinstance(hi, int):
                continue
            if isinstance(lo, int):
                faces.append((lo, hi[k1], hi[k]))
            elif isinstance(hi, int):
                faces.append((lo[k], lo[k1], hi))
            else:
                faces.append((lo[k], lo[k1], hi[k1]))
                faces.append((lo[k], hi[k1], hi[k]))
    return TriMesh(np.array(verts), np.array(faces))


def ellipsoid_mesh(semi_axes, n_lat: int = 16, n_lon: int = 32) -> TriMesh:
    a, b, c = semi_axes
    theta = np.linspace(0.0, math.pi, n_lat + 1)
    # unit sphere, then stretched
    r = np.sin(theta)
    r[0] = r[-1] = 0.0
    z = -np.cos(theta)
    sphere = _revolve(r, z, n_lon)
    return TriMesh(sphere.vertices * np.array([a, b, c]), sphere.faces)


def cylinder_mesh(radius: float, height: float, segments: int = 96, rings: int = 4, cap_rings: int = 3) -> TriMesh:
    h = height / 2.0
    rr = [0.0] + [radius * (i + 1) / cap_rings for i in range(cap_rings)]
    zz = [-h] * (cap_rings + 1)
    rr += [radius] * rings
    zz += list(np.linspace(-h, h, rings + 1)[1:])
    rr += [radius * (cap_rings - 1 - i) / cap_rings for i in range(cap_rings)]
    zz += [h] * cap_rings
    # drop the duplicated rim entries created by the two lists meeting
    return _revolve(rr, zz, segments)


def cone_mesh(radius: float, height: float, segments: int = 96, rings: int = 4, cap_rings: int = 3) -> TriMesh:
    """Cone with apex on +z; its centroid-free frame has the base at -height/2."""
    h = height / 2.0
    rr = [0.0] + [radius * (i + 1) / cap_rings for i in range(cap_rings)]
    zz = [-h] * (cap_rings + 1)
    for i in range(1, rings + 1):
        f = i / rings
        rr.append(radius * (1 - f))
        zz.append(-h + f * height)
    return _revolve(rr, zz, segments)


def prism_mesh(n_sides: int, radius: float, height: float, rings: int = 4, cap_rings: int = 3) -> TriMesh:
    """Regular n-gon prism about z; polygon vertices at angles 2*pi*k/n."""
    return cylinder_mesh(radius, height, segments=n_sides, rings=rings, cap_rings=cap_rings)


def box_union_mesh(base, top, offset_x: float, div: int = 4) -> TriMesh:
    """Box ``top`` stacked on box ``base`` along +z and shifted by ``offset_x``."""
    m1 = box_mesh(base, div)
    m2 = box_mesh(top, div, center=(offset_x, 0.0, (base[2] + top[2]) / 2.0))
    return _merge([(m1.vertices, m1.faces), (m2.vertices, m2.faces)])


def blob_mesh(rng: np.random.Generator, n_points: int = 20) -> TriMesh:
    pts = rng.uniform(-0.5, 0.5, size=(n_points, 3))
    hull = ConvexHull(pts)
    used = np.unique(hull.simplices)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(pts[used], remap[hull.simplices])


# ---------------------------------------------------------------------------
# family parameters and ground truth in the local frame

_E = np.eye(3)


def _plane(normal, point=(0.0, 0.0, 0.0)) -> SymPlane:
    return SymPlane.through_point(normal, point)


def random_params(family: str, rng: np.random.Generator) -> dict:
    if family == "box":
        # distinct extents so no extra diagonal symmetry appears
        e = np.sort(rng.uniform(0.35, 1.0, 3))[::-1]
        while min(e[0] - e[1], e[1] - e[2]) < 0.12:
            e = np.sort(rng.uniform(0.35, 1.0, 3))[::-1]
        return {"extents": [float(x) for x in rng.permutation(e)]}
    if family == "ellipsoid":
        e = np.sort(rng.uniform(0.2, 0.5, 3))[::-1]
        while min(e[0] - e[1], e[1] - e[2]) < 0.06:
            e = np.sort(rng.uniform(0.2, 0.5, 3))[::-1]
        return {"semi_axes": [float(x) for x in e]}
    if family == "cylinder":
        return {"radius": float(rng.uniform(0.2, 0.45)), "height": float(rng.uniform(0.5, 1.0))}
    if family == "cone":
        return {"radius": float(rng.uniform(0.25, 0.45)), "height": float(rng.uniform(0.5, 1.0))}
    if family == "prism":
        return {
            "n_sides": int(rng.choice([3, 4, 5, 6])),
            "radius": float(rng.uniform(0.25, 0.45)),
            "height": float(rng.uniform(0.4, 1.0)),
        }
    if family == "box-union":
        base = [float(rng.uniform(0.7, 1.0)), float(rng.uniform(0.4, 0.6)), float(rng.uniform(0.25, 0.4))]
        top = [float(base[0] * rng.uniform(0.25, 0.5)), float(base[1] * rng.uniform(0.5, 0.9)), float(rng.uniform(0.3, 0.5))]
        offset = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.15, (base[0] - top[0]) / 2.0))
        return {"base": base, "top": top, "offset_x": offset}
    if family == "asymmetric-blob":
        return {"n_points": 20, "blob_seed": int(rng.integers(2**31))}
    raise ParameterError(f"unknown family {family!r}")


def _build_local(family: str, params: dict) -> tuple[TriMesh, list[SymPlane], list[AxisAngle]]:
    z_axis = AxisAngle((0.0, 0.0, 1.0), 0.0, (0.0, 0.0, 0.0))
    if family == "box":
        ext = params["extents"]
        if min(ext) <= 0:
            raise ParameterError("box extents must be positive")
        return box_mesh(ext, params.get("div", 4)), [_plane(_E[i]) for i in range(3)], []
    if family == "ellipsoid":
        sa = params["semi_axes"]
        if min(sa) <= 0:
            raise ParameterError("semi-axes must be positive")
        return ellipsoid_mesh(sa), [_plane(_E[i]) for i in range(3)], []
    if family == "cylinder":
        r, h = params["radius"], params["height"]
        if r <= 0 or h <= 0:
            raise ParameterError("cylinder radius/height must be positive")
        return cylinder_mesh(r, h), [_plane(_E[2])], [z_axis]
    if family == "cone":
        r, h = params["radius"], params["height"]
        if r <= 0 or h <= 0:
            raise ParameterError("cone radius/height must be positive")
        return cone_mesh(r, h), [], [z_axis]
    if family == "prism":
        n, r, h = int(params["n_sides"]), params["radius"], params["height"]
        if n < 3 or r <= 0 or h <= 0:
            raise ParameterError("invalid prism parameters")
        planes = [_plane(_E[2])]
        for k in range(n):
            # mirror lines of a regular n-gon with a vertex at angle 0
            a = math.pi * k / n
            planes.append(_plane((-math.sin(a), math.cos(a), 0.0)))
        return prism_mesh(n, r, h), planes, []
    if family == "box-union":
        base, top, off = params["base"], params["top"], float(params["offset_x"])
        if min(base) <= 0 or min(top) <= 0:
            raise ParameterError("box-union extents must be positive")
        mesh = box_union_mesh(base, top, off)
        planes = [_plane(_E[1])]
        if off == 0.0:
            planes.insert(0, _plane(_E[0]))
        return mesh, planes, []
    if family == "asymmetric-blob":
        rng = np.random.default_rng(params["blob_seed"])
        return blob_mesh(rng, params.get("n_points", 20)), [], []
    raise ParameterError(f"unknown family {family!r}")


def _finish(mesh, planes, axes, rot) -> tuple[TriMesh, list[SymPlane], list[AxisAngle]]:
    """Rotate (about the origin) then normalize into the unit cube, carrying gt along."""
    if rot is not None:
        mesh = mesh.transformed(rot)
        planes = [transform_plane(p, rot) for p in planes]
        axes = [transform_axis(a, rot) for a in axes]
    s, t = unit_cube_transform(mesh)
    mesh = mesh.transformed(None, s, t)
    planes = [transform_plane(p, None, s, t) for p in planes]
    axes = [transform_axis(a, None, s, t) for a in axes]
    return mesh, planes, axes


def generate(family: str, params: dict | None = None, seed: int = 0, rotation_seed: int | None = None) -> SyntheticShape:
    """Build a shape of ``family``; ``params`` default to a seeded random draw.

    With ``rotation_seed`` set, a uniformly random rotation is applied before
    normalization.
    """
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}; choose from {FAMILIES}")
    if params is None:
        params = random_params(family, np.random.default_rng(seed))
    mesh, planes, axes = _build_local(family, params)
    rot = None
    if rotation_seed is not None:
        rot = Rotation.random(random_state=rotation_seed).as_matrix()
    mesh, planes, axes = _finish(mesh, planes, axes, rot)
    return SyntheticShape(mesh, planes, axes, family, dict(params), seed, rotation_seed, rot)


def augment_rotate(shape: SyntheticShape, seed: int) -> SyntheticShape:
    """Apply a uniform random rotation about the cube center and renormalize."""
    rot = Rotation.random(random_state=seed).as_matrix()
    c = np.full(3, 0.5)
    mesh = shape.mesh.transformed(rot, 1.0, c - rot @ c)
    planes = [transform_plane(p, rot, 1.0, c - rot @ c) for p in shape.gt_planes]
    axes = [transform_axis(a, rot, 1.0, c - rot @ c) for a in shape.gt_axes]
    mesh, planes, axes = _finish(mesh, planes, axes, None)
    total = rot if shape.rotation is None else rot @ shape.rotation
    return replace(shape, mesh=mesh, gt_planes=planes, gt_axes=axes, rotation=total, rotation_seed=seed)


# ---------------------------------------------------------------------------
# perturbations


def perturb_noise(shape: SyntheticShape, sigma: float, seed: int) -> SyntheticShape:
    """Displace each vertex along its normal by N(0, sigma^2)."""
    if sigma < 0:
        raise ParameterError("sigma must be non-negative")
    if sigma == 0:
        return shape
    mesh = shape.mesh
    rng = np.random.default_rng(seed)
    # welded positions share one displacement so seams stay closed
    uniq, inv = np.unique(mesh.vertices, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    welded = TriMesh(uniq, inv[mesh.faces])
    normals = welded.vertex_normals()
    disp = rng.normal(0.0, sigma, size=len(uniq))
    moved = uniq + disp[:, None] * normals
    return replace(shape, mesh=TriMesh(moved[inv], mesh.faces))


def perturb_remove_sphere(shape: SyntheticShape, center, radius: float) -> SyntheticShape:
    """Delete faces whose centroid lies inside the sphere."""
    mesh = shape.mesh
    cent = mesh.triangles.mean(axis=1)
    keep = np.linalg.norm(cent - np.asarray(center), axis=1) > radius
    if not keep.any():
        raise DegenerateInputError("sphere removal deleted every face")
    return replace(shape, mesh=TriMesh(mesh.vertices, mesh.faces[keep]))


def random_sphere_removal(shape: SyntheticShape, seed: int, max_fraction: float = 0.15) -> SyntheticShape:
    """Remove a random sphere of surface, shrinking it until at most ``max_fraction`` of faces go."""
    rng = np.random.default_rng(seed)
    mesh = shape.mesh
    cent = mesh.triangles.mean(axis=1)
    center = cent[rng.integers(len(cent))]
    radius = float(rng.uniform(0.1, 0.3))
    dist = np.linalg.norm(cent - center, axis=1)
    while np.mean(dist <= radius) > max_fraction:
        radius *= 0.9
    return perturb_remove_sphere(shape, center, radius)


def perturb(shape: SyntheticShape, kind: str, seed: int = 0, **kw) -> SyntheticShape:
    if kind == "gaussian-noise":
        return perturb_noise(shape, kw.get("sigma", 0.01), seed)
    if kind == "sphere-removal":
        if "center" in kw:
            return perturb_remove_sphere(shape, kw["center"], kw["radius"])
        return random_sphere_removal(shape, seed, kw.get("max_fraction", 0.15))
    raise ParameterError(f"unknown perturbation {kind!r}")


# ---------------------------------------------------------------------------
# ground-truth verification


def exact_plane_sde(mesh: TriMesh, plane: SymPlane, points: np.ndarray) -> float:
    """Mean exact distance from reflected points to the mesh surface."""
    return float(closest_surface_points(mesh, reflect(plane, points))[1].mean())


def verify_ground_truth(shape: SyntheticShape, n: int = 500, seed: int = 0) -> list[float]:
    """Exact reflected-sample errors of every gt plane (each should be < 1e-6)."""
    pts = sample_surface(shape.mesh, n, seed).points
    return [exact_plane_sde(shape.mesh, p, pts) for p in shape.gt_planes]


# ---------------------------------------------------------------------------
# manifests


def generate_set(families, count: int, seed: int, rotate: bool = True) -> list[SyntheticShape]:
    """``count`` shapes cycling through ``families``, each with its own derived seed."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(count)
    shapes = []
    for i, child in enumerate(children):
        fam = families[i % len(families)]
        s_shape, s_rot = (int(x) for x in child.generate_state(2))
        shapes.append(generate(fam, None, s_shape, s_rot if rotate else None))
    return shapes


def write_manifest(shapes, path: str | os.PathLike, meta: dict | None = None) -> None:
    doc = {"version": 1, "meta": meta or {}, "shapes": [s.manifest_entry() for s in shapes]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def read_manifest(path: str | os.PathLike) -> list[SyntheticShape]:
    doc = json.loads(Path(path).read_text())
    return [generate(e["family"], e["params"], e["seed"], e["rotation_seed"]) for e in doc["shapes"]]


def export_cache(shapes, root: str | os.PathLike, R: int = 32, meta: dict | None = None) -> None:
    """Write ``manifest.json``, ``shapes/NNNN.obj`` and ``grids/NNNN.prsv`` under ``root``."""
    from .voxel import save_occupancy, voxelize

    root = Path(root)
    (root / "shapes").mkdir(parents=True, exist_ok=True)
    (root / "grids").mkdir(parents=True, exist_ok=True)
    write_manifest(shapes, root / "manifest.json", meta)
    for i, s in enumerate(shapes):
        save_obj(s.mesh, root / "shapes" / f"{i:04d}.obj")
        save_occupancy(voxelize(s.mesh, R), root / "grids" / f"{i:04d}.prsv")

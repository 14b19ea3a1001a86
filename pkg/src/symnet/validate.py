"""Post-processing of raw candidates: duplicate removal, SDE threshold, rotation sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .loss import SDE_THRESHOLD, SymCandidates, quat_matrices, sde_from_distances, transformed_points
from .mesh import PointSample
from .transforms import AxisAngle, RotQuat, SymPlane, canonicalize_plane, dihedral_angle, quat_to_axis_angle
from .voxel import ClosestPointGrid, approx_nearest

DEDUP_ANGLE = math.pi / 6
SWEEP_STEP_DEG = 1


@dataclass(frozen=True)
class Rejection:
    kind: str  # "plane" | "axis"
    index: int
    reason: str  # "duplicate" | "over-threshold" | "sweep-failed"
    sde: float
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"kind": self.kind, "index": self.index, "reason": self.reason, "sde": self.sde, **self.detail}


@dataclass
class DetectionResult:
    planes: list[SymPlane] = field(default_factory=list)
    plane_sde: list[float] = field(default_factory=list)
    axes: list[AxisAngle] = field(default_factory=list)
    axis_sde: list[float] = field(default_factory=list)
    axis_sweep_max: list[float] = field(default_factory=list)
    rejected: list[Rejection] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "planes": [{**p.to_json(), "sde": s} for p, s in zip(self.planes, self.plane_sde)],
            "axes": [
                {**a.to_json(), "sde": s, "sweep_max_sde": m}
                for a, s, m in zip(self.axes, self.axis_sde, self.axis_sweep_max)
            ],
            "rejected": [r.to_json() for r in self.rejected],
        }


@dataclass(frozen=True)
class SweepResult:
    passed: bool
    max_sde: float
    sde: np.ndarray  # per angle


def _points(sample) -> np.ndarray:
    return sample.points if isinstance(sample, PointSample) else np.asarray(sample, dtype=float)


def dedup(directions, sde, angle: float = DEDUP_ANGLE) -> tuple[list[int], list[tuple[int, int]]]:
    """Greedy duplicate removal over undirected directions.

    Candidates are visited in ascending SDE; each one is dropped if it lies
    within ``angle`` of an already kept candidate. Returns the kept indices
    (in visiting order) and ``(dropped, kept_by)`` pairs.
    """
    order = sorted(range(len(sde)), key=lambda i: (sde[i], i))
    kept: list[int] = []
    dropped: list[tuple[int, int]] = []
    for i in order:
        hit = next((k for k in kept if dihedral_angle(directions[i], directions[k]) < angle), None)
        if hit is None:
            kept.append(i)
        else:
            dropped.append((i, hit))
    return kept, dropped


def threshold_filter(indices, sde, threshold: float = SDE_THRESHOLD) -> tuple[list[int], list[int]]:
    """Split into (kept, removed) by ``sde <= threshold``."""
    keep = [i for i in indices if sde[i] <= threshold]
    drop = [i for i in indices if not sde[i] <= threshold]
    return keep, drop


def axis_rotations(axis, angles) -> np.ndarray:
    """(K, 3, 3) right-handed rotations about unit ``axis`` by ``angles`` (radians)."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    half = np.asarray(angles, dtype=float) / 2.0
    quats = np.concatenate([np.cos(half)[:, None], np.sin(half)[:, None] * a], axis=1)
    return quat_matrices(quats)


def rotation_sweep(
    axis: AxisAngle,
    sample,
    grid: ClosestPointGrid,
    threshold: float = SDE_THRESHOLD,
    step_deg: int = SWEEP_STEP_DEG,
    chunk: int = 40,
    exhaustive: bool = False,
) -> SweepResult:
    """SDE of rotating about ``axis`` by every ``step_deg`` in (0, 360); pass iff all <= threshold.

    Angles are evaluated in chunks, half-turn first, and the sweep stops at the
    first chunk containing a failing angle (``sde`` then covers only the
    evaluated angles, in degree order). ``exhaustive`` disables the early exit.
    """
    pts = _points(sample)
    c = np.asarray(axis.anchor, dtype=float)
    rel = pts - c
    degs = np.arange(step_deg, 360, step_deg)
    # spread the evaluation order so that a failing angle tends to show up early
    order = np.argsort((degs * 37) % 360 - (degs == 180) * 360, kind="stable")
    done = np.zeros(len(degs), bool)
    sde = np.full(len(degs), np.nan)
    for s in range(0, len(order), chunk):
        idx = order[s : s + chunk]
        rots = axis_rotations(axis.axis, np.deg2rad(degs[idx]))
        moved = np.matmul(rel, rots.transpose(0, 2, 1)) + c
        dist = np.linalg.norm(moved - approx_nearest(grid, moved), axis=-1)
        sde[idx] = sde_from_distances(dist)
        done[idx] = True
        if not exhaustive and np.any(sde[idx] > threshold):
            break
    sde = sde[done]
    mx = float(sde.max())
    return SweepResult(bool(done.all() and mx <= threshold), mx, sde)


def candidate_sde(planes: np.ndarray, quats: np.ndarray, sample, grid: ClosestPointGrid) -> tuple[np.ndarray, np.ndarray]:
    pts = _points(sample)
    tp = transformed_points(np.reshape(planes, (-1, 4)), np.reshape(quats, (-1, 4)), pts, grid.center)
    sde = sde_from_distances(np.linalg.norm(tp - approx_nearest(grid, tp), axis=-1))
    return sde[: len(planes)], sde[len(planes) :]


def validate_candidates(
    planes: np.ndarray,
    quats: np.ndarray,
    sample,
    grid: ClosestPointGrid,
    threshold: float = SDE_THRESHOLD,
    anchor=None,
) -> DetectionResult:
    """Validate any number of plane rows (a, b, c, d) and quaternion rows (w, x, y, z)."""
    planes = np.asarray(planes, dtype=float).reshape(-1, 4)
    quats = np.asarray(quats, dtype=float).reshape(-1, 4)
    quats = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    p_sde, q_sde = candidate_sde(planes, quats, sample, grid)
    res = DetectionResult()
    if anchor is None:
        anchor = grid.center

    kept, dropped = dedup(planes[:, :3], p_sde)
    for i, k in dropped:
        res.rejected.append(Rejection("plane", i, "duplicate", float(p_sde[i]), {"duplicate_of": k}))
    kept, over = threshold_filter(kept, p_sde, threshold)
    for i in over:
        res.rejected.append(Rejection("plane", i, "over-threshold", float(p_sde[i])))
    for i in kept:
        res.planes.append(canonicalize_plane(SymPlane.from_array(planes[i])))
        res.plane_sde.append(float(p_sde[i]))

    dirs = []
    aas = []
    for q in quats:
        aa = quat_to_axis_angle(RotQuat(tuple(q)), anchor)
        aas.append(aa)
        dirs.append(aa.axis)
    kept, dropped = dedup(dirs, q_sde)
    for i, k in dropped:
        res.rejected.append(Rejection("axis", i, "duplicate", float(q_sde[i]), {"duplicate_of": k}))
    kept, over = threshold_filter(kept, q_sde, threshold)
    for i in over:
        res.rejected.append(Rejection("axis", i, "over-threshold", float(q_sde[i])))
    for i in kept:
        sweep = rotation_sweep(aas[i], sample, grid, threshold)
        if not sweep.passed:
            res.rejected.append(Rejection("axis", i, "sweep-failed", float(q_sde[i]), {"sweep_max_sde": sweep.max_sde}))
            continue
        res.axes.append(aas[i])
        res.axis_sde.append(float(q_sde[i]))
        res.axis_sweep_max.append(sweep.max_sde)
    return res


def validate_all(raw: SymCandidates, sample, grid: ClosestPointGrid, threshold: float = SDE_THRESHOLD) -> DetectionResult:
    return validate_candidates(raw.planes, raw.quats, sample, grid, threshold)


def result_as_candidates(res: DetectionResult) -> tuple[np.ndarray, np.ndarray]:
    """Plane and quaternion rows of a result, e.g. to re-validate it."""
    planes = np.array([p.as_array() for p in res.planes]).reshape(-1, 4)
    quats = np.array([RotQuat.from_axis_angle(a.axis, a.angle).as_array() for a in res.axes]).reshape(-1, 4)
    return planes, quats

"""Ground-truth error (GTE) and symmetry distance error (SDE) for evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .loss import SymCandidates, symmetry_distance
from .transforms import AxisAngle, ParameterError, SymPlane, canonicalize_plane, dihedral_angle
from .validate import DetectionResult

RECALL_MAX_GTE = 0.05
MAX_PLANES = 3


def gte(pred: SymPlane, gt: SymPlane) -> float:
    """Squared distance between unit-normal plane vectors, signs aligned to gt."""
    p = canonicalize_plane(pred).as_array()
    g = canonicalize_plane(gt).as_array()
    if p[:3] @ g[:3] < 0:
        p = -p
    return float(np.sum((p - g) ** 2))


def nearest_symmetry_gte(pred: SymPlane, gt_planes: list[SymPlane], revolution_axes: list[AxisAngle] = ()) -> float:
    """GTE of ``pred`` to the closest true symmetry plane.

    A surface of revolution is mirror-symmetric in every plane containing its
    axis; that pencil is searched in closed form (normal projected
    perpendicular to the axis, plane through the anchor) alongside the listed
    planes. ``inf`` when the shape has no symmetry plane at all.
    """
    best = min((gte(pred, g) for g in gt_planes), default=math.inf)
    n = np.asarray(pred.n, dtype=float)
    for ax in revolution_axes:
        a = np.asarray(ax.axis, dtype=float)
        m = n - (n @ a) * a
        if np.linalg.norm(m) < 1e-12:
            # pred is perpendicular to the axis: any pencil plane is 90 degrees away
            m = np.cross(a, [1.0, 0.0, 0.0] if abs(a[0]) < 0.9 else [0.0, 1.0, 0.0])
        m /= np.linalg.norm(m)
        best = min(best, gte(pred, SymPlane(tuple(m), -float(m @ np.asarray(ax.anchor)))))
    return best


@dataclass
class GtMatch:
    gt_index: int
    pred_index: int | None
    gte: float | None

    @property
    def matched(self) -> bool:
        return self.pred_index is not None


@dataclass
class MatchReport:
    matches: list[GtMatch] = field(default_factory=list)
    max_gte: float = RECALL_MAX_GTE

    @property
    def matched(self) -> list[GtMatch]:
        return [m for m in self.matches if m.matched]

    @property
    def misses(self) -> list[GtMatch]:
        return [m for m in self.matches if not m.matched]

    @property
    def mean_gte(self) -> float:
        """Mean GTE over matched gt planes only (NaN when nothing matched)."""
        vals = [m.gte for m in self.matched]
        return float(np.mean(vals)) if vals else math.nan

    def recalled(self) -> int:
        """Matched gt planes whose GTE is within ``max_gte``."""
        return sum(1 for m in self.matched if m.gte <= self.max_gte)

    def recall_denominator(self) -> int:
        return min(len(self.matches), MAX_PLANES)

    @property
    def recall(self) -> float:
        den = self.recall_denominator()
        return self.recalled() / den if den else math.nan


def match_gte(pred: DetectionResult | list[SymPlane], gt: list[SymPlane], max_gte: float = RECALL_MAX_GTE) -> MatchReport:
    """Greedy min-GTE assignment; each prediction serves at most one gt plane.

    Gt planes left without a prediction are reported as misses (no GTE).
    """
    planes = pred.planes if isinstance(pred, DetectionResult) else list(pred)
    pairs = sorted(
        ((gte(p, g), gi, pi) for gi, g in enumerate(gt) for pi, p in enumerate(planes)),
        key=lambda t: (t[0], t[1], t[2]),
    )
    used_g: dict[int, tuple[int, float]] = {}
    used_p: set[int] = set()
    for e, gi, pi in pairs:
        if gi in used_g or pi in used_p:
            continue
        used_g[gi] = (pi, e)
        used_p.add(pi)
    rep = MatchReport(max_gte=max_gte)
    for gi in range(len(gt)):
        if gi in used_g:
            rep.matches.append(GtMatch(gi, *used_g[gi]))
        else:
            rep.matches.append(GtMatch(gi, None, None))
    return rep


def axis_angle_error(pred: AxisAngle, gt: AxisAngle) -> float:
    """Angle (radians, in [0, pi/2]) between the axis lines."""
    return dihedral_angle(pred.axis, gt.axis)


def sde_eval(cand: SymCandidates, sample, grid) -> np.ndarray:
    """Per-candidate SDE (3 planes then 3 axes), as reported by the loss."""
    if not isinstance(cand, SymCandidates):
        raise ParameterError("expected SymCandidates")
    return np.array(symmetry_distance(cand, sample, grid).per_candidate_sde)

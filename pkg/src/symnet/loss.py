"""Symmetry distance loss, orthogonality regularizer and their analytic gradients.

Candidates are three planes ``(a, b, c, d)`` and three quaternions
``(w, x, y, z)`` stored as ``(3, 4)`` arrays. Reflections divide by
``|n|^2`` and rotations use the normalized quaternion, so the loss is
invariant to rescaling either parameter vector. Rotations act about the
center stored with the closest-point grid, normally the shape's surface
centroid.

Distances to the shape are taken against the closest-point grid, whose
lookup is piecewise constant; gradients therefore flow only through the
transformed points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import PointSample
from .transforms import CUBE_CENTER, ParameterError, RotQuat, SymPlane
from .voxel import ClosestPointGrid, approx_nearest

DEFAULT_WR = 25.0
SDE_THRESHOLD = 4e-4

INIT_PLANES = np.array(
    [
        [1.0, 0.0, 0.0, -0.5],
        [0.0, 1.0, 0.0, -0.5],
        [0.0, 0.0, 1.0, -0.5],
    ]
)
# angle pi about x, y, z
INIT_QUATS = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)


@dataclass(frozen=True, eq=False)
class SymCandidates:
    planes: np.ndarray  # (3, 4)
    quats: np.ndarray  # (3, 4), unit rows

    def __post_init__(self):
        p = np.array(self.planes, dtype=float)
        q = np.array(self.quats, dtype=float)
        if p.shape != (3, 4) or q.shape != (3, 4):
            raise ParameterError(f"expected 3 planes and 3 quaternions, got {p.shape} and {q.shape}")
        qn = np.linalg.norm(q, axis=1, keepdims=True)
        if np.any(qn == 0):
            raise ParameterError("zero quaternion")
        object.__setattr__(self, "planes", p)
        object.__setattr__(self, "quats", q / qn)

    @classmethod
    def initial(cls) -> "SymCandidates":
        return cls(INIT_PLANES, INIT_QUATS)

    def plane(self, i: int) -> SymPlane:
        return SymPlane.from_array(self.planes[i])

    def quat(self, j: int) -> RotQuat:
        return RotQuat(tuple(self.quats[j]))


@dataclass(frozen=True)
class LossBreakdown:
    l_sd: float
    l_r: float
    total: float
    per_candidate_sde: tuple  # 6 values: planes then axes


@dataclass(frozen=True, eq=False)
class LossGradients:
    d_planes: np.ndarray  # (3, 4)
    d_quats: np.ndarray  # (3, 4)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.d_planes.ravel(), self.d_quats.ravel()])


def _points(sample) -> np.ndarray:
    return sample.points if isinstance(sample, PointSample) else np.asarray(sample, dtype=float)


def _check_planes(planes: np.ndarray) -> np.ndarray:
    nn = np.einsum("ij,ij->i", planes[:, :3], planes[:, :3])
    if np.any(nn == 0):
        raise ParameterError("plane normal is zero")
    return nn


def quat_matrices(quats: np.ndarray) -> np.ndarray:
    """(K, 3, 3) rotation matrices of the normalized rows of ``quats``."""
    q = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


def transformed_points(planes: np.ndarray, quats: np.ndarray, pts: np.ndarray, center=CUBE_CENTER) -> np.ndarray:
    """(P + Q, N, 3) images of ``pts`` under each plane reflection then each rotation."""
    out = []
    if len(planes):
        nn = _check_planes(planes)
        n = planes[:, :3]
        s = pts @ n.T + planes[:, 3]  # (N, P)
        refl = pts[None] - (2.0 * s.T / nn[:, None])[..., None] * n[:, None, :]
        out.append(refl)
    if len(quats):
        rot = quat_matrices(quats)
        out.append(np.einsum("kij,nj->kni", rot, pts - center) + center)
    return np.concatenate(out, axis=0)


def point_distances(cand: SymCandidates, sample, grid: ClosestPointGrid) -> np.ndarray:
    """(6, N) grid-approximated distances of every transformed sample point."""
    pts = _points(sample)
    tp = transformed_points(cand.planes, cand.quats, pts, grid.center)
    return np.linalg.norm(tp - approx_nearest(grid, tp), axis=-1)


def sde_from_distances(dist: np.ndarray) -> np.ndarray:
    """Per-candidate symmetry distance error: mean squared distance per point."""
    return np.mean(dist * dist, axis=-1)


def symmetry_distance(cand: SymCandidates, sample, grid: ClosestPointGrid) -> LossBreakdown:
    if not isinstance(cand, SymCandidates):
        raise ParameterError("expected SymCandidates")
    dist = point_distances(cand, sample, grid)
    l_sd = float(dist.sum())
    return LossBreakdown(l_sd, 0.0, l_sd, tuple(float(x) for x in sde_from_distances(dist)))


def _unit_rows(m: np.ndarray, eps: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(m, axis=1)
    if eps == 0.0 and np.any(norm == 0):
        raise ParameterError("zero direction in regularizer")
    norm = np.maximum(norm, eps)
    return m / norm[:, None], norm


def _frobenius_ortho(m: np.ndarray) -> tuple[float, np.ndarray]:
    """``||M M^T - I||_F^2`` and its gradient with respect to ``M``."""
    a = m @ m.T - np.eye(len(m))
    return float(np.sum(a * a)), 4.0 * a @ m


def regularization(cand: SymCandidates) -> float:
    return _regularization_and_grad(cand.planes, cand.quats)[0]


def _regularization_and_grad(planes: np.ndarray, quats: np.ndarray):
    m1, n1 = _unit_rows(planes[:, :3])
    m2, n2 = _unit_rows(quats[:, 1:], eps=1e-12)
    la, ga = _frobenius_ortho(m1)
    lb, gb = _frobenius_ortho(m2)
    # back through row normalization: d(v/|v|)/dv = (I - u u^T) / |v|
    d_planes = np.zeros_like(planes)
    d_planes[:, :3] = (ga - np.einsum("ij,ij->i", ga, m1)[:, None] * m1) / n1[:, None]
    d_quats = np.zeros_like(quats)
    d_quats[:, 1:] = (gb - np.einsum("ij,ij->i", gb, m2)[:, None] * m2) / n2[:, None]
    return la + lb, d_planes, d_quats


def total_loss(cand: SymCandidates, sample, grid: ClosestPointGrid, w_r: float = DEFAULT_WR) -> LossBreakdown:
    sd = symmetry_distance(cand, sample, grid)
    l_r = regularization(cand)
    return LossBreakdown(sd.l_sd, l_r, sd.l_sd + w_r * l_r, sd.per_candidate_sde)


# ---------------------------------------------------------------------------
# gradients


def _drot_dq(q: np.ndarray) -> np.ndarray:
    """(4, 3, 3): derivative of the rotation-matrix formula w.r.t. (w, x, y, z)."""
    w, x, y, z = q
    return 2.0 * np.array(
        [
            [[0, -z, y], [z, 0, -x], [-y, x, 0]],
            [[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]],
            [[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]],
            [[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]],
        ]
    )


def sd_gradients(planes: np.ndarray, quats: np.ndarray, pts: np.ndarray, grid: ClosestPointGrid, center=None):
    """Loss value, distances and gradients of ``L_sd`` w.r.t. raw plane and quaternion rows.

    ``quats`` need not be unit length; the loss only sees ``u / |u|`` and the
    returned quaternion gradient is tangent to the sphere at ``u``.
    """
    nn = _check_planes(planes)
    if center is None:
        center = grid.center
    tp = transformed_points(planes, quats, pts, center)
    diff = tp - approx_nearest(grid, tp)
    dist = np.linalg.norm(diff, axis=-1)
    g = diff / np.where(dist > 0, dist, 1.0)[..., None]  # dD/dq', zero where D == 0
    P = len(planes)

    # reflection q' = q - 2 s n / m, s = q.n + d, m = n.n
    n = planes[:, :3]
    gp = g[:P]
    s = pts @ n.T + planes[:, 3]  # (N, P)
    gn = np.einsum("pki,pi->pk", gp, n)  # (P, N)
    d_planes = np.empty_like(planes)
    d_planes[:, 3] = -2.0 * gn.sum(axis=1) / nn
    d_planes[:, :3] = -2.0 * (
        np.einsum("pk,ki->pi", gn, pts) / nn[:, None]
        + np.einsum("kp,pki->pi", s, gp) / nn[:, None]
        - 2.0 * (np.einsum("kp,pk->p", s, gn) / nn**2)[:, None] * n
    )

    # rotation q' = c + R(p) (q - c), p = u / |u|
    d_quats = np.empty_like(quats)
    rel = pts - center
    unorm = np.linalg.norm(quats, axis=1)
    for j, u in enumerate(quats):
        p = u / unorm[j]
        G = g[P + j].T @ rel  # dL/dR
        dp = np.einsum("aij,ij->a", _drot_dq(p), G)
        d_quats[j] = (dp - (dp @ p) * p) / unorm[j]
    return float(dist.sum()), dist, d_planes, d_quats


def loss_gradients(cand: SymCandidates, sample, grid: ClosestPointGrid, w_r: float = DEFAULT_WR) -> LossGradients:
    return loss_and_gradients(cand.planes, cand.quats, _points(sample), grid, w_r)[1]


def loss_and_gradients(planes, quats, pts, grid: ClosestPointGrid, w_r: float = DEFAULT_WR):
    """``(LossBreakdown, LossGradients)`` for raw parameter rows."""
    planes = np.asarray(planes, dtype=float)
    quats = np.asarray(quats, dtype=float)
    if planes.shape != (3, 4) or quats.shape != (3, 4):
        raise ParameterError("expected 3 planes and 3 quaternions")
    l_sd, dist, gp, gq = sd_gradients(planes, quats, pts, grid, grid.center)
    l_r, rp, rq = _regularization_and_grad(planes, quats)
    breakdown = LossBreakdown(l_sd, l_r, l_sd + w_r * l_r, tuple(float(x) for x in sde_from_distances(dist)))
    grads = LossGradients(gp + w_r * rp, gq + w_r * rq)
    for arr in (grads.d_planes, grads.d_quats):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite loss gradient")
    return breakdown, grads

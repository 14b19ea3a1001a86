"""Per-shape optimization of the 3 + 3 candidates without the network.

Runs Adam directly on plane and quaternion parameters, starting from the same
canonical candidates the network emits before training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .loss import DEFAULT_WR, INIT_PLANES, INIT_QUATS, LossBreakdown, SymCandidates, loss_and_gradients
from .mesh import PointSample, TriMesh, closest_surface_points, pca_planes
from .transforms import ParameterError, SymPlane, canonicalize_plane
from .voxel import ClosestPointGrid


@dataclass
class DirectConfig:
    steps: int = 500
    lr: float = 0.01
    w_r: float = DEFAULT_WR
    seed: int = 0
    use_pca: bool = True


@dataclass
class OptResult:
    candidates: SymCandidates
    breakdown: LossBreakdown
    trace: list[LossBreakdown] = field(repr=False, default_factory=list)
    best_trace: list[float] = field(repr=False, default_factory=list)
    init: str = "canonical"

    def steps_to_converge(self, rel: float = 0.01) -> int:
        """First step whose best-so-far total is within ``rel`` of the final best."""
        best = np.asarray(self.best_trace)
        final = best[-1]
        return int(np.argmax(best <= final + rel * abs(final))) + 1


def _points(sample) -> np.ndarray:
    return sample.points if isinstance(sample, PointSample) else np.asarray(sample, dtype=float)


def optimize_candidates(
    sample,
    grid: ClosestPointGrid,
    w_r: float = DEFAULT_WR,
    steps: int = 500,
    lr: float = 0.01,
    seed: int = 0,
    init: SymCandidates | None = None,
    jitter: float = 0.0,
) -> OptResult:
    """Adam on the candidate parameters; returns the best candidates seen.

    Quaternions are renormalized after every step. Plane vectors are rescaled
    to unit normals as well, which leaves the loss unchanged and keeps the
    step size meaningful. ``jitter`` adds seeded Gaussian noise to the start.
    """
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    pts = _points(sample)
    start = init if init is not None else SymCandidates(INIT_PLANES, INIT_QUATS)
    planes = start.planes.copy()
    quats = start.quats.copy()
    if jitter > 0:
        rng = np.random.default_rng(seed)
        planes += rng.normal(0.0, jitter, planes.shape)
        quats += rng.normal(0.0, jitter, quats.shape)
    planes /= np.linalg.norm(planes[:, :3], axis=1, keepdims=True)
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)

    b1, b2, eps = 0.9, 0.999, 1e-8
    m = np.zeros((2, 3, 4))
    v = np.zeros((2, 3, 4))
    trace: list[LossBreakdown] = []
    best_trace: list[float] = []
    best = None
    for t in range(1, steps + 1):
        br, gr = loss_and_gradients(planes, quats, pts, grid, w_r)
        trace.append(br)
        if best is None or br.total < best[0].total:
            best = (br, planes.copy(), quats.copy())
        best_trace.append(best[0].total)
        g = np.stack([gr.d_planes, gr.d_quats])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        step = lr / (1 - b1**t) * m / (np.sqrt(v / (1 - b2**t)) + eps)
        planes = planes - step[0]
        quats = quats - step[1]
        planes /= np.linalg.norm(planes[:, :3], axis=1, keepdims=True)
        quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    # the final iterate is evaluated too
    br, _ = loss_and_gradients(planes, quats, pts, grid, w_r)
    if br.total < best[0].total:
        best = (br, planes.copy(), quats.copy())
    trace.append(br)
    best_trace.append(best[0].total)
    return OptResult(SymCandidates(best[1], best[2]), best[0], trace, best_trace)


def pca_init(sample) -> SymCandidates:
    """Candidates aligned with the principal axes: planes through the centroid, half-turns."""
    pca = pca_planes(sample)
    planes = np.array([p.as_array() for p in pca.planes])
    quats = np.array([[0.0, *p.normal] for p in pca.planes])
    return SymCandidates(planes, quats)


def restart_schedule(sample, grid: ClosestPointGrid, config: DirectConfig | None = None) -> OptResult:
    """Optimize from the canonical start and (optionally) the PCA start; keep the lower loss."""
    cfg = config or DirectConfig()
    runs = [optimize_candidates(sample, grid, cfg.w_r, cfg.steps, cfg.lr, cfg.seed)]
    runs[0].init = "canonical"
    if cfg.use_pca:
        r = optimize_candidates(sample, grid, cfg.w_r, cfg.steps, cfg.lr, cfg.seed, init=pca_init(sample))
        r.init = "pca"
        runs.append(r)
    return min(runs, key=lambda r: r.breakdown.total)


def refine_plane_exact(
    mesh: TriMesh,
    plane: SymPlane,
    points: np.ndarray,
    iters: int = 30,
    trim: float = 0.8,
    tol: float = 1e-20,
) -> SymPlane:
    """Polish a detected plane against the exact mesh surface, removing grid quantization.

    Gauss-Newton on point-to-plane residuals: each reflected point is compared
    with the tangent plane of the face holding its exact closest point. Only
    the ``trim`` fraction with the smallest residual enters each step, so
    missing geometry does not bias the fit.
    """
    pts = np.asarray(points, dtype=float)
    fn = mesh.face_normals()
    cur = canonicalize_plane(plane)
    for _ in range(iters):
        n, d = np.asarray(cur.n), cur.d
        s = pts @ n + d
        refl = pts - 2.0 * s[:, None] * n
        closest, dist, face = closest_surface_points(mesh, refl, return_face=True)
        keep = dist <= np.quantile(dist, trim)
        m = fn[face[keep]]
        p, sk = pts[keep], s[keep]
        e = np.einsum("ij,ij->i", m, refl[keep] - closest[keep])
        # tangent basis for the normal update
        u = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        mn = m @ n
        J = np.stack(
            [
                -2.0 * mn,
                -2.0 * mn * (p @ u) - 2.0 * sk * (m @ u),
                -2.0 * mn * (p @ v) - 2.0 * sk * (m @ v),
            ],
            axis=1,
        )
        step, *_ = np.linalg.lstsq(J, -e, rcond=None)
        n_new = n + step[1] * u + step[2] * v
        scale = np.linalg.norm(n_new)
        new = canonicalize_plane(SymPlane(tuple(n_new / scale), float((d + step[0]) / scale)))
        delta = np.sum((new.as_array() - cur.as_array()) ** 2)
        cur = new
        if delta < tol:
            break
    return cur

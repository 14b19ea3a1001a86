"""Voxel CNN that regresses three planes and three quaternions, in plain numpy.

Architecture at resolution R (k = log2 R stages):

    voxels R^3 x 1
      -> k x [conv3d(3, pad 1, stride 1) -> maxpool(2) -> leaky ReLU]   # 1^3 x 64
      -> 6 heads, each fc(64 -> 32) -> leaky ReLU -> fc(32 -> 4)

Heads 0-2 emit raw plane vectors (a, b, c, d); heads 3-5 emit raw
quaternions, normalized before use. Final fc layers start at zero weight with
biases equal to the canonical initial candidates, so an untrained net outputs
the x/y/z planes through the cube center and half-turns about x/y/z for any
input.

Activations are stored channels-last: (B, D, H, W, C).
"""

from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .loss import DEFAULT_WR, INIT_PLANES, INIT_QUATS, LossBreakdown, SymCandidates, loss_and_gradients
from .transforms import ParameterError
from .voxel import RESOLUTIONS, VoxelOccupancy

WEIGHT_MAGIC = b"PRSW"
WEIGHT_VERSION = 1
BOTTLENECK = 64
HEAD_HIDDEN = 32
N_HEADS = 6


class TrainingError(RuntimeError):
    pass


class WeightFormatError(ValueError):
    pass


def channel_schedule(resolution: int) -> list[int]:
    """Output channels per conv stage; doubles up to 64 at the 1^3 bottleneck."""
    if resolution not in RESOLUTIONS:
        raise ParameterError(f"resolution must be one of {RESOLUTIONS}")
    k = int(round(math.log2(resolution)))
    return [max(1, BOTTLENECK >> (k - 1 - i)) for i in range(k)]


@dataclass(eq=False)
class SymmetryNet:
    resolution: int
    params: dict[str, np.ndarray]
    slope: float = 0.01

    @property
    def n_conv(self) -> int:
        return len(channel_schedule(self.resolution))

    @property
    def dtype(self):
        return self.params["conv0.w"].dtype

    def copy(self) -> "SymmetryNet":
        return SymmetryNet(self.resolution, {k: v.copy() for k, v in self.params.items()}, self.slope)

    def param_names(self) -> list[str]:
        names = []
        for i in range(self.n_conv):
            names += [f"conv{i}.w", f"conv{i}.b"]
        names += ["fc1.w", "fc1.b", "fc2.w", "fc2.b"]
        return names


def init_weights(seed: int = 0, resolution: int = 32, slope: float = 0.01, dtype=np.float32) -> SymmetryNet:
    """He-uniform conv/fc weights; output layer pinned to the canonical candidates."""
    chans = channel_schedule(resolution)
    rng = np.random.default_rng(seed)
    gain = math.sqrt(2.0 / (1.0 + slope * slope))
    params: dict[str, np.ndarray] = {}
    c_in = 1
    for i, c_out in enumerate(chans):
        fan_in = c_in * 27
        bound = gain * math.sqrt(3.0 / fan_in)
        # stored as (3, 3, 3, C_in, C_out) to match the im2col layout
        params[f"conv{i}.w"] = rng.uniform(-bound, bound, size=(3, 3, 3, c_in, c_out)).astype(dtype)
        params[f"conv{i}.b"] = np.zeros(c_out, dtype=dtype)
        c_in = c_out
    bound = gain * math.sqrt(3.0 / BOTTLENECK)
    params["fc1.w"] = rng.uniform(-bound, bound, size=(N_HEADS, BOTTLENECK, HEAD_HIDDEN)).astype(dtype)
    params["fc1.b"] = np.zeros((N_HEADS, HEAD_HIDDEN), dtype=dtype)
    params["fc2.w"] = np.zeros((N_HEADS, HEAD_HIDDEN, 4), dtype=dtype)
    params["fc2.b"] = np.concatenate([INIT_PLANES, INIT_QUATS]).astype(dtype)
    return SymmetryNet(resolution, params, slope)


# ---------------------------------------------------------------------------
# layers


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, D, H, W, C) -> (B, D, H, W, 27*C) patches of the zero-padded input."""
    B, D, H, W, C = x.shape
    xp = np.zeros((B, D + 2, H + 2, W + 2, C), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, 1:-1] = x
    cols = np.empty((B, D, H, W, 27, C), dtype=x.dtype)
    o = 0
    for dz in range(3):
        for dy in range(3):
            for dx in range(3):
                cols[..., o, :] = xp[:, dz : dz + D, dy : dy + H, dx : dx + W]
                o += 1
    return cols.reshape(B, D, H, W, 27 * C)


def _col2im(dcols: np.ndarray, C: int) -> np.ndarray:
    B, D, H, W, _ = dcols.shape
    dcols = dcols.reshape(B, D, H, W, 27, C)
    dxp = np.zeros((B, D + 2, H + 2, W + 2, C), dtype=dcols.dtype)
    o = 0
    for dz in range(3):
        for dy in range(3):
            for dx in range(3):
                dxp[:, dz : dz + D, dy : dy + H, dx : dx + W] += dcols[..., o, :]
                o += 1
    return dxp[:, 1:-1, 1:-1, 1:-1]


def _pool_forward(y: np.ndarray):
    B, D, H, W, C = y.shape
    blocks = y.reshape(B, D // 2, 2, H // 2, 2, W // 2, 2, C).transpose(0, 1, 3, 5, 7, 2, 4, 6)
    blocks = blocks.reshape(B, D // 2, H // 2, W // 2, C, 8)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _pool_backward(dout: np.ndarray, arg: np.ndarray) -> np.ndarray:
    B, d, h, w, C = dout.shape
    blocks = np.zeros((B, d, h, w, C, 8), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(B, d, h, w, C, 2, 2, 2).transpose(0, 1, 5, 2, 6, 3, 7, 4)
    return blocks.reshape(B, 2 * d, 2 * h, 2 * w, C)


def _lrelu(x, slope):
    return np.where(x > 0, x, slope * x)


def _lrelu_grad(x, slope, dout):
    return np.where(x > 0, dout, slope * dout)


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardCache:
    batch: int
    convs: list = field(default_factory=list)  # (cols, pooled_pre, arg, C_in)
    feat: np.ndarray | None = None
    z1: np.ndarray | None = None
    a1: np.ndarray | None = None
    raw: np.ndarray | None = None  # (B, 6, 4)


def as_batch(vox, resolution: int, dtype) -> np.ndarray:
    """Voxel batch as a (B, R, R, R, 1) array."""
    if isinstance(vox, VoxelOccupancy):
        vox = [vox]
    if isinstance(vox, (list, tuple)):
        arrs = []
        for v in vox:
            if isinstance(v, VoxelOccupancy):
                if v.resolution != resolution:
                    raise ParameterError(f"voxel resolution {v.resolution} does not match net {resolution}")
                v = v.data
            arrs.append(np.asarray(v))
        x = np.stack(arrs)
    else:
        x = np.asarray(vox)
        if x.ndim == 3:
            x = x[None]
    if x.ndim == 5 and x.shape[-1] == 1:
        x = x[..., 0]
    if x.ndim != 4 or x.shape[1:] != (resolution,) * 3 or len(x) == 0:
        raise ParameterError(f"expected a nonempty batch of {resolution}^3 grids, got {x.shape}")
    return x.astype(dtype)[..., None]


def forward(net: SymmetryNet, vox) -> tuple[np.ndarray, ForwardCache]:
    """Raw head outputs (B, 6, 4) and the activation cache."""
    p = net.params
    x = as_batch(vox, net.resolution, net.dtype)
    cache = ForwardCache(batch=len(x))
    for i in range(net.n_conv):
        C = x.shape[-1]
        cols = _im2col(x)
        w = p[f"conv{i}.w"].reshape(27 * C, -1)
        y = cols @ w + p[f"conv{i}.b"]
        pooled, arg = _pool_forward(y)
        x = _lrelu(pooled, net.slope)
        cache.convs.append((cols, pooled, arg, C))
    feat = x.reshape(len(x), -1)
    if feat.shape[1] != BOTTLENECK:
        raise ParameterError("bottleneck is not 1^3 x 64; check resolution")
    z1 = np.einsum("bf,hfk->bhk", feat, p["fc1.w"]) + p["fc1.b"]
    a1 = _lrelu(z1, net.slope)
    raw = np.einsum("bhk,hko->bho", a1, p["fc2.w"]) + p["fc2.b"]
    cache.feat, cache.z1, cache.a1, cache.raw = feat, z1, a1, raw
    return raw, cache


def split_outputs(raw: np.ndarray) -> list[SymCandidates]:
    """Per-shape candidates (quaternions normalized) from raw head outputs."""
    raw = np.asarray(raw, dtype=np.float64)
    return [SymCandidates(r[:3], r[3:]) for r in raw]


def predict(net: SymmetryNet, vox) -> list[SymCandidates]:
    raw, _ = forward(net, vox)
    return split_outputs(raw)


def backward(net: SymmetryNet, cache: ForwardCache, d_planes: np.ndarray, d_quats: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given upstream gradients of the candidates.

    ``d_planes`` (B, 3, 4) is taken w.r.t. the raw plane outputs; ``d_quats``
    (B, 3, 4) w.r.t. the *normalized* quaternions and is pulled back through
    ``u -> u / |u|``.
    """
    d_planes = np.asarray(d_planes, dtype=np.float64)
    d_quats = np.asarray(d_quats, dtype=np.float64)
    if d_planes.shape != (cache.batch, 3, 4) or d_quats.shape != (cache.batch, 3, 4):
        raise RuntimeError("gradient batch does not match the forward cache")
    p = net.params
    dt = net.dtype
    u = cache.raw[:, 3:].astype(np.float64)
    un = np.linalg.norm(u, axis=-1, keepdims=True)
    pq = u / un
    dq_raw = (d_quats - np.sum(d_quats * pq, axis=-1, keepdims=True) * pq) / un
    draw = np.concatenate([d_planes, dq_raw], axis=1).astype(dt)

    grads: dict[str, np.ndarray] = {}
    grads["fc2.b"] = draw.sum(axis=0)
    grads["fc2.w"] = np.einsum("bhk,bho->hko", cache.a1, draw)
    da1 = np.einsum("bho,hko->bhk", draw, p["fc2.w"])
    dz1 = _lrelu_grad(cache.z1, net.slope, da1)
    grads["fc1.b"] = dz1.sum(axis=0)
    grads["fc1.w"] = np.einsum("bf,bhk->hfk", cache.feat, dz1)
    dfeat = np.einsum("bhk,hfk->bf", dz1, p["fc1.w"])

    dx = dfeat.reshape(cache.batch, 1, 1, 1, -1)
    for i in reversed(range(net.n_conv)):
        cols, pooled, arg, C = cache.convs[i]
        dpooled = _lrelu_grad(pooled, net.slope, dx)
        dy = _pool_backward(dpooled, arg)
        O = dy.shape[-1]
        dy2 = dy.reshape(-1, O)
        grads[f"conv{i}.b"] = dy2.sum(axis=0)
        grads[f"conv{i}.w"] = (cols.reshape(-1, cols.shape[-1]).T @ dy2).reshape(3, 3, 3, C, O)
        if i > 0:
            w = p[f"conv{i}.w"].reshape(27 * C, O)
            dx = _col2im(dy @ w.T, C)
    return {k: grads[k].astype(dt) for k in net.param_names()}


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(net: SymmetryNet, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """In-place bias-corrected Adam update of ``net.params``."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {k} at step {state.step + 1}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k, g in grads.items():
        param = net.params[k]
        if param.shape != g.shape:
            raise ParameterError(f"gradient shape {g.shape} does not match {k} {param.shape}")
        if k not in state.m:
            state.m[k] = np.zeros_like(param, dtype=np.float64)
            state.v[k] = np.zeros_like(param, dtype=np.float64)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g.astype(np.float64) ** 2)
        upd = (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        net.params[k] = (param - upd).astype(param.dtype)


# ---------------------------------------------------------------------------
# weight files: b"PRSW", u32 version, u32 resolution, f32 slope, u32 count,
# then per array: u16 name length, name, u8 ndim, u32 dims, f32 data (LE)


def dump_weights(net: SymmetryNet, fh) -> None:
    names = net.param_names()
    fh.write(WEIGHT_MAGIC)
    fh.write(struct.pack("<IIfI", WEIGHT_VERSION, net.resolution, net.slope, len(names)))
    for name in names:
        arr = np.ascontiguousarray(net.params[name], dtype="<f4")
        nb = name.encode()
        fh.write(struct.pack("<H", len(nb)) + nb)
        fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def _read_exact(fh, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise WeightFormatError("corrupt weight file: truncated")
    return b


def load_weights_from(fh) -> SymmetryNet:
    magic = fh.read(4)
    if magic != WEIGHT_MAGIC:
        raise WeightFormatError("not a weight file (bad magic)")
    version, R, slope, count = struct.unpack("<IIfI", _read_exact(fh, 16))
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"unsupported weight format version {version}")
    if R not in RESOLUTIONS:
        raise WeightFormatError(f"corrupt weight file: resolution {R}")
    params = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, ln).decode(errors="replace")
        (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
        shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(_read_exact(fh, 4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    net = SymmetryNet(R, params, float(slope))
    ref = init_weights(0, R, float(slope))
    for k in ref.param_names():
        if k not in params or params[k].shape != ref.params[k].shape:
            raise WeightFormatError(f"corrupt weight file: bad or missing array {k}")
    return net


def save_weights(net: SymmetryNet, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        dump_weights(net, fh)


def load_weights(path: str | os.PathLike) -> SymmetryNet:
    with open(path, "rb") as fh:
        return load_weights_from(fh)


def weights_bytes(net: SymmetryNet) -> bytes:
    buf = io.BytesIO()
    dump_weights(net, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 0.01
    w_r: float = DEFAULT_WR
    epochs: int = 30
    seed: int = 0
    resolution: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.resolution not in RESOLUTIONS:
            raise ParameterError(f"resolution must be one of {RESOLUTIONS}")


@dataclass
class TrainRecord:
    """One training shape: occupancy input plus what the loss needs."""

    voxels: np.ndarray  # (R, R, R) bool
    points: np.ndarray  # (N, 3)
    grid: object  # ClosestPointGrid


@dataclass
class StepLog:
    step: int
    epoch: int
    l_sd: float
    l_r: float
    total: float


def batch_loss_and_grads(net: SymmetryNet, records, w_r: float):
    """Summed loss over the batch, per-shape breakdowns and parameter gradients."""
    raw, cache = forward(net, [r.voxels for r in records])
    cands = split_outputs(raw)
    dpl = np.zeros((len(records), 3, 4))
    dqu = np.zeros((len(records), 3, 4))
    parts: list[LossBreakdown] = []
    for b, (rec, cand) in enumerate(zip(records, cands)):
        br, gr = loss_and_gradients(cand.planes, cand.quats, rec.points, rec.grid, w_r)
        parts.append(br)
        dpl[b], dqu[b] = gr.d_planes, gr.d_quats
    grads = backward(net, cache, dpl, dqu)
    return parts, grads, cands


def train(
    config: TrainConfig,
    dataset,
    net: SymmetryNet | None = None,
    on_step=None,
    checkpoint: str | os.PathLike | None = None,
) -> tuple[SymmetryNet, list[StepLog]]:
    """Minimize the summed symmetry + regularization loss over minibatches.

    ``dataset`` is a sequence of :class:`TrainRecord`, or a callable
    ``epoch -> sequence`` for per-epoch augmentation.
    """
    get = dataset if callable(dataset) else (lambda epoch: dataset)
    first = get(0)
    if len(first) == 0:
        raise ParameterError("empty training set")
    if first[0].voxels.shape != (config.resolution,) * 3:
        raise ParameterError("dataset resolution does not match the training config")
    if net is None:
        net = init_weights(config.seed, config.resolution)
    state = AdamState(lr=config.lr)
    rng = np.random.default_rng(config.seed)
    log: list[StepLog] = []
    for epoch in range(config.epochs):
        data = first if epoch == 0 else get(epoch)
        order = rng.permutation(len(data))
        for s in range(0, len(order), config.batch_size):
            batch = [data[i] for i in order[s : s + config.batch_size]]
            parts, grads, _ = batch_loss_and_grads(net, batch, config.w_r)
            l_sd = float(np.mean([p.l_sd for p in parts]))
            l_r = float(np.mean([p.l_r for p in parts]))
            total = float(np.mean([p.total for p in parts]))
            if not math.isfinite(total):
                raise TrainingError(f"non-finite loss at step {state.step + 1}")
            adam_step(net, grads, state)
            entry = StepLog(state.step, epoch, l_sd, l_r, total)
            log.append(entry)
            if on_step is not None:
                on_step(entry)
        if checkpoint is not None:
            save_weights(net, checkpoint)
    return net, log


def write_loss_csv(log: list[StepLog], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,epoch,l_sd,l_r,total\n")
        for e in log:
            fh.write(f"{e.step},{e.epoch},{e.l_sd:.9g},{e.l_r:.9g},{e.total:.9g}\n")

"""Command-line interface: gen, train, detect, eval, complete, bench."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import dataset as ds
from .direct import DirectConfig, refine_plane_exact, restart_schedule
from .loss import loss_and_gradients
from .mesh import (
    DegenerateInputError,
    EmptyInputError,
    MeshFormatError,
    TriMesh,
    load_mesh,
    sample_surface,
    save_obj,
    unit_cube_transform,
)
from .metrics import axis_angle_error, match_gte, nearest_symmetry_gte
from .net import TrainConfig, TrainingError, WeightFormatError, forward, load_weights, save_weights, split_outputs, train, write_loss_csv
from .pipeline import PreparedShape, prepare, refine_planes
from .report import EvalRow, plot_eval, plot_loss, write_eval_csv
from .transforms import ParameterError, SymPlane, canonicalize_plane, transform_plane
from .validate import DetectionResult, validate_all
from .voxel import GridFormatError

log = logging.getLogger("symnet")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3, 4
JOBS_ENV = "SYMNET_JOBS"
SCHEMA_PATH = Path(__file__).with_name("schemas") / "detection.schema.json"
BENCH_TARGET_MS = 50.0
AXIS_TOL_DEG = 3.0


class UsageError(Exception):
    pass


class InputFormatError(Exception):
    pass


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items, jobs: int):
    """Order-preserving map, optionally over a process pool."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# config


def parse_config(text: str) -> dict:
    """JSON object, or ``key = value`` lines (``#`` comments allowed)."""
    text = text.strip()
    if text.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"config: {exc}") from exc
        if not isinstance(obj, dict):
            raise InputFormatError("config must be a JSON object")
        return obj
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputFormatError(f"config line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v.strip("\"'")
    return out


def train_config_from(obj: dict) -> TrainConfig:
    known = {f.name: f.type for f in fields(TrainConfig)}
    bad = set(obj) - set(known)
    if bad:
        raise InputFormatError(f"unknown config keys: {sorted(bad)}")
    kw = {}
    for k, v in obj.items():
        cast = float if k in ("lr", "w_r") else int
        try:
            kw[k] = cast(v)
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"config {k}: {v!r}") from exc
    return TrainConfig(**kw)


# ---------------------------------------------------------------------------
# detection


def planes_to_input_frame(planes, scale: float, shift) -> list[SymPlane]:
    shift = np.asarray(shift, dtype=float)
    return [canonicalize_plane(transform_plane(p, None, 1.0 / scale, -shift / scale)) for p in planes]


def detection_json(res: DetectionResult, input_name: str, mode: str, scale: float, shift, opt=None) -> dict:
    doc = {"input": input_name, "mode": mode, "normalization": {"scale": scale, "shift": list(map(float, shift))}}
    doc.update(res.to_json())
    doc["planes_input_frame"] = [p.to_json() for p in planes_to_input_frame(res.planes, scale, shift)]
    if opt is not None:
        doc["optimizer"] = {"init": opt.init, "steps": len(opt.best_trace) - 1, "final_total": opt.breakdown.total}
    return doc


def plane_cube_polygon(plane: SymPlane, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Vertices (K, 3), K in 3..6, of the plane clipped to an axis-aligned box, in cyclic order."""
    n = plane.normal
    d = plane.d
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    corners = np.array([[hi[i] if (c >> i) & 1 else lo[i] for i in range(3)] for c in range(8)])
    f = corners @ n + d
    pts = []
    for a in range(8):
        for b in range(a + 1, 8):
            if bin(a ^ b).count("1") != 1:
                continue
            fa, fb = f[a], f[b]
            if fa == 0:
                pts.append(corners[a])
            if (fa < 0 < fb) or (fb < 0 < fa):
                pts.append(corners[a] + fa / (fa - fb) * (corners[b] - corners[a]))
            if fb == 0:
                pts.append(corners[b])
    if not pts:
        return np.zeros((0, 3))
    pts = np.unique(np.round(np.array(pts), 12), axis=0)
    if len(pts) < 3:
        return np.zeros((0, 3))
    c = pts.mean(axis=0)
    u = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    ang = np.arctan2((pts - c) @ v, (pts - c) @ u)
    return pts[np.argsort(ang)]


def write_plane_obj(planes, path, scale: float = 1.0, shift=(0.0, 0.0, 0.0)) -> None:
    """One polygon face per plane (clipped to the unit cube), mapped back to the input frame."""
    shift = np.asarray(shift, dtype=float)
    lines = []
    base = 1
    for p in planes:
        poly = (plane_cube_polygon(p) - shift) / scale
        if len(poly) == 0:
            continue
        lines += [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in poly]
        lines.append("f " + " ".join(str(base + i) for i in range(len(poly))))
        base += len(poly)
    Path(path).write_text("\n".join(lines) + "\n")


def _need_weights(args):
    if args.mode == "net" and not args.weights:
        raise UsageError("--weights is required with --mode net")


def _direct_config(args) -> DirectConfig:
    return DirectConfig(steps=args.steps, lr=args.lr, seed=args.seed, use_pca=not args.no_pca)


def cmd_detect(args) -> int:
    _need_weights(args)
    mesh = load_mesh(args.input)
    net = load_weights(args.weights) if args.mode == "net" else None
    scale, shift = unit_cube_transform(mesh)
    shape = prepare(mesh, args.resolution if net is None else net.resolution, seed=args.seed)
    opt = None
    if net is not None:
        raw, _ = forward(net, shape.voxels)
        res = validate_all(split_outputs(raw)[0], shape.sample, shape.grid)
    else:
        opt = restart_schedule(shape.sample, shape.grid, _direct_config(args))
        res = validate_all(opt.candidates, shape.sample, shape.grid)
    if args.refine:
        res = refine_planes(res, shape, seed=args.seed)
    doc = detection_json(res, str(args.input), args.mode, scale, shift, opt)
    doc["refined"] = bool(args.refine)
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.export_planes:
        write_plane_obj(res.planes, args.export_planes, scale, shift)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen / train


def cmd_gen(args) -> int:
    fams = tuple(args.families.split(",")) if args.families else ds.FAMILIES
    bad = [f for f in fams if f not in ds.FAMILIES]
    if bad:
        raise UsageError(f"unknown families {bad}; choose from {', '.join(ds.FAMILIES)}")
    shapes = ds.generate_set(fams, args.count, args.seed, rotate=not args.no_rotate)
    out = Path(args.out)
    meta = {"families": list(fams), "count": args.count, "seed": args.seed, "rotate": not args.no_rotate}
    if args.export_cache:
        ds.export_cache(shapes, out, args.resolution, meta)
    else:
        out.mkdir(parents=True, exist_ok=True)
        ds.write_manifest(shapes, out / "manifest.json", meta)
    print(f"wrote {len(shapes)} shapes to {out / 'manifest.json'}")
    return EXIT_OK


def _prepare_record(job):
    mesh, resolution, seed = job
    return prepare(mesh, resolution, seed=seed).record()


def training_records(shapes, rotations: int, resolution: int, seed: int, jobs: int = 1):
    """Preprocessed copies of every shape under ``rotations`` random rotations (0 keeps the pose)."""
    jobs_in = []
    for i, s in enumerate(shapes):
        if rotations == 0:
            jobs_in.append((s.mesh, resolution, seed + i))
        for k in range(rotations):
            r = ds.augment_rotate(s, seed * 1_000_003 + i * 101 + k)
            jobs_in.append((r.mesh, resolution, seed + i * 101 + k))
    return _map(_prepare_record, jobs_in, jobs)


def cmd_train(args) -> int:
    cfg_obj = parse_config(Path(args.config).read_text()) if args.config else {}
    for key in ("epochs", "batch_size", "lr", "w_r", "seed", "resolution"):
        val = getattr(args, key)
        if val is not None:
            cfg_obj[key] = val
    cfg = train_config_from(cfg_obj)
    shapes = ds.read_manifest(args.manifest)
    t0 = time.perf_counter()
    recs = training_records(shapes, args.rotations, cfg.resolution, cfg.seed, args.jobs)
    log.info("prepared %d training records in %.1fs", len(recs), time.perf_counter() - t0)

    def on_step(e):
        log.info("step %d epoch %d l_sd %.4g l_r %.4g total %.4g", e.step, e.epoch, e.l_sd, e.l_r, e.total)

    net, steps = train(cfg, recs, on_step=on_step, checkpoint=args.out)
    save_weights(net, args.out)
    loss_csv = Path(args.loss_csv) if args.loss_csv else Path(args.out).with_suffix(".loss.csv")
    write_loss_csv(steps, loss_csv)
    png = plot_loss(steps, loss_csv)
    print(f"weights: {args.out}\nloss log: {loss_csv}\nloss curve: {png}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _eval_one(job):
    idx, shape, mode, weights, dcfg, resolution = job
    net = load_weights(weights) if mode == "net" else None
    prep = prepare(shape.mesh, net.resolution if net else resolution, seed=idx)
    if net is not None:
        raw, _ = forward(net, prep.voxels)
        res = validate_all(split_outputs(raw)[0], prep.sample, prep.grid)
    else:
        res = validate_all(restart_schedule(prep.sample, prep.grid, dcfg).candidates, prep.sample, prep.grid)
    rep = match_gte(res, shape.gt_planes)
    rows = []
    for m in rep.matches:
        sde = res.plane_sde[m.pred_index] if m.matched else None
        rows.append(EvalRow(idx, shape.family, m.gt_index, "matched" if m.matched else "missed", m.gte, sde))
    axes_hit = sum(
        1 for g in shape.gt_axes if any(math.degrees(axis_angle_error(a, g)) <= AXIS_TOL_DEG for a in res.axes)
    )
    spurious_axes = len(res.axes) if not shape.gt_axes else 0
    plane_gte = (
        [nearest_symmetry_gte(p, shape.gt_planes, shape.gt_axes) for p in res.planes]
        if shape.gt_planes or shape.gt_axes
        else []
    )
    return {
        "rows": rows,
        "recalled": rep.recalled() if shape.gt_planes else 0,
        "denominator": rep.recall_denominator() if shape.gt_planes else 0,
        "gt_axes": len(shape.gt_axes),
        "axes_hit": axes_hit,
        "spurious_axes": spurious_axes,
        "n_planes": len(res.planes),
        "family": shape.family,
        "complete": bool(shape.gt_planes) and not rep.misses,
        "mean_gte": rep.mean_gte,
        "plane_gte": plane_gte,
    }


def evaluate(shapes, mode: str, weights=None, dcfg: DirectConfig | None = None, resolution: int = 32, jobs: int = 1):
    """Per-shape evaluation rows and a summary dict."""
    jobs_in = [(i, s, mode, weights, dcfg, resolution) for i, s in enumerate(shapes)]
    out = _map(_eval_one, jobs_in, jobs)
    rows = [r for o in out for r in o["rows"]]
    matched = [r for r in rows if r.status == "matched"]
    den = sum(o["denominator"] for o in out)
    n_axes = sum(o["gt_axes"] for o in out)
    complete = [o["mean_gte"] for o in out if o["complete"]]
    validated = [g for o in out for g in o["plane_gte"]]
    summary = {
        "shapes": len(shapes),
        "gt_planes": len(rows),
        "matched": len(matched),
        "missed": len(rows) - len(matched),
        "mean_gte_matched": float(np.mean([r.gte for r in matched])) if matched else math.nan,
        "mean_gte_fully_matched_shapes": float(np.mean(complete)) if complete else math.nan,
        "mean_gte_validated": float(np.mean(validated)) if validated else math.nan,
        "mean_sde_matched": float(np.mean([r.sde for r in matched])) if matched else math.nan,
        "recall": sum(o["recalled"] for o in out) / den if den else math.nan,
        "axis_recall": sum(o["axes_hit"] for o in out) / n_axes if n_axes else math.nan,
        "spurious_axes": sum(o["spurious_axes"] for o in out),
        "empty_on_asymmetric": sum(1 for o in out if o["family"] == "asymmetric-blob" and o["n_planes"] == 0),
    }
    return rows, summary, out


def cmd_eval(args) -> int:
    if args.mode == "net" and not args.weights:
        raise UsageError("--weights is required with --mode net")
    shapes = ds.read_manifest(args.manifest)
    rows, summary, _ = evaluate(shapes, args.mode, args.weights, _direct_config(args), args.resolution, args.jobs)
    write_eval_csv(rows, args.report)
    figs = plot_eval(rows, args.report)
    summary_path = Path(args.report).with_suffix(".summary.json")
    summary_path.write_text(json.dumps(summary, indent=1) + "\n")
    for k, v in summary.items():
        print(f"{k}: {v}")
    print(f"report: {args.report}\nsummary: {summary_path}\nfigures: {', '.join(map(str, figs))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# complete


def complete_mesh(mesh: TriMesh, plane: SymPlane) -> TriMesh:
    """Input mesh plus its mirror image across ``plane`` (mirrored faces reversed)."""
    n = plane.normal
    v = mesh.vertices
    mirrored = v - 2.0 * ((v @ n + plane.d) / (n @ n))[:, None] * n
    faces = np.concatenate([mesh.faces, mesh.faces[:, ::-1] + len(v)])
    return TriMesh(np.concatenate([v, mirrored]), faces)


def _checked_plane(obj, path) -> SymPlane:
    try:
        plane = SymPlane.from_json(obj)
        n = plane.normal
    except (ParameterError, TypeError, ValueError) as exc:
        raise InputFormatError(f"{path}: malformed plane: {exc}") from exc
    if n.shape != (3,) or not np.all(np.isfinite(n)) or not np.isfinite(plane.d) or not np.any(n):
        raise InputFormatError(f"{path}: plane needs a finite, nonzero normal and finite d")
    return plane


def read_plane_arg(path, index: int = 0) -> SymPlane:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    if isinstance(obj, dict) and "n" in obj:
        return _checked_plane(obj, path)
    if isinstance(obj, dict) and "planes_input_frame" in obj:
        planes = obj["planes_input_frame"]
        if not 0 <= index < len(planes):
            raise InputFormatError(f"{path}: no validated plane with index {index}")
        return _checked_plane(planes[index], path)
    raise InputFormatError(f"{path}: expected a plane {{n, d}} or a detection result")


def cmd_complete(args) -> int:
    mesh = load_mesh(args.input)
    try:
        plane = read_plane_arg(args.plane, args.plane_index)
    except ParameterError as exc:
        raise InputFormatError(str(exc)) from exc
    if args.refine:
        pts = sample_surface(mesh, 2000, args.seed).points
        plane = refine_plane_exact(mesh, plane, pts)
    out = complete_mesh(mesh, plane)
    save_obj(out, args.out)
    print(f"plane n={[float(x) for x in plane.normal]} d={float(plane.d)}\nwrote {args.out} ({len(out.vertices)} vertices)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def bench_shape(shape_mesh, mode: str, net=None, dcfg: DirectConfig | None = None, repeat: int = 5, seed: int = 0):
    """Median preprocessing and inference wall-clock (ms) plus the (repeat-invariant) detection."""
    prep_t, inf_t = [], []
    doc = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        prep = prepare(shape_mesh, net.resolution if net is not None else 32, seed=seed)
        t1 = time.perf_counter()
        if net is not None:
            raw, _ = forward(net, prep.voxels)
            res = validate_all(split_outputs(raw)[0], prep.sample, prep.grid)
        else:
            res = validate_all(restart_schedule(prep.sample, prep.grid, dcfg).candidates, prep.sample, prep.grid)
        t2 = time.perf_counter()
        prep_t.append(1e3 * (t1 - t0))
        inf_t.append(1e3 * (t2 - t1))
        doc = res.to_json()
    return statistics.median(prep_t), statistics.median(inf_t), doc, prep


def loss_eval_ms(prep: PreparedShape, repeat: int = 20) -> float:
    from .loss import INIT_PLANES, INIT_QUATS

    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        loss_and_gradients(INIT_PLANES, INIT_QUATS, prep.sample.points, prep.grid)
        ts.append(1e3 * (time.perf_counter() - t0))
    return statistics.median(ts)


def cmd_bench(args) -> int:
    _need_weights(args)
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    net = load_weights(args.weights) if args.mode == "net" else None
    dcfg = _direct_config(args)
    shapes = ds.read_manifest(args.manifest)
    if args.limit:
        shapes = shapes[: args.limit]
    rows = []
    for i, s in enumerate(shapes):
        prep_ms, inf_ms, doc, prep = bench_shape(s.mesh, args.mode, net, dcfg, args.repeat, seed=i)
        row = {"shape_id": i, "family": s.family, "prep_ms": prep_ms, "infer_ms": inf_ms, "planes": len(doc["planes"]), "axes": len(doc["axes"])}
        if args.mode == "direct":
            row["loss_eval_ms"] = loss_eval_ms(prep)
            row["loss_evals"] = (dcfg.steps + 1) * (2 if dcfg.use_pca else 1)
        rows.append(row)
    med = statistics.median(r["infer_ms"] for r in rows)
    header = list(rows[0])
    lines = [",".join(header)] + [",".join(f"{r[k]:.4f}" if isinstance(r[k], float) else str(r[k]) for k in header) for r in rows]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    print(f"median inference per shape: {med:.2f} ms over {len(rows)} shapes, {args.repeat} repeats each")
    print(f"median preprocessing per shape: {statistics.median(r['prep_ms'] for r in rows):.2f} ms")
    if args.mode == "net":
        verdict = "PASS" if med < BENCH_TARGET_MS else "FAIL"
        print(f"target < {BENCH_TARGET_MS:.0f} ms per shape (32^3, CPU): {verdict}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_direct_flags(p):
    p.add_argument("--steps", type=int, default=500, help="Adam steps per start (direct mode)")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--no-pca", action="store_true", help="skip the PCA-aligned restart")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symnet", description="Planar reflective symmetry and rotation axis detection.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic shape manifest")
    p.add_argument("--families", default="", help="comma-separated subset of: " + ", ".join(ds.FAMILIES))
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-rotate", action="store_true")
    p.add_argument("--export-cache", action="store_true", help="also write shapes/*.obj and grids/*.prsv")
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="unsupervised training on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON or key = value file with TrainConfig fields")
    p.add_argument("--out", required=True, help="weights file")
    p.add_argument("--loss-csv")
    p.add_argument("--rotations", type=int, default=1, help="random rotations per shape (0 keeps the pose)")
    for key, typ in (("epochs", int), ("batch_size", int), ("lr", float), ("w_r", float), ("seed", int), ("resolution", int)):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect symmetries of one OBJ mesh")
    p.add_argument("input")
    p.add_argument("--mode", choices=("net", "direct"), default="direct")
    p.add_argument("--weights")
    p.add_argument("--out", help="result JSON (stdout if omitted)")
    p.add_argument("--export-planes", help="OBJ with one clipped quad per validated plane")
    p.add_argument("--refine", action="store_true", help="polish validated planes against the exact mesh surface")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=32)
    _add_direct_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="evaluate against manifest ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("net", "direct"), default="net")
    p.add_argument("--weights")
    p.add_argument("--report", required=True, help="CSV path; summary JSON and PNG figures go next to it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--jobs", type=int, default=default_jobs())
    _add_direct_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("complete", help="mirror a mesh across a plane")
    p.add_argument("input")
    p.add_argument("plane", help="JSON plane {n, d} or a detect result")
    p.add_argument("--plane-index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--refine", action="store_true", help="polish the plane against the exact input surface first")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("bench", help="per-shape timing, median over repeats")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("net", "direct"), default="net")
    p.add_argument("--weights")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--limit", type=int, default=0, help="only the first N shapes")
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=default_jobs(), help="accepted for symmetry; timing runs serially")
    _add_direct_flags(p)
    p.set_defaults(func=cmd_bench)
    return ap


INPUT_ERRORS = (
    InputFormatError,
    MeshFormatError,
    GridFormatError,
    WeightFormatError,
    EmptyInputError,
    DegenerateInputError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    json.JSONDecodeError,
    UnicodeDecodeError,
)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TrainingError, FloatingPointError, ParameterError, ValueError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

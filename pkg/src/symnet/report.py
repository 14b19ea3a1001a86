"""CSV reports and the PNG figures written next to them."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

EVAL_HEADER = ["shape_id", "family", "plane_id", "status", "gte", "sde"]


@dataclass
class EvalRow:
    shape_id: int
    family: str
    plane_id: int  # gt plane index
    status: str  # matched | missed
    gte: float | None
    sde: float | None


def write_eval_csv(rows: list[EvalRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_HEADER)
        for r in rows:
            w.writerow([
                r.shape_id,
                r.family,
                r.plane_id,
                r.status,
                "" if r.gte is None else f"{r.gte:.9g}",
                "" if r.sde is None else f"{r.sde:.9g}",
            ])


def read_eval_csv(path: str | os.PathLike) -> list[EvalRow]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out.append(EvalRow(
                int(rec["shape_id"]),
                rec["family"],
                int(rec["plane_id"]),
                rec["status"],
                float(rec["gte"]) if rec["gte"] else None,
                float(rec["sde"]) if rec["sde"] else None,
            ))
    return out


def summarize(rows: list[EvalRow], n_gt_capped: int | None = None, recalled: int | None = None) -> dict:
    """Mean GTE / SDE over matched planes, miss count and detection recall."""
    matched = [r for r in rows if r.status == "matched"]
    g = [r.gte for r in matched]
    s = [r.sde for r in matched if r.sde is not None]
    out = {
        "gt_planes": len(rows),
        "matched": len(matched),
        "missed": len(rows) - len(matched),
        "mean_gte_matched": float(np.mean(g)) if g else math.nan,
        "mean_sde_matched": float(np.mean(s)) if s else math.nan,
    }
    if n_gt_capped:
        out["recall"] = recalled / n_gt_capped
    return out


def _figure_path(csv_path, suffix: str) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + suffix + ".png")


def plot_eval(rows: list[EvalRow], csv_path) -> list[Path]:
    """GTE and SDE histograms (log scale) next to ``csv_path``."""
    written = []
    for key, label in (("gte", "GTE"), ("sde", "SDE")):
        vals = np.array([getattr(r, key) for r in rows if r.status == "matched" and getattr(r, key) is not None])
        fig, ax = plt.subplots(figsize=(5, 3.5))
        vals = vals[vals > 0]
        if len(vals):
            bins = np.logspace(np.log10(vals.min()), np.log10(vals.max()) + 1e-9, 25)
            ax.hist(vals, bins=bins)
            ax.set_xscale("log")
        if key == "sde":
            ax.axvline(4e-4, color="k", ls="--", lw=1, label="threshold")
            ax.legend()
        ax.set_xlabel(label)
        ax.set_ylabel("matched planes")
        fig.tight_layout()
        out = _figure_path(csv_path, "_" + key)
        fig.savefig(out, dpi=100)
        plt.close(fig)
        written.append(out)
    return written


def plot_loss(log, csv_path) -> Path:
    """Training loss curve (total, symmetry and regularization terms)."""
    steps = [e.step for e in log]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, [e.total for e in log], label="total")
    ax.plot(steps, [e.l_sd for e in log], label="symmetry")
    ax.plot(steps, [e.l_r for e in log], label="regularization")
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("mean loss per shape")
    ax.legend()
    fig.tight_layout()
    out = _figure_path(csv_path, "")
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out

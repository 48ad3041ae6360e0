"""Build the four experiment figures from CSV files.

Input schemas (produced by the experiment CLI):
  ufunc.csv       x,U
  trace.csv       run_id,seed,t,theta_sq,...,gap_mean,U_bar,sfo_calls
  trajectory.csv  run_id,seed,t,node,coord,value

Rendering is a pure function of the input files; saved images carry no
timestamps, so re-rendering identical inputs produces identical bytes.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("objective-curve", "residual-vs-iteration", "trajectories",
         "constrained-trajectories")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    inputs: tuple[str, ...]
    kind: str
    output: str
    bound: float = 2.25
    title: str | None = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}, expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input csv is required")


def _read_csv(path, required: tuple[str, ...]) -> dict[str, list[str]]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: no such file")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for name in required:
            if name not in cols:
                raise SchemaError(f"{path}: missing column {name!r}")
        data: dict[str, list[str]] = {name: [] for name in cols}
        for row in reader:
            for name in cols:
                data[name].append(row[name])
    return data


def _series_label(path) -> str:
    stem = Path(path).stem
    m = re.search(r"topology=([A-Za-z0-9_-]+)", stem)
    return m.group(1) if m else stem


def _objective_curve(ax, spec):
    data = _read_csv(spec.inputs[0], ("x", "U"))
    xs = np.array(data["x"], dtype=float)
    us = np.array(data["U"], dtype=float)
    ax.plot(xs, us, lw=1.5)
    ax.set_xlabel("x")
    ax.set_ylabel("U(x)")


def _residual_curves(ax, spec):
    for path in spec.inputs:
        data = _read_csv(path, ("run_id", "t", "theta_sq"))
        ts = np.array(data["t"], dtype=int)
        vals = np.array(data["theta_sq"], dtype=float)
        grid = np.unique(ts)
        mean = np.array([vals[ts == t].mean() for t in grid])
        ax.semilogy(grid, np.maximum(mean, 1e-300), lw=1.5, label=_series_label(path))
    ax.set_xlabel("iteration")
    ax.set_ylabel("consensus residual")
    ax.legend()


def _trajectories(ax, spec, bounds: bool):
    tmax = 0
    for path in spec.inputs:
        data = _read_csv(path, ("run_id", "t", "node", "coord", "value"))
        run = np.array(data["run_id"])
        node = np.array(data["node"], dtype=int)
        coord = np.array(data["coord"], dtype=int)
        ts = np.array(data["t"], dtype=int)
        val = np.array(data["value"], dtype=float)
        keep = coord == 0
        for rid in np.unique(run):
            for nd in np.unique(node):
                sel = keep & (run == rid) & (node == nd)
                if np.any(sel):
                    order = np.argsort(ts[sel])
                    ax.plot(ts[sel][order], val[sel][order], lw=0.7, alpha=0.6)
        if np.any(keep):
            tmax = max(tmax, int(ts[keep].max()))
    if bounds:
        ax.axhline(spec.bound, color="black", ls="--", lw=1.2, label=f"+{spec.bound:g}")
        ax.axhline(-spec.bound, color="black", ls="--", lw=1.2, label=f"-{spec.bound:g}")
        ax.legend()
    ax.set_xlabel("iteration")
    ax.set_ylabel("local variable")


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure without writing it (used by tests)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    if spec.kind == "objective-curve":
        _objective_curve(ax, spec)
    elif spec.kind == "residual-vs-iteration":
        _residual_curves(ax, spec)
    else:
        _trajectories(ax, spec, bounds=spec.kind == "constrained-trajectories")
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Write the figure; PNG output carries no timestamp metadata."""
    fig = build_figure(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, metadata={"Software": "plotkit"} if out.suffix == ".png" else None)
    finally:
        plt.close(fig)
    return out

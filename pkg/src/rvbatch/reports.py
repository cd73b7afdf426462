"""Artifact emission: delimited outputs, the run manifest and figure files.

CSV bodies are deterministic byte-for-byte for a given configuration and
seed: floats are written with shortest round-trip repr and wall-clock
information is confined to the manifest.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
import time
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .integrate import RunOutput, SimConfig

__all__ = [
    "write_series",
    "write_densities",
    "write_summary",
    "write_manifest",
    "write_bench",
    "render_run_figures",
    "render_sweep_figure",
    "render_bench_figure",
]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _time_tag(t: float) -> str:
    return f"{t:g}"


def write_series(outdir: Path, outputs: Mapping[str, RunOutput]) -> dict:
    """series_<method>.csv: one diagnostics row per record time."""
    written = {}
    for method, out in outputs.items():
        path = outdir / f"series_{method}.csv"
        dim_v = out.mean_v.shape[1]
        mean_cols = ["mean"] if dim_v == 1 else [f"mean_{d}" for d in range(dim_v)]
        header = ["t", *mean_cols, "variance", "error", "lambda_mean", "clamp_count",
                  "clip_count"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in range(out.times.size):
                row = [_fmt(out.times[r])]
                row += [_fmt(out.mean_v[r, d]) for d in range(dim_v)]
                row += [
                    _fmt(out.var_v[r]),
                    _fmt(out.error[r]),
                    _fmt(out.lambda_mean[r]),
                    _fmt(out.clamp_count[r]),
                    _fmt(out.clip_count[r]),
                ]
                w.writerow(row)
        written[f"series_{method}"] = path
    return written


def write_densities(outdir: Path, outputs: Mapping[str, RunOutput]) -> dict:
    """density_<method>_t<time>.csv: grid coordinates and density values."""
    written = {}
    for method, out in outputs.items():
        for t, grid in sorted(out.snapshots.items()):
            path = outdir / f"density_{method}_t{_time_tag(t)}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                if len(grid.axes) == 1:
                    w.writerow(["v", "density"])
                    for g, f in zip(grid.axes[0], grid.values):
                        w.writerow([_fmt(g), _fmt(f)])
                else:
                    w.writerow(["x", "v", "density"])
                    gx, gv = grid.axes
                    for i, xg in enumerate(gx):
                        for j, vg in enumerate(gv):
                            w.writerow([_fmt(xg), _fmt(vg), _fmt(grid.values[i, j])])
            written[f"density_{method}_t{t:g}"] = path
    return written


def write_summary(outdir: Path, rows: list[dict]) -> dict:
    """summary.csv: one row per (axis value, method) of a sweep."""
    path = outdir / "summary.csv"
    header = ["axis", "value", "method", "repeats", "error_mean", "error_rms",
              "ci_lo", "ci_hi"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])
    return {"summary": path}


def _jsonable(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if callable(obj):
        return getattr(obj, "__name__", repr(obj))
    return obj


def write_manifest(outdir: Path, exp_cfg, base: SimConfig, methods, written: dict) -> dict:
    """manifest.json: the resolved configuration that regenerates the run."""
    manifest = {
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "argv": sys.argv,
        "experiment": _jsonable(exp_cfg),
        "resolved_sim": _drop_kde_axes(_jsonable(base)),
        "methods": list(methods),
        "outputs": {k: str(v) for k, v in written.items()},
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"manifest": path}


def _drop_kde_axes(sim: dict) -> dict:
    # grid axes are reproducible from the kde settings; keep the manifest small
    kde = sim.get("kde")
    if isinstance(kde, dict) and "axes" in kde:
        kde = dict(kde)
        kde["axes"] = [
            {"start": ax[0], "stop": ax[-1], "points": len(ax)} for ax in kde["axes"]
        ]
        sim = dict(sim)
        sim["kde"] = kde
    return sim


def write_bench(outdir: Path, report: dict) -> dict:
    path = outdir / "bench.json"
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return {"bench": path}


# figure rendering lives in .figures; thin dispatchers keep the report
# surface in one module


def render_run_figures(outdir: Path, outputs: Mapping[str, RunOutput]) -> dict:
    from . import figures

    written = {}
    written.update(figures.error_series_figure(outdir, outputs))
    written.update(figures.lambda_figure(outdir, outputs))
    written.update(figures.density_figures(outdir, outputs))
    return written


def render_sweep_figure(outdir: Path, rows: list[dict], axis: str) -> dict:
    from . import figures

    return figures.sweep_figure(outdir, rows, axis)


def render_bench_figure(outdir: Path, report: dict) -> dict:
    from . import figures

    return figures.bench_figure(outdir, report)

"""Matplotlib rendering of run diagnostics next to the delimited output."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .integrate import RunOutput

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}

_COLORS = {"full": "k", "rbm": "tab:blue", "rvrbm": "tab:red"}


def _color(method: str):
    return _COLORS.get(method, "tab:green")


def _save(fig, path: Path):
    fig.savefig(path)
    plt.close(fig)


def error_series_figure(outdir: Path, outputs: Mapping[str, RunOutput]) -> dict:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for method, out in outputs.items():
            ax.semilogy(out.times, np.maximum(out.error, 1e-18), label=method,
                        color=_color(method))
        ax.set_xlabel("t")
        ax.set_ylabel("|mean - reference|")
        ax.legend()
        path = outdir / "error.png"
        _save(fig, path)
    return {"fig_error": path}


def lambda_figure(outdir: Path, outputs: Mapping[str, RunOutput]) -> dict:
    series = {m: o for m, o in outputs.items() if np.isfinite(o.lambda_mean).any()}
    if not series:
        return {}
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for method, out in series.items():
            ax.plot(out.times, out.lambda_mean, label=method, color=_color(method))
        ax.set_xlabel("t")
        ax.set_ylabel("mean control-variate weight")
        ax.legend()
        path = outdir / "lambda.png"
        _save(fig, path)
    return {"fig_lambda": path}


def density_figures(outdir: Path, outputs: Mapping[str, RunOutput]) -> dict:
    """One figure per snapshot time: 1-d densities overlaid, 2-d side by side."""
    times = sorted({t for out in outputs.values() for t in out.snapshots})
    written = {}
    for t in times:
        grids = {m: o.snapshots[t] for m, o in outputs.items() if t in o.snapshots}
        if not grids:
            continue
        path = outdir / f"density_t{t:g}.png"
        first = next(iter(grids.values()))
        with plt.rc_context(_STYLE):
            if len(first.axes) == 1:
                fig, ax = plt.subplots()
                for method, grid in grids.items():
                    ax.plot(grid.axes[0], grid.values, label=method, color=_color(method))
                ax.set_xlabel("v")
                ax.set_ylabel(f"density at t={t:g}")
                ax.legend()
            else:
                fig, axes = plt.subplots(1, len(grids), figsize=(5.0 * len(grids), 4.0))
                axes = np.atleast_1d(axes)
                for ax, (method, grid) in zip(axes, grids.items()):
                    gx, gv = grid.axes
                    pc = ax.pcolormesh(gx, gv, grid.values.T, shading="auto",
                                       cmap="viridis")
                    fig.colorbar(pc, ax=ax)
                    ax.set_title(f"{method}, t={t:g}")
                    ax.set_xlabel("x")
                    ax.set_ylabel("v")
            _save(fig, path)
        written[f"fig_density_t{t:g}"] = path
    return written


def sweep_figure(outdir: Path, rows: list[dict], axis: str) -> dict:
    methods = sorted({r["method"] for r in rows})
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for method in methods:
            pts = [(r["value"], r["error_mean"]) for r in rows if r["method"] == method]
            pts.sort()
            xs, ys = zip(*pts)
            ax.loglog(xs, ys, "o-", label=method, color=_color(method))
        ax.set_xlabel(axis)
        ax.set_ylabel("mean final-time error")
        ax.legend()
        path = outdir / "summary.png"
        _save(fig, path)
    return {"fig_summary": path}


def bench_figure(outdir: Path, report: dict) -> dict:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for method, per_n in report["seconds_per_step"].items():
            ns = sorted(per_n)
            ax.loglog(ns, [per_n[n] for n in ns], "o-", label=method,
                      color=_color(method))
        ax.set_xlabel("n")
        ax.set_ylabel("seconds per step")
        ax.legend()
        path = outdir / "bench.png"
        _save(fig, path)
    return {"fig_bench": path}

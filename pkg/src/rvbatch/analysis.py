"""Density reconstruction, moments, errors and multi-run statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ensemble import Ensemble

__all__ = [
    "KdeConfig",
    "DensityGrid",
    "default_opinion_grid",
    "phase_grid_from_ensemble",
    "kde",
    "moments",
    "mean_error",
    "entropy_H",
    "l1_distance",
    "rmse_over_repeats",
]


@dataclass(frozen=True)
class KdeConfig:
    """Gaussian kernel density estimate on a fixed grid.

    ``axes`` holds one strictly increasing coordinate array per dimension:
    a single axis evaluates the velocity density of an opinion model, two
    axes evaluate the (x, v) phase-space density.
    """

    sigma2_kernel: float = 1e-5
    axes: tuple[np.ndarray, ...] = field(
        default_factory=lambda: (np.linspace(-1.1, 1.1, 400),)
    )

    def __post_init__(self):
        if self.sigma2_kernel <= 0:
            raise ValueError("kernel bandwidth variance must be > 0")
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        for a in axes:
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be strictly increasing 1-d arrays")


@dataclass
class DensityGrid:
    """Density values on a uniform tensor grid with midpoint cell weights."""

    axes: tuple[np.ndarray, ...]
    values: np.ndarray  # shape (len(axes[0]),) or (len(axes[0]), len(axes[1]))

    @property
    def cell_weight(self) -> float:
        w = 1.0
        for a in self.axes:
            w *= a[1] - a[0]
        return w

    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_weight)


def default_opinion_grid(points: int = 400, pad: float = 0.1) -> np.ndarray:
    """Velocity grid slightly padded beyond [-1, 1] so boundary kernels fit."""
    return np.linspace(-1.0 - pad, 1.0 + pad, points)


def phase_grid_from_ensemble(e: Ensemble, sigma2: float, points: int = 100):
    """100x100 (x, v) grid over the data bounding box padded by 6 kernel sd."""
    pad = 6.0 * np.sqrt(sigma2)
    gx = np.linspace(e.x.min() - pad, e.x.max() + pad, points)
    gv = np.linspace(e.v.min() - pad, e.v.max() + pad, points)
    return gx, gv


def _gauss_sum(grid: np.ndarray, samples: np.ndarray, sigma2: float) -> np.ndarray:
    """sum_i exp(-(g - s_i)^2 / (2 sigma2)) per grid point, chunked."""
    out = np.zeros(grid.size)
    inv = -0.5 / sigma2
    chunk = max(1, 2**22 // max(samples.size, 1))
    for a in range(0, grid.size, chunk):
        d = grid[a : a + chunk, None] - samples[None, :]
        out[a : a + chunk] = np.exp(inv * d * d).sum(axis=1)
    return out


def kde(e: Ensemble, cfg: KdeConfig) -> DensityGrid:
    """Normal-kernel density estimate with fixed bandwidth variance.

    One axis: density of the first velocity component.  Two axes: joint
    density of (x, v) for one-dimensional phase-space models.
    """
    if e.n == 0:
        raise ValueError("empty ensemble")
    s2 = cfg.sigma2_kernel
    norm1 = 1.0 / np.sqrt(2.0 * np.pi * s2)
    if len(cfg.axes) == 1:
        g = cfg.axes[0]
        vals = _gauss_sum(g, e.v[:, 0], s2) * (norm1 / e.n)
        return DensityGrid(axes=cfg.axes, values=vals)
    if len(cfg.axes) == 2:
        if e.dim_x != 1 or e.dim_v != 1:
            raise ValueError("phase-space KDE expects dim_x = dim_v = 1")
        gx, gv = cfg.axes
        inv = -0.5 / s2
        vals = np.zeros((gx.size, gv.size))
        chunk = max(1, 2**21 // max(e.n, 1))
        kv = np.exp(inv * (gv[:, None] - e.v[None, :, 0]) ** 2)  # (Gv, n)
        for a in range(0, gx.size, chunk):
            kx = np.exp(inv * (gx[a : a + chunk, None] - e.x[None, :, 0]) ** 2)
            vals[a : a + chunk] = kx @ kv.T
        vals *= norm1 * norm1 / e.n
        return DensityGrid(axes=cfg.axes, values=vals)
    raise ValueError("only 1-d and 2-d grids are supported")


def moments(e: Ensemble):
    """(mass, mean velocity, temperature).

    Mass is 1 by construction; temperature is the population variance
    (1/n) sum |v_i - u|^2 / dim_v.
    """
    if e.n < 1:
        raise ValueError("empty ensemble")
    u = e.v.mean(axis=0)
    var = float(np.mean(np.sum((e.v - u) ** 2, axis=1)) / e.dim_v)
    return 1.0, u, var


def mean_error(e: Ensemble, m) -> float:
    """|ensemble mean velocity - m| (Euclidean norm across components)."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    return float(np.linalg.norm(e.v.mean(axis=0) - m))


def entropy_H(d: DensityGrid) -> float:
    """Quadrature of f log f over the grid, with 0 log 0 = 0."""
    f = d.values
    flogf = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    return float(flogf.sum() * d.cell_weight)


def l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    """Quadrature of |a - b|; both densities must share the grid."""
    if len(a.axes) != len(b.axes) or any(
        ax.shape != bx.shape or not np.array_equal(ax, bx)
        for ax, bx in zip(a.axes, b.axes)
    ):
        raise ValueError("density grids do not match")
    return float(np.abs(a.values - b.values).sum() * a.cell_weight)


def rmse_over_repeats(errors: Sequence[float]):
    """(mean, rms, 95% band of the mean) over per-seed errors."""
    err = np.asarray(errors, dtype=float)
    if err.size < 2:
        raise ValueError("need at least two repeats")
    mean = float(err.mean())
    rms = float(np.sqrt(np.mean(err**2)))
    half = 1.96 * float(err.std(ddof=1)) / np.sqrt(err.size)
    return mean, rms, (mean - half, mean + half)

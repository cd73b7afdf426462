"""Particle state container and reproducible sampling of initial data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelSpec
from .rng import RngKey, StreamKind, generator, normal_block, normals

__all__ = ["Ensemble", "init_ensemble", "wiener_increment", "wiener_block"]


@dataclass
class Ensemble:
    """Positions and velocities of n particles.

    ``x`` has shape (n, dim_x) with dim_x = 0 for space-homogeneous opinion
    models; ``v`` has shape (n, dim_v).  Mutation between steps happens by
    whole-array replacement, never in place.
    """

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        if self.x.ndim != 2 or self.v.ndim != 2:
            raise ValueError("x and v must be 2-d arrays (n, dim)")
        if self.x.shape[0] != self.v.shape[0]:
            raise ValueError("x and v must have the same number of rows")

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def dim_x(self) -> int:
        return self.x.shape[1]

    @property
    def dim_v(self) -> int:
        return self.v.shape[1]

    def validate_finite(self):
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise FloatingPointError("non-finite particle state")


def init_ensemble(model: ModelSpec, n: int, seed: int) -> Ensemble:
    """Draw n i.i.d. samples from the model's named initial distribution."""
    if n < 1:
        raise ValueError("particle count n must be >= 1")
    rng = generator(seed, StreamKind.INIT)
    if model.init == "uniform_opinion":
        v = rng.uniform(-1.0, 1.0, size=(n, 1))
        x = np.empty((n, 0))
    elif model.init == "two_cluster_opinion":
        # equal-mass uniform on [1/4, 3/4] and [-3/4, -1/4]
        sign = np.where(rng.random(size=(n, 1)) < 0.5, -1.0, 1.0)
        v = sign * rng.uniform(0.25, 0.75, size=(n, 1))
        x = np.empty((n, 0))
    elif model.init == "uniform_phase_square":
        x = rng.uniform(-1.0, 1.0, size=(n, 1))
        v = rng.uniform(-1.0, 1.0, size=(n, 1))
    else:
        raise ValueError(f"unknown initial distribution {model.init!r}")
    return Ensemble(x=x, v=v)


def wiener_increment(key: RngKey, dim: int, dt: float) -> np.ndarray:
    """One particle's Wiener increment over dt: N(0, dt) per component.

    A pure function of the key; equals row ``key.particle`` of
    :func:`wiener_block` at the same (seed, step).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return np.sqrt(dt) * normals(key, dim)


def wiener_block(seed: int, step: int, n: int, dim: int, dt: float) -> np.ndarray:
    """Wiener increments for the whole ensemble at one step, shape (n, dim)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return np.sqrt(dt) * normal_block(seed, StreamKind.WIENER, step, n, dim)

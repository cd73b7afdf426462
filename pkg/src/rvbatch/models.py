"""Interaction kernels, diffusion coefficients, surrogate interactions and
closed-form equilibrium densities for the supported model families.

Three kernel families are provided: a constant kernel (all-to-all
alignment), a bounded-confidence indicator kernel acting on opinion
distance, and a distance-decaying communication kernel acting on spatial
distance.  All are symmetric under exchange of the two particles, which is
what conserves the ensemble mean velocity under the full pairwise dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

__all__ = [
    "KernelVariant",
    "KernelSpec",
    "DiffusionVariant",
    "DiffusionSpec",
    "SurrogateVariant",
    "SurrogateSpec",
    "ModelSpec",
    "eval_kernel",
    "eval_diffusion_coefficient",
    "eval_surrogate",
    "beta_equilibrium_density",
    "maxwellian_density",
]


class KernelVariant(str, Enum):
    CONSTANT = "constant"
    BOUNDED_CONFIDENCE = "bounded_confidence"
    CUCKER_SMALE = "cucker_smale"
    CUSTOM = "custom"


@dataclass(frozen=True)
class KernelSpec:
    """Pairwise interaction weight P(x_i, x_j, v_i, v_j) >= 0.

    constant            P = 1
    bounded_confidence  P = 1 if |v_i - v_j| <= delta else 0
    cucker_smale        P = (xi^2 + |x_i - x_j|^2)^(-beta)
    custom              arbitrary callable (x_i, x_j, v_i, v_j) -> weight,
                        broadcast over leading axes; slow path, test use only
    """

    variant: KernelVariant = KernelVariant.CONSTANT
    delta: float = 1.0
    xi: float = 1.0
    beta: float = 0.1
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.variant is KernelVariant.BOUNDED_CONFIDENCE and self.delta <= 0:
            raise ValueError("bounded-confidence threshold delta must be > 0")
        if self.variant is KernelVariant.CUCKER_SMALE:
            if self.xi <= 0:
                raise ValueError("length scale xi must be > 0")
            if self.beta < 0:
                raise ValueError("exponent beta must be >= 0")
        if self.variant is KernelVariant.CUSTOM and self.func is None:
            raise ValueError("custom kernel requires a callable")

    @property
    def uses_positions(self) -> bool:
        return self.variant is KernelVariant.CUCKER_SMALE


class DiffusionVariant(str, Enum):
    NONE = "none"
    CONSTANT = "constant"
    OPINION_MULTIPLICATIVE = "opinion_multiplicative"


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion D(v): none, constant D=1, or D(v) = sqrt(1 - v^2).

    ``sigma2`` scales the noise; the Euler-Maruyama multiplier of a unit
    Wiener increment is sqrt(2 sigma2 D(v)^2).
    """

    variant: DiffusionVariant = DiffusionVariant.NONE
    sigma2: float = 0.0

    def __post_init__(self):
        if self.variant is not DiffusionVariant.NONE and self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0 for a nontrivial diffusion")


class SurrogateVariant(str, Enum):
    ONE = "one"
    PARABOLIC = "parabolic"
    TWO_CLUSTER_QUADRATIC = "two_cluster_quadratic"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SurrogateSpec:
    """Reduced interaction weight feeding the control variate.

    one                    1 everywhere
    parabolic              1 - v^2
    two_cluster_quadratic  (v - 1/2)(v + 1/2)
    custom                 callable (x, v) -> weight
    """

    variant: SurrogateVariant = SurrogateVariant.ONE
    func: Optional[Callable] = None
    clusters: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.clusters is not None:
            if len(set(self.clusters)) != len(self.clusters):
                raise ValueError("cluster centers must be pairwise distinct")


@dataclass(frozen=True)
class ModelSpec:
    """One model family: kernel + diffusion + domain + initial law.

    ``init`` names the initial distribution:
      uniform_opinion       v ~ U[-1, 1], no positions
      two_cluster_opinion   v ~ U([1/4, 3/4] u [-3/4, -1/4]), no positions
      uniform_phase_square  (x, v) ~ U([-1, 1]^2)
    ``law_mean`` is the mean velocity of the initial law, used when errors
    are measured against the law rather than the realized sample.
    """

    name: str = "custom"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    diffusion: DiffusionSpec = field(default_factory=DiffusionSpec)
    init: str = "uniform_opinion"
    dim_x: int = 0
    dim_v: int = 1
    opinion_domain: bool = True
    law_mean: tuple[float, ...] = (0.0,)


def _pair_distance_sq(a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.dot(d, d))


def eval_kernel(kernel: KernelSpec, x_i, x_j, v_i, v_j) -> float:
    """Kernel weight for one pair of particles.

    States are scalars or 1-d component vectors.  The vectorized ensemble
    paths in :mod:`rvbatch.batch` are checked against this reference.
    """
    if kernel.variant is KernelVariant.CONSTANT:
        return 1.0
    if kernel.variant is KernelVariant.BOUNDED_CONFIDENCE:
        r2 = _pair_distance_sq(v_i, v_j)
        return 1.0 if r2 <= kernel.delta * kernel.delta else 0.0
    if kernel.variant is KernelVariant.CUCKER_SMALE:
        r2 = _pair_distance_sq(x_i, x_j)
        return float(np.exp(-kernel.beta * np.log(kernel.xi * kernel.xi + r2)))
    return float(kernel.func(x_i, x_j, v_i, v_j))


def eval_diffusion_coefficient(diffusion: DiffusionSpec, v):
    """Multiplier sqrt(2 sigma2 D(v)^2) of a unit Wiener increment."""
    v = np.asarray(v, dtype=float)
    if diffusion.variant is DiffusionVariant.NONE:
        return np.zeros_like(v)
    if diffusion.variant is DiffusionVariant.CONSTANT:
        return np.full_like(v, np.sqrt(2.0 * diffusion.sigma2))
    # D^2(v) = 1 - v^2, clipped so boundary overshoots cannot produce NaN
    d2 = np.clip(1.0 - v * v, 0.0, None)
    return np.sqrt(2.0 * diffusion.sigma2 * d2)


def eval_surrogate(surrogate: SurrogateSpec, x, v):
    """Surrogate weight at (x, v); depends on v only for the built-ins."""
    v = np.asarray(v, dtype=float)
    if surrogate.variant is SurrogateVariant.ONE:
        return np.ones_like(v)
    if surrogate.variant is SurrogateVariant.PARABOLIC:
        return 1.0 - v * v
    if surrogate.variant is SurrogateVariant.TWO_CLUSTER_QUADRATIC:
        return (v - 0.5) * (v + 0.5)
    if surrogate.func is None:
        raise ValueError("custom surrogate has no bound function")
    return np.asarray(surrogate.func(x, v), dtype=float)


def beta_equilibrium_density(m: float, sigma2: float, v):
    """Stationary opinion density of the all-to-all noisy model on (-1, 1).

    f(v) = (1+v)^(a-1) (1-v)^(b-1) / (2^(a+b-1) B(a, b)) with
    a = (1+m)/sigma2, b = (1-m)/sigma2.  Computed through log-gamma so small
    sigma2 cannot overflow.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    if abs(m) >= 1:
        raise ValueError("mean opinion m must lie in (-1, 1)")
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(v) >= 1):
        raise ValueError("density is defined on the open interval (-1, 1)")
    a = (1.0 + m) / sigma2
    b = (1.0 - m) / sigma2
    log_beta = gammaln(a) + gammaln(b) - gammaln(a + b)
    log_f = (
        (a - 1.0) * np.log1p(v)
        + (b - 1.0) * np.log1p(-v)
        - (a + b - 1.0) * np.log(2.0)
        - log_beta
    )
    return np.exp(log_f)


def maxwellian_density(u, sigma2: float, v):
    """Isotropic Gaussian (2 pi sigma2)^(-d/2) exp(-|v - u|^2 / (2 sigma2)).

    ``u`` and ``v`` are d-vectors (scalars are treated as d = 1).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.asarray(v, dtype=float)
    d = u.shape[-1]
    if v.ndim == 0:
        v = v.reshape(1)
    r2 = np.sum((v - u) ** 2, axis=-1)
    return (2.0 * np.pi * sigma2) ** (-d / 2.0) * np.exp(-r2 / (2.0 * sigma2))

"""Random batch construction and drift evaluation.

Two batching schemes are supported:

partition    one uniform permutation per step, split into consecutive blocks
             of size m (plus one remainder block when m does not divide n);
             every particle sits in exactly one batch.  Exactly conserves the
             ensemble mean velocity for symmetric kernels.
independent  every particle draws its own uniform batch of m indices from
             the whole ensemble.  This follows the per-particle reading of
             the batch update and does not conserve the mean, so the batch
             fluctuations are visible in the mean-error diagnostics.

The full O(n^2) sum is evaluated by fused numba kernels parallelized over
the target particle; each particle's accumulation is sequential, so results
are bitwise independent of the worker thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .ensemble import Ensemble
from .models import KernelSpec, KernelVariant, eval_kernel
from .rng import RngKey, generator

__all__ = [
    "BatchPlan",
    "make_batches",
    "make_independent_batches",
    "full_drift",
    "full_drift_all",
    "batch_drift",
    "batch_drift_all",
    "batch_mean_velocity",
    "batch_means_all",
]


@dataclass
class BatchPlan:
    """Batch membership for one time step.

    For the partition scheme, ``members`` is the permuted index array and
    ``offsets`` delimits consecutive blocks; ``block_of[i]`` maps a particle
    to its block.  For the independent scheme, ``members`` has shape (n, m)
    and row i is particle i's batch.
    """

    step: int
    m: int
    n: int
    scheme: str
    members: np.ndarray
    offsets: np.ndarray | None = None
    block_of: np.ndarray | None = None

    def batch_of(self, i: int) -> np.ndarray:
        """Indices of the batch assigned to particle i."""
        if self.scheme == "partition":
            b = self.block_of[i]
            return self.members[self.offsets[b] : self.offsets[b + 1]]
        return self.members[i]

    def n_blocks(self) -> int:
        if self.scheme == "partition":
            return len(self.offsets) - 1
        return self.n


def make_batches(n: int, m: int, key: RngKey) -> BatchPlan:
    """Partition {0..n-1} into random blocks of size m (one remainder block).

    ``m == n`` is accepted as the degenerate single-batch plan so that batch
    methods can be coupled against the full dynamics.
    """
    if m <= 1:
        raise ValueError(f"batch size m={m} must be > 1")
    if m > n:
        raise ValueError(f"batch size m={m} must not exceed n={n}")
    perm = generator(key.seed, key.kind, key.step).permutation(n)
    n_full, rem = divmod(n, m)
    sizes = [m] * n_full + ([rem] if rem else [])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    block_of = np.empty(n, dtype=np.int64)
    for b in range(len(sizes)):
        block_of[perm[offsets[b] : offsets[b + 1]]] = b
    return BatchPlan(
        step=key.step,
        m=m,
        n=n,
        scheme="partition",
        members=perm,
        offsets=offsets.astype(np.int64),
        block_of=block_of,
    )


def make_independent_batches(n: int, m: int, key: RngKey) -> BatchPlan:
    """Per-particle batches: each row is m indices drawn uniformly without
    replacement from {0..n-1} (the draw is not conditioned to contain i)."""
    if m <= 1:
        raise ValueError(f"batch size m={m} must be > 1")
    if m > n:
        raise ValueError(f"batch size m={m} must not exceed n={n}")
    rng = generator(key.seed, key.kind, key.step)
    members = rng.integers(0, n, size=(n, m))
    # reject rows with duplicates; at m << n almost none need resampling
    while True:
        srt = np.sort(members, axis=1)
        bad = np.nonzero((np.diff(srt, axis=1) == 0).any(axis=1))[0]
        if bad.size == 0:
            break
        members[bad] = rng.integers(0, n, size=(bad.size, m))
    return BatchPlan(step=key.step, m=m, n=n, scheme="independent", members=members)


# ---------------------------------------------------------------------------
# full O(n^2) drift
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def _full_drift_velocity_kernel(v, delta):
    """Drift for kernels acting on velocity distance (delta=inf -> constant)."""
    n, d = v.shape
    out = np.empty((n, d))
    d2max = delta * delta
    for i in prange(n):
        acc = np.zeros(d)
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                dv = v[j, k] - v[i, k]
                r2 += dv * dv
            if r2 <= d2max:
                for k in range(d):
                    acc[k] += v[j, k] - v[i, k]
        for k in range(d):
            out[i, k] = acc[k] / n
    return out


@njit(parallel=True, cache=True)
def _full_drift_spatial_kernel(x, v, xi2, beta):
    """Drift for the distance-decaying kernel (xi^2 + |x_i-x_j|^2)^(-beta)."""
    n, d = v.shape
    dx = x.shape[1]
    out = np.empty((n, d))
    for i in prange(n):
        acc = np.zeros(d)
        for j in range(n):
            r2 = 0.0
            for k in range(dx):
                dd = x[i, k] - x[j, k]
                r2 += dd * dd
            p = (xi2 + r2) ** (-beta)
            for k in range(d):
                acc[k] += p * (v[j, k] - v[i, k])
        for k in range(d):
            out[i, k] = acc[k] / n
    return out


def full_drift_all(e: Ensemble, kernel: KernelSpec) -> np.ndarray:
    """(n, dim_v) array of full pairwise drifts, one plain quadratic sum."""
    if kernel.variant is KernelVariant.CONSTANT:
        return _full_drift_velocity_kernel(e.v, np.inf)
    if kernel.variant is KernelVariant.BOUNDED_CONFIDENCE:
        return _full_drift_velocity_kernel(e.v, kernel.delta)
    if kernel.variant is KernelVariant.CUCKER_SMALE:
        return _full_drift_spatial_kernel(e.x, e.v, kernel.xi * kernel.xi, kernel.beta)
    # custom kernel: chunked numpy fallback
    n = e.n
    out = np.empty_like(e.v)
    chunk = max(1, min(n, 2**22 // max(n, 1)))
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        p = np.asarray(
            kernel.func(
                e.x[a:b, None, :], e.x[None, :, :], e.v[a:b, None, :], e.v[None, :, :]
            ),
            dtype=float,
        )
        dv = e.v[None, :, :] - e.v[a:b, None, :]
        out[a:b] = (p[:, :, None] * dv).sum(axis=1) / n
    return out


def full_drift(e: Ensemble, kernel: KernelSpec, i: int) -> np.ndarray:
    """Full drift of particle i: (1/n) sum_j P_ij (v_j - v_i)."""
    if not 0 <= i < e.n:
        raise IndexError(f"particle index {i} out of range")
    acc = np.zeros(e.dim_v)
    for j in range(e.n):
        p = eval_kernel(kernel, e.x[i], e.x[j], e.v[i], e.v[j])
        acc += p * (e.v[j] - e.v[i])
    return acc / e.n


# ---------------------------------------------------------------------------
# batch drift
# ---------------------------------------------------------------------------


def _pair_weights(kernel: KernelSpec, xb: np.ndarray, vb: np.ndarray) -> np.ndarray:
    """Kernel weights for all ordered pairs inside stacked batches.

    ``vb`` has shape (B, M, dim_v); returns (B, M, M) with entry [b, i, j]
    the weight between members i and j of batch b.
    """
    if kernel.variant is KernelVariant.CONSTANT:
        return np.ones(vb.shape[:2] + (vb.shape[1],))
    if kernel.variant is KernelVariant.BOUNDED_CONFIDENCE:
        dv = vb[:, None, :, :] - vb[:, :, None, :]
        r2 = np.sum(dv * dv, axis=-1)
        return (r2 <= kernel.delta * kernel.delta).astype(float)
    if kernel.variant is KernelVariant.CUCKER_SMALE:
        dx = xb[:, None, :, :] - xb[:, :, None, :]
        r2 = np.sum(dx * dx, axis=-1)
        return np.exp(-kernel.beta * np.log(kernel.xi * kernel.xi + r2))
    return np.asarray(
        kernel.func(
            xb[:, :, None, :], xb[:, None, :, :], vb[:, :, None, :], vb[:, None, :, :]
        ),
        dtype=float,
    )


def _block_arrays(e: Ensemble, plan: BatchPlan):
    """Stack equally-sized batches as (B, M, dim) arrays.

    Partition plans yield the full blocks plus an optional remainder block
    handled separately; independent plans yield the (n, m) gather directly.
    """
    if plan.scheme == "independent":
        idx = plan.members
        return [(idx, e.x[idx], e.v[idx])]
    out = []
    n_full = plan.n // plan.m
    if n_full:
        idx = plan.members[: n_full * plan.m].reshape(n_full, plan.m)
        out.append((idx, e.x[idx], e.v[idx]))
    if plan.n % plan.m:
        idx = plan.members[n_full * plan.m :].reshape(1, -1)
        out.append((idx, e.x[idx], e.v[idx]))
    return out


def batch_drift_all(
    e: Ensemble, kernel: KernelSpec, plan: BatchPlan, divisor_excludes_self: bool = False
) -> np.ndarray:
    """(n, dim_v) array of batch drifts under ``plan``.

    The divisor is the actual batch size (self term contributes zero), or
    size - 1 when ``divisor_excludes_self`` is set.
    """
    if plan.scheme == "independent":
        return _independent_rows(e, kernel, plan, divisor_excludes_self)
    out = np.empty_like(e.v)
    for idx, xb, vb in _block_arrays(e, plan):
        p = _pair_weights(kernel, xb, vb)
        dv = vb[:, None, :, :] - vb[:, :, None, :]  # [b, i, j] = v_j - v_i
        size = idx.shape[1]
        div = size - 1 if divisor_excludes_self else size
        if div <= 0:
            drift = np.zeros_like(vb)
        else:
            drift = np.einsum("bij,bijk->bik", p, dv) / div
        out[idx.reshape(-1)] = drift.reshape(-1, e.dim_v)
    return out


def _independent_rows(
    e: Ensemble, kernel: KernelSpec, plan: BatchPlan, divisor_excludes_self: bool
) -> np.ndarray:
    """Batch drift when every particle owns its own (m,) index row."""
    idx = plan.members  # (n, m)
    vj = e.v[idx]  # (n, m, dim_v)
    vi = e.v[:, None, :]
    dv = vj - vi
    if kernel.variant is KernelVariant.CONSTANT:
        p = np.ones(idx.shape)
    elif kernel.variant is KernelVariant.BOUNDED_CONFIDENCE:
        r2 = np.sum(dv * dv, axis=-1)
        p = (r2 <= kernel.delta * kernel.delta).astype(float)
    elif kernel.variant is KernelVariant.CUCKER_SMALE:
        dxp = e.x[idx] - e.x[:, None, :]
        r2 = np.sum(dxp * dxp, axis=-1)
        p = np.exp(-kernel.beta * np.log(kernel.xi * kernel.xi + r2))
    else:
        p = np.asarray(
            kernel.func(e.x[:, None, :], e.x[idx], e.v[:, None, :], vj), dtype=float
        )
    div = plan.m - 1 if divisor_excludes_self else plan.m
    return (p[:, :, None] * dv).sum(axis=1) / div


def batch_drift(
    e: Ensemble,
    kernel: KernelSpec,
    plan: BatchPlan,
    i: int,
    divisor_excludes_self: bool = False,
) -> np.ndarray:
    """Batch drift of particle i: (1/|S|) sum_{j in S(i)} P_ij (v_j - v_i)."""
    if not 0 <= i < e.n:
        raise IndexError(f"particle index {i} out of range")
    members = plan.batch_of(i)
    acc = np.zeros(e.dim_v)
    for j in members:
        p = eval_kernel(kernel, e.x[i], e.x[j], e.v[i], e.v[j])
        acc += p * (e.v[j] - e.v[i])
    div = len(members) - 1 if divisor_excludes_self else len(members)
    if div <= 0:
        return np.zeros(e.dim_v)
    return acc / div


def batch_mean_velocity(e: Ensemble, plan: BatchPlan, i: int) -> np.ndarray:
    """Mean velocity over the batch assigned to particle i."""
    return e.v[plan.batch_of(i)].mean(axis=0)


def batch_means_all(e: Ensemble, plan: BatchPlan) -> np.ndarray:
    """(n, dim_v) array of per-particle batch mean velocities."""
    if plan.scheme == "independent":
        return e.v[plan.members].mean(axis=1)
    out = np.empty_like(e.v)
    for idx, _, vb in _block_arrays(e, plan):
        means = vb.mean(axis=1)  # (B, dim_v)
        out[idx] = means[:, None, :]
    return out

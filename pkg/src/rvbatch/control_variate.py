"""Control-variate machinery for the reduced-variance batch method.

The batch drift of particle i averages samples y_j = P_ij (v_j - v_i) over
its batch.  A surrogate weight pt(x_i, v_i) supplies correlated samples
z_j = pt_i (v_j - u_ref) whose mean over the whole ensemble is known, so
subtracting lam * pt_i * (U_M - u_ref) cancels batch fluctuations without
changing the expectation.  The scale ``lam`` is the regression coefficient
cov(y, z)/var(z), estimated each step from the batch members themselves to
keep the total cost O(MN).

Statistics can be pooled into one scalar lam per step, estimated per
particle, or estimated per velocity cluster (for models whose long-time
state is a set of isolated clusters, each with its own conserved mean).

The per-particle operations (:func:`cv_drift`, :func:`collect_cv_samples`,
:func:`multi_cluster_cv_drift`) are the readable reference; :func:`cv_step`
is the fused whole-ensemble path used by the integrator and is tested
against them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .batch import (
    BatchPlan,
    _block_arrays,
    _pair_weights,
    batch_drift,
    batch_mean_velocity,
)
from .ensemble import Ensemble
from .models import KernelSpec, KernelVariant, SurrogateSpec, eval_kernel, eval_surrogate

__all__ = [
    "CvConfig",
    "CvState",
    "estimate_lambda",
    "collect_cv_samples",
    "cv_drift",
    "multi_cluster_cv_drift",
    "assign_clusters",
    "cluster_means",
    "cv_step",
]


@dataclass(frozen=True)
class CvConfig:
    """Knobs of the variance-reduction layer.

    lambda_mode          "scalar" pools every batch sample into one lam per
                         step; "per_particle" estimates lam_i from particle
                         i's own batch (m - 1 samples).
    variance_floor       below this sample variance of z, lam is set to 0.
    lambda_clamp         raw estimates are clamped into this interval.
    reference_mean_mode  "frozen" fixes u_ref at the initial ensemble mean
                         (valid when the dynamics conserve it); "recomputed"
                         re-evaluates the O(n) mean every step.
    clusters             optional velocity cluster centers; when present,
                         lam and the reference means are tracked per cluster
                         (nearest-center assignment) and statistics are
                         restricted to same-cluster batch members.
    pinned_lambda        bypass estimation entirely with a fixed value.
    """

    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    lambda_mode: str = "scalar"
    variance_floor: float = 1e-12
    lambda_clamp: tuple[float, float] = (-5.0, 5.0)
    reference_mean_mode: str = "recomputed"
    clusters: Optional[tuple[float, ...]] = None
    pinned_lambda: Optional[float] = None

    def __post_init__(self):
        if self.variance_floor <= 0:
            raise ValueError("variance_floor must be > 0")
        lo, hi = self.lambda_clamp
        if not lo <= 0 <= hi:
            raise ValueError("lambda_clamp must contain 0")
        if self.lambda_mode not in ("scalar", "per_particle"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.reference_mean_mode not in ("frozen", "recomputed"):
            raise ValueError(f"unknown reference_mean_mode {self.reference_mean_mode!r}")


@dataclass
class CvState:
    """Per-step control-variate estimate and diagnostics.

    ``lam`` is a 0-d array in scalar mode, (K,) with K clusters, or (n,)
    in per-particle mode.  ``clamp_count`` counts estimates that fell
    outside the clamp interval this step.
    """

    lam: np.ndarray
    cov_hat: np.ndarray
    var_hat: np.ndarray
    clamp_count: int = 0

    @property
    def lambda_mean(self) -> float:
        return float(np.mean(self.lam))


def _apply_floor_and_clamp(lam_raw, var_hat, cfg: CvConfig):
    """Zero degenerate estimates, clamp the rest; returns (lam, n_clamped)."""
    lam_raw = np.asarray(lam_raw, dtype=float)
    var_hat = np.asarray(var_hat, dtype=float)
    lo, hi = cfg.lambda_clamp
    degenerate = ~np.isfinite(lam_raw) | (var_hat < cfg.variance_floor)
    lam = np.where(degenerate, 0.0, lam_raw)
    clamped = (~degenerate) & ((lam < lo) | (lam > hi))
    lam = np.clip(lam, lo, hi)
    return lam, int(np.count_nonzero(clamped))


def _moments(y: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    """Sample covariance and variance with the 1/(L-1) correction."""
    yc = y - y.mean()
    zc = z - z.mean()
    cov = float(np.dot(yc, zc) / (y.size - 1))
    var = float(np.dot(zc, zc) / (y.size - 1))
    return cov, var


def estimate_lambda(y_samples, z_samples, cfg: CvConfig):
    """Regression coefficient cov(y, z)/var(z) from paired samples.

    Returns (lam, cov_hat, var_hat) with lam floored to 0 when var_hat is
    degenerate and clamped into cfg.lambda_clamp otherwise.
    """
    y = np.asarray(y_samples, dtype=float).ravel()
    z = np.asarray(z_samples, dtype=float).ravel()
    if y.shape != z.shape:
        raise ValueError("y and z sample lists must have equal length")
    if y.size < 2:
        raise ValueError("need at least two paired samples")
    cov, var = _moments(y, z)
    lam_raw = cov / var if var > 0 else np.nan
    lam, _ = _apply_floor_and_clamp(lam_raw, var, cfg)
    return float(lam), cov, var


def _surrogate_scalar(surrogate: SurrogateSpec, x_i, v_i) -> float:
    return float(np.asarray(eval_surrogate(surrogate, x_i, v_i)).reshape(-1)[0])


def collect_cv_samples(
    e: Ensemble,
    kernel: KernelSpec,
    surrogate: SurrogateSpec,
    plan: BatchPlan,
    u_ref: np.ndarray,
    i: int,
):
    """Paired (y, z) samples for particle i from its batch, self excluded.

    y_j = P_ij (v_j - v_i), z_j = pt_i (v_j - u_ref) for j in S(i) \\ {i}.
    Vector velocities contribute one pair per component.  A batch reduced
    to {i} yields empty arrays; the caller falls back to lam = 0.
    """
    u_ref = np.atleast_1d(np.asarray(u_ref, dtype=float))
    pt_i = _surrogate_scalar(surrogate, e.x[i], e.v[i])
    ys, zs = [], []
    for j in plan.batch_of(i):
        if j == i:
            continue
        p = eval_kernel(kernel, e.x[i], e.x[j], e.v[i], e.v[j])
        ys.extend(p * (e.v[j] - e.v[i]))
        zs.extend(pt_i * (e.v[j] - u_ref))
    return np.asarray(ys, dtype=float), np.asarray(zs, dtype=float)


def cv_drift(
    e: Ensemble,
    kernel: KernelSpec,
    surrogate: SurrogateSpec,
    plan: BatchPlan,
    u_ref: np.ndarray,
    lambda_i: float,
    i: int,
) -> np.ndarray:
    """Corrected batch drift of particle i:
    batch_drift(i) - lambda_i * pt_i * (U_{M,i} - u_ref)."""
    if not np.isfinite(lambda_i):
        raise ValueError("lambda must be finite")
    u_ref = np.atleast_1d(np.asarray(u_ref, dtype=float))
    pt_i = _surrogate_scalar(surrogate, e.x[i], e.v[i])
    u_m = batch_mean_velocity(e, plan, i)
    return batch_drift(e, kernel, plan, i) - lambda_i * pt_i * (u_m - u_ref)


def assign_clusters(v: np.ndarray, centers) -> np.ndarray:
    """Nearest-center cluster label per particle (first velocity component)."""
    centers = np.asarray(centers, dtype=float).reshape(-1)
    if centers.size < 1:
        raise ValueError("need at least one cluster center")
    d = np.abs(v[:, :1] - centers[None, :])
    return np.argmin(d, axis=1)


def cluster_means(v: np.ndarray, labels: np.ndarray, n_clusters: int) -> np.ndarray:
    """(K, dim_v) conditional means; rows of empty clusters are NaN."""
    out = np.full((n_clusters, v.shape[1]), np.nan)
    for k in range(n_clusters):
        sel = labels == k
        if np.any(sel):
            out[k] = v[sel].mean(axis=0)
    return out


def multi_cluster_cv_drift(
    e: Ensemble,
    kernel: KernelSpec,
    surrogate: SurrogateSpec,
    plan: BatchPlan,
    cluster_means_n,
    cluster_means_m,
    lambda_k,
    i: int,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Batch drift of particle i corrected with its own cluster's statistics.

    ``cluster_means_n`` are ensemble-level conditional means (K, dim_v) and
    ``cluster_means_m`` the means of i's batch restricted to each cluster;
    NaN rows mark clusters absent from the batch, in which case the
    correction is dropped.  ``labels`` defaults to nearest-center assignment
    against the surrogate's configured centers.
    """
    if labels is None:
        labels = assign_clusters(e.v, surrogate.clusters)
    k = int(labels[i])
    lam = float(np.asarray(lambda_k, dtype=float).reshape(-1)[k])
    u_n_k = np.atleast_2d(np.asarray(cluster_means_n, dtype=float))[k]
    u_m_k = np.atleast_2d(np.asarray(cluster_means_m, dtype=float))[k]
    base = batch_drift(e, kernel, plan, i)
    if not (np.all(np.isfinite(u_m_k)) and np.all(np.isfinite(u_n_k))):
        return base
    pt_i = _surrogate_scalar(surrogate, e.x[i], e.v[i])
    return base - lam * pt_i * (u_m_k - u_n_k)


# ---------------------------------------------------------------------------
# fused whole-ensemble path used by the integrator
# ---------------------------------------------------------------------------


def _finish_scalar(sums, cfg: CvConfig):
    """Pooled regression from accumulated (L, sy, sz, syz, szz)."""
    length, sy, sz, syz, szz = sums
    if length < 2:
        return np.asarray(0.0), np.asarray(0.0), np.asarray(0.0), 0
    cov = (syz - sy * sz / length) / (length - 1)
    var = (szz - sz * sz / length) / (length - 1)
    lam_raw = cov / var if var > 0 else np.nan
    lam, n_clamped = _apply_floor_and_clamp(lam_raw, var, cfg)
    return lam, np.asarray(cov), np.asarray(var), n_clamped


def _finish_grouped(cnt, sy, sz, syz, szz, cfg: CvConfig):
    """Per-group regression; groups with < 2 samples get lam 0."""
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = (syz - sy * sz / cnt) / (cnt - 1)
        var = (szz - sz * sz / cnt) / (cnt - 1)
        lam_raw = np.where(var > 0, cov / var, np.nan)
    usable = cnt >= 2
    lam_raw = np.where(usable, lam_raw, 0.0)
    cov = np.where(usable, cov, 0.0)
    var = np.where(usable, var, 0.0)
    lam, n_clamped = _apply_floor_and_clamp(lam_raw, var, cfg)
    return lam, cov, var, n_clamped


def cv_step(
    e: Ensemble,
    kernel: KernelSpec,
    plan: BatchPlan,
    cfg: CvConfig,
    u_ref: Optional[np.ndarray] = None,
    cluster_ref_means: Optional[np.ndarray] = None,
    divisor_excludes_self: bool = False,
) -> tuple[np.ndarray, CvState]:
    """Corrected batch drift for every particle plus the step's CvState.

    Computes the plain batch drift and the control-variate correction in a
    single pass over the batch pair weights.  ``u_ref`` is the (dim_v,)
    reference mean; with clusters configured, ``cluster_ref_means``
    (K, dim_v) replaces it.
    """
    n = e.n
    pt = np.asarray(eval_surrogate(cfg.surrogate, e.x, e.v), dtype=float).reshape(n, -1)[:, 0]
    labels = None
    if cfg.clusters is not None:
        labels = assign_clusters(e.v, cfg.clusters)
        refs = np.asarray(cluster_ref_means, dtype=float)
        ref_i = refs[labels]  # (n, dim_v), may contain NaN for empty clusters
    else:
        ref_i = np.broadcast_to(np.atleast_1d(np.asarray(u_ref, dtype=float)), e.v.shape)

    if plan.scheme == "independent":
        base, u_own, stats = _fused_independent(e, kernel, plan, cfg, pt, ref_i, labels,
                                                divisor_excludes_self)
    else:
        base, u_own, stats = _fused_partition(e, kernel, plan, cfg, pt, ref_i, labels,
                                              divisor_excludes_self)

    if cfg.pinned_lambda is not None:
        lam = np.asarray(float(cfg.pinned_lambda))
        lam_i = np.full(n, float(lam))
        state = CvState(lam=lam, cov_hat=np.asarray(np.nan), var_hat=np.asarray(np.nan))
    elif cfg.clusters is not None:
        lam, cov, var, n_clamped = _finish_grouped(*stats, cfg)
        lam_i = lam[labels]
        state = CvState(lam=lam, cov_hat=cov, var_hat=var, clamp_count=n_clamped)
    elif cfg.lambda_mode == "scalar":
        lam, cov, var, n_clamped = _finish_scalar(stats, cfg)
        lam_i = np.full(n, float(lam))
        state = CvState(lam=lam, cov_hat=cov, var_hat=var, clamp_count=n_clamped)
    else:
        lam, cov, var, n_clamped = _finish_grouped(*stats, cfg)
        lam_i = lam
        state = CvState(lam=lam, cov_hat=cov, var_hat=var, clamp_count=n_clamped)

    corr = lam_i[:, None] * pt[:, None] * (u_own - ref_i)
    corr = np.where(np.isfinite(corr), corr, 0.0)
    return base - corr, state


def _need_stats(cfg: CvConfig) -> bool:
    return cfg.pinned_lambda is None


def _fused_independent(e, kernel, plan, cfg, pt, ref_i, labels, divisor_excludes_self):
    """(base drift, per-particle reference batch mean, lam statistics) for
    per-particle batches stored as an (n, m) index matrix."""
    idx = plan.members
    n, m = idx.shape
    vj = e.v[idx]  # (n, m, D)
    vi = e.v[:, None, :]
    dv = vj - vi
    if kernel.variant is KernelVariant.CONSTANT:
        p = np.ones((n, m))
    elif kernel.variant is KernelVariant.BOUNDED_CONFIDENCE:
        r2 = np.sum(dv * dv, axis=-1)
        p = (r2 <= kernel.delta * kernel.delta).astype(float)
    elif kernel.variant is KernelVariant.CUCKER_SMALE:
        dxp = e.x[idx] - e.x[:, None, :]
        r2 = np.sum(dxp * dxp, axis=-1)
        p = np.exp(-kernel.beta * np.log(kernel.xi * kernel.xi + r2))
    else:
        p = np.asarray(kernel.func(e.x[:, None, :], e.x[idx], vi, vj), dtype=float)
    y = p[:, :, None] * dv  # (n, m, D)
    div = m - 1 if divisor_excludes_self else m
    base = y.sum(axis=1) / div

    valid = idx != np.arange(n)[:, None]  # exclude accidental self pairs
    if labels is not None:
        same = labels[idx] == labels[:, None]
        u_own = _masked_mean(vj, valid_mask=same)
        valid = valid & same
    else:
        u_own = vj.mean(axis=1)

    stats = None
    if _need_stats(cfg):
        if labels is None and cfg.lambda_mode == "scalar":
            stats = _scalar_stats_from_rows(e, idx, y, vj, pt, ref_i, valid)
        else:
            z = pt[:, None, None] * (vj - ref_i[:, None, :])
            stats = _accumulate(y, z, valid, labels, e, cfg)
    return base, u_own, stats


def _fused_partition(e, kernel, plan, cfg, pt, ref_i, labels, divisor_excludes_self):
    """Same contract as :func:`_fused_independent` for partition plans."""
    n = e.n
    base = np.zeros_like(e.v)
    u_own = np.full_like(e.v, np.nan)
    acc = _StatAcc(e, cfg, labels)
    for idx, xb, vb in _block_arrays(e, plan):
        bsz, m = idx.shape
        p = _pair_weights(kernel, xb, vb)  # (B, M, M)
        dv = vb[:, None, :, :] - vb[:, :, None, :]  # [b, i, j] = v_j - v_i
        y = p[:, :, :, None] * dv  # (B, M, M, D)
        div = m - 1 if divisor_excludes_self else m
        drift = y.sum(axis=2) / div if div > 0 else np.zeros_like(vb)
        base[idx.reshape(-1)] = drift.reshape(-1, e.dim_v)

        if labels is not None:
            lab = labels[idx]  # (B, M)
            same = lab[:, :, None] == lab[:, None, :]  # (B, M, M)
            cnt = same.sum(axis=2)
            sums = np.einsum("bij,bjd->bid", same.astype(float), vb)
            with np.errstate(invalid="ignore"):
                mk = sums / cnt[:, :, None]
            u_own[idx.reshape(-1)] = mk.reshape(-1, e.dim_v)
        else:
            u_own[idx.reshape(-1)] = np.repeat(vb.mean(axis=1), m, axis=0)

        if m >= 2 and _need_stats(cfg):
            pt_b = pt[idx]  # (B, M)
            ref_b = ref_i[idx.reshape(-1)].reshape(bsz, m, -1)  # (B, M, D)
            z = pt_b[:, :, None, None] * (vb[:, None, :, :] - ref_b[:, :, None, :])
            valid = np.broadcast_to(~np.eye(m, dtype=bool), (bsz, m, m))
            if labels is not None:
                valid = valid & same
            acc.add_block(idx, y, z, valid)
    return base, u_own, acc.result()


def _masked_mean(vj, valid_mask):
    cnt = valid_mask.sum(axis=1)
    sums = np.einsum("nm,nmd->nd", valid_mask.astype(float), vj)
    with np.errstate(invalid="ignore"):
        out = sums / cnt[:, None]
    return np.where(cnt[:, None] > 0, out, np.nan)


def _scalar_stats_from_rows(e, idx, y, vj, pt, ref_i, valid):
    """Pooled (L, sy, sz, syz, szz) without materializing the z tensor.

    Uses sum_j z_ij = pt_i (sum_j v_j - L_i r_i) and the analogous closed
    forms for the quadratic sums; y vanishes on invalid self pairs so its
    sums need no correction.
    """
    n, m = idx.shape
    cnt_self = (m - valid.sum(axis=1)).astype(float)  # self hits per row
    l_row = m - cnt_self
    sy_row = y.sum(axis=1)  # (n, D)
    syv_row = (y * vj).sum(axis=1)
    sv_row = vj.sum(axis=1) - cnt_self[:, None] * e.v
    svv_row = (vj * vj).sum(axis=1) - cnt_self[:, None] * e.v * e.v
    w = pt[:, None]
    sz_row = w * (sv_row - l_row[:, None] * ref_i)
    syz_row = w * (syv_row - ref_i * sy_row)
    szz_row = w * w * (
        svv_row - 2.0 * ref_i * sv_row + l_row[:, None] * ref_i * ref_i
    )
    length = float(l_row.sum()) * e.dim_v
    return (
        length,
        float(sy_row.sum()),
        float(sz_row.sum()),
        float(syz_row.sum()),
        float(szz_row.sum()),
    )


def _accumulate(y, z, valid, labels, e, cfg):
    """Turn (n, m, D) sample tensors into the structure _finish_* expects."""
    if cfg.clusters is None and cfg.lambda_mode == "scalar":
        # y vanishes on the (rare) invalid self pairs, so only the z sums
        # need explicit correction; avoids masking the full tensors
        length = float(valid.sum()) * e.dim_v
        bad = ~valid
        if bad.any():
            z_bad = z[bad]
            sz_corr = z_bad.sum()
            szz_corr = (z_bad * z_bad).sum()
        else:
            sz_corr = szz_corr = 0.0
        return (
            length,
            y.sum(),
            z.sum() - sz_corr,
            (y * z).sum(),
            (z * z).sum() - szz_corr,
        )
    w = valid[:, :, None].astype(float)
    yw = y * w
    zw = z * w
    if cfg.clusters is not None:
        k_n = len(cfg.clusters)
        cnt_row = valid.sum(axis=1) * e.dim_v
        cnt = np.bincount(labels, weights=cnt_row, minlength=k_n)
        sy = np.bincount(labels, weights=yw.sum(axis=(1, 2)), minlength=k_n)
        sz = np.bincount(labels, weights=zw.sum(axis=(1, 2)), minlength=k_n)
        syz = np.bincount(labels, weights=(yw * z).sum(axis=(1, 2)), minlength=k_n)
        szz = np.bincount(labels, weights=(zw * z).sum(axis=(1, 2)), minlength=k_n)
        return cnt, sy, sz, syz, szz
    cnt = valid.sum(axis=1).astype(float) * e.dim_v
    return (
        cnt,
        yw.sum(axis=(1, 2)),
        zw.sum(axis=(1, 2)),
        (yw * z).sum(axis=(1, 2)),
        (zw * z).sum(axis=(1, 2)),
    )


class _StatAcc:
    """Accumulates lam statistics across the (unequal) partition blocks."""

    def __init__(self, e: Ensemble, cfg: CvConfig, labels):
        self.e = e
        self.cfg = cfg
        self.labels = labels
        n_groups = None
        if cfg.clusters is not None:
            n_groups = len(cfg.clusters)
        elif cfg.lambda_mode == "per_particle":
            n_groups = e.n
        self.n_groups = n_groups
        if n_groups is None:
            self.sums = [0.0, 0.0, 0.0, 0.0, 0.0]
        else:
            self.sums = [np.zeros(n_groups) for _ in range(5)]

    def add_block(self, idx, y, z, valid):
        if self.n_groups is None:
            # scalar pooling: y is zero wherever valid is False (the block
            # diagonal), so only the z sums need the diagonal removed
            bad = ~valid
            z_bad = z[bad]
            self.sums[0] += float(valid.sum()) * self.e.dim_v
            self.sums[1] += y.sum()
            self.sums[2] += z.sum() - z_bad.sum()
            self.sums[3] += (y * z).sum()
            self.sums[4] += (z * z).sum() - (z_bad * z_bad).sum()
            return
        w = valid[:, :, :, None].astype(float)
        yw = y * w
        zw = z * w
        if self.cfg.clusters is not None:
            groups = self.labels[idx].reshape(-1)  # owner labels, (B*M,)
        else:
            groups = idx.reshape(-1)
        cnt_row = valid.sum(axis=2).reshape(-1) * self.e.dim_v
        k = self.n_groups
        self.sums[0] += np.bincount(groups, weights=cnt_row, minlength=k)
        self.sums[1] += np.bincount(groups, weights=yw.sum(axis=(2, 3)).reshape(-1), minlength=k)
        self.sums[2] += np.bincount(groups, weights=zw.sum(axis=(2, 3)).reshape(-1), minlength=k)
        self.sums[3] += np.bincount(groups, weights=(yw * z).sum(axis=(2, 3)).reshape(-1), minlength=k)
        self.sums[4] += np.bincount(groups, weights=(zw * z).sum(axis=(2, 3)).reshape(-1), minlength=k)

    def result(self):
        return tuple(self.sums)

"""Time stepping and method dispatch (full / rbm / rvrbm).

All stochastic inputs of a run are pure functions of (seed, stream kind,
particle, step), so runs of different methods with equal seeds share the
initial sample, the per-step batch plans and the per-particle Wiener
increments.  That common-random-numbers coupling is what isolates method
error when trajectories are compared.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import analysis
from .batch import batch_drift_all, full_drift_all, make_batches, make_independent_batches
from .control_variate import CvConfig, CvState, cluster_means, assign_clusters, cv_step
from .ensemble import Ensemble, init_ensemble, wiener_block
from .models import DiffusionVariant, ModelSpec, eval_diffusion_coefficient
from .rng import RngKey, StreamKind

__all__ = ["SimConfig", "RunOutput", "SimulationError", "step", "run", "coupled_run"]

METHODS = ("full", "rbm", "rvrbm")


class SimulationError(RuntimeError):
    """Raised when the particle state degenerates (NaN/Inf) mid-run."""


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one simulation.

    batch_scheme selects how batches are drawn for rbm/rvrbm: "partition"
    (one shuffled partition per step; conserves the mean velocity exactly
    for symmetric kernels) or "independent" (each particle draws its own
    batch; the batch noise is visible in the mean, which is what the
    mean-error diagnostics of the batch methods measure).

    error_reference chooses the target of the mean-error diagnostic:
    "sample" compares against the run's own conserved initial sample mean,
    "law" against the initial law's mean.
    """

    model: ModelSpec
    method: str = "full"
    cv: Optional[CvConfig] = None
    n: int = 1000
    m: int = 10
    dt: float = 1e-2
    t_end: float = 1.0
    seed: int = 0
    record_every: int = 10
    batch_scheme: str = "partition"
    divisor_excludes_self: bool = False
    error_reference: str = "sample"
    kde: Optional[analysis.KdeConfig] = None
    snapshot_times: tuple[float, ...] = ()
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.method in ("rbm", "rvrbm"):
            if not 1 < self.m <= self.n:
                raise ValueError(f"batch size m={self.m} must satisfy 1 < m <= n={self.n}")
        if self.method == "rvrbm" and self.cv is None:
            raise ValueError("method rvrbm requires a control-variate config")
        if self.batch_scheme not in ("partition", "independent"):
            raise ValueError(f"unknown batch_scheme {self.batch_scheme!r}")
        if self.error_reference not in ("sample", "law"):
            raise ValueError(f"unknown error_reference {self.error_reference!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class RunOutput:
    """Diagnostics time series of one simulation.

    clamp_count and clip_count are cumulative event counts up to each
    record time; lambda_mean is NaN before the first step and for
    methods without a control variate.
    """

    method: str
    times: np.ndarray
    mean_v: np.ndarray  # (records, dim_v)
    var_v: np.ndarray
    error: np.ndarray
    lambda_mean: np.ndarray
    clamp_count: np.ndarray
    clip_count: np.ndarray
    snapshots: dict = field(default_factory=dict)  # time -> DensityGrid
    wall_time: dict = field(default_factory=dict)
    true_mean: np.ndarray | None = None
    final: Ensemble | None = None


def _make_plan(cfg: SimConfig, step_index: int):
    key = RngKey(cfg.seed, StreamKind.BATCH_SHUFFLE, 0, step_index)
    if cfg.batch_scheme == "independent":
        return make_independent_batches(cfg.n, cfg.m, key)
    return make_batches(cfg.n, cfg.m, key)


def _frozen_refs(cfg: SimConfig, e0: Ensemble):
    """Reference means fixed at t = 0 for the frozen mode."""
    if cfg.cv is None:
        return None, None
    u0 = e0.v.mean(axis=0)
    refs = None
    if cfg.cv.clusters is not None:
        labels = assign_clusters(e0.v, cfg.cv.clusters)
        refs = cluster_means(e0.v, labels, len(cfg.cv.clusters))
    return u0, refs


def _advance(cfg: SimConfig, e: Ensemble, step_index: int, frozen):
    """One Euler-Maruyama step; returns (ensemble, cv_state, n_clipped)."""
    kernel = cfg.model.kernel
    cv_state = None
    if cfg.method == "full":
        drift = full_drift_all(e, kernel)
    elif cfg.method == "rbm":
        plan = _make_plan(cfg, step_index)
        drift = batch_drift_all(e, kernel, plan, cfg.divisor_excludes_self)
    else:
        plan = _make_plan(cfg, step_index)
        if cfg.cv.reference_mean_mode == "frozen":
            u_ref, cluster_refs = frozen
        else:
            u_ref = e.v.mean(axis=0)
            cluster_refs = None
            if cfg.cv.clusters is not None:
                labels = assign_clusters(e.v, cfg.cv.clusters)
                cluster_refs = cluster_means(e.v, labels, len(cfg.cv.clusters))
        drift, cv_state = cv_step(
            e,
            kernel,
            plan,
            cfg.cv,
            u_ref=u_ref,
            cluster_ref_means=cluster_refs,
            divisor_excludes_self=cfg.divisor_excludes_self,
        )

    new_v = e.v + cfg.dt * drift
    diffusion = cfg.model.diffusion
    if diffusion.variant is not DiffusionVariant.NONE:
        dw = wiener_block(cfg.seed, step_index, e.n, e.dim_v, cfg.dt)
        new_v = new_v + eval_diffusion_coefficient(diffusion, e.v) * dw

    n_clipped = 0
    if cfg.model.opinion_domain:
        outside = (new_v < -1.0) | (new_v > 1.0)
        n_clipped = int(np.count_nonzero(outside))
        if n_clipped:
            new_v = np.clip(new_v, -1.0, 1.0)

    new_x = e.x + cfg.dt * e.v if e.dim_x else e.x
    return Ensemble(x=new_x, v=new_v), cv_state, n_clipped


def step(
    e: Ensemble, cfg: SimConfig, cv: Optional[CvState] = None, step_index: int = 0
) -> Ensemble:
    """Advance one time step and return the new ensemble.

    For the frozen reference mode the reference mean is taken from the
    ensemble passed in, which matches running from t = 0; :func:`run`
    manages the frozen reference across a whole trajectory.
    """
    frozen = _frozen_refs(cfg, e)
    new_e, cv_state, _ = _advance(cfg, e, step_index, frozen)
    if cv is not None and cv_state is not None:
        cv.lam = cv_state.lam
        cv.cov_hat = cv_state.cov_hat
        cv.var_hat = cv_state.var_hat
        cv.clamp_count = cv_state.clamp_count
    return new_e


def _set_threads(threads: int):
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(max(1, min(threads, limit)))


def run(cfg: SimConfig) -> RunOutput:
    """Integrate to t_end, recording diagnostics every record_every steps."""
    t_start = time.perf_counter()
    _set_threads(cfg.threads)
    e = init_ensemble(cfg.model, cfg.n, cfg.seed)
    frozen = _frozen_refs(cfg, e)
    if cfg.error_reference == "sample":
        true_mean = e.v.mean(axis=0).copy()
    else:
        true_mean = np.asarray(cfg.model.law_mean, dtype=float)

    n_steps = cfg.n_steps
    snapshot_steps = {int(round(t / cfg.dt)): t for t in cfg.snapshot_times}
    record_steps = sorted(
        set(range(0, n_steps + 1, cfg.record_every)) | {n_steps} | set(snapshot_steps)
    )
    record_steps = [s for s in record_steps if 0 <= s <= n_steps]

    times, means, variances, errors = [], [], [], []
    lambdas, clamps, clips = [], [], []
    snapshots = {}
    wall = {"init": time.perf_counter() - t_start, "steps": 0.0, "diagnostics": 0.0}

    lam_now = np.nan
    clamp_total = 0
    clip_total = 0

    def record(k: int):
        t0 = time.perf_counter()
        if not (np.all(np.isfinite(e.v)) and np.all(np.isfinite(e.x))):
            raise SimulationError(f"non-finite state at step {k} (t={k * cfg.dt:g})")
        _, u, var = analysis.moments(e)
        times.append(k * cfg.dt)
        means.append(u)
        variances.append(var)
        errors.append(analysis.mean_error(e, true_mean))
        lambdas.append(lam_now)
        clamps.append(clamp_total)
        clips.append(clip_total)
        if k in snapshot_steps and cfg.kde is not None:
            snapshots[snapshot_steps[k]] = analysis.kde(e, cfg.kde)
        wall["diagnostics"] += time.perf_counter() - t0

    record_set = set(record_steps)
    if 0 in record_set:
        record(0)
    for k in range(n_steps):
        t0 = time.perf_counter()
        e, cv_state, n_clipped = _advance(cfg, e, k, frozen)
        wall["steps"] += time.perf_counter() - t0
        clip_total += n_clipped
        if cv_state is not None:
            lam_now = cv_state.lambda_mean
            clamp_total += cv_state.clamp_count
        if (k + 1) in record_set:
            record(k + 1)

    wall["total"] = time.perf_counter() - t_start
    return RunOutput(
        method=cfg.method,
        times=np.asarray(times),
        mean_v=np.asarray(means),
        var_v=np.asarray(variances),
        error=np.asarray(errors),
        lambda_mean=np.asarray(lambdas),
        clamp_count=np.asarray(clamps),
        clip_count=np.asarray(clips),
        snapshots=snapshots,
        wall_time=wall,
        true_mean=true_mean,
        final=e,
    )


def coupled_run(cfg_base: SimConfig, methods) -> list[RunOutput]:
    """One run per method, all fed identical initial data, batch plans and
    Wiener increments (common random numbers)."""
    methods = list(methods)
    if not methods:
        raise ValueError("methods list must not be empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}")
    return [run(replace(cfg_base, method=m)) for m in methods]

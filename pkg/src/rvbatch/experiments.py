"""Preset experiments, config resolution and the sweep/bench drivers.

The four presets reproduce the benchmark experiments at desk scale
(n = 10^4 by default; the reference runs use 10^5, one flag away):

test1a  deterministic bounded-confidence alignment, threshold delta = 1
        (or 0.5), constant surrogate, scalar lam, frozen reference mean.
test1b  bounded confidence with two separated opinion clusters at +-1/2,
        delta = 0.5, per-cluster lam against the conditional cluster means.
test2   bounded confidence with multiplicative noise sigma2 = 0.1.
test3   second-order spatial alignment ((1 + |x_i - x_j|^2)^-0.1 kernel),
        per-particle lam, partition batching (conserves the mean exactly).

The opinion presets draw per-particle independent batches: their headline
diagnostic is the batch-induced error of the ensemble mean, which a
partitioned shuffle cancels identically for these symmetric kernels.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import KdeConfig, rmse_over_repeats
from .control_variate import CvConfig
from .integrate import METHODS, SimConfig, run
from .models import (
    DiffusionSpec,
    DiffusionVariant,
    KernelSpec,
    KernelVariant,
    ModelSpec,
    SurrogateSpec,
    SurrogateVariant,
)

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "run_experiment", "bench"]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (exit code 1)."""


_SURROGATES = {
    "one": SurrogateVariant.ONE,
    "parabolic": SurrogateVariant.PARABOLIC,
    "two_cluster_quadratic": SurrogateVariant.TWO_CLUSTER_QUADRATIC,
}

_KERNELS = {
    "constant": KernelVariant.CONSTANT,
    "bounded_confidence": KernelVariant.BOUNDED_CONFIDENCE,
    "cucker_smale": KernelVariant.CUCKER_SMALE,
}

_DIFFUSIONS = {
    "none": DiffusionVariant.NONE,
    "constant": DiffusionVariant.CONSTANT,
    "opinion_multiplicative": DiffusionVariant.OPINION_MULTIPLICATIVE,
}


def _preset_test1a() -> dict:
    model = ModelSpec(
        name="test1a",
        kernel=KernelSpec(variant=KernelVariant.BOUNDED_CONFIDENCE, delta=1.0),
        init="uniform_opinion",
    )
    cv = CvConfig(lambda_mode="scalar", reference_mean_mode="frozen")
    return dict(
        model=model,
        cv=cv,
        sim=dict(n=10_000, m=10, dt=1e-2, t_end=5.0, record_every=10,
                 batch_scheme="independent"),
        methods=("rbm", "rvrbm"),
        snapshot_times=(1.0, 5.0),
        kde="opinion",
    )


def _preset_test1b() -> dict:
    clusters = (-0.5, 0.5)
    model = ModelSpec(
        name="test1b",
        kernel=KernelSpec(variant=KernelVariant.BOUNDED_CONFIDENCE, delta=0.5),
        init="two_cluster_opinion",
    )
    cv = CvConfig(
        surrogate=SurrogateSpec(clusters=clusters),
        lambda_mode="scalar",
        reference_mean_mode="frozen",
        clusters=clusters,
    )
    return dict(
        model=model,
        cv=cv,
        sim=dict(n=10_000, m=10, dt=1e-2, t_end=5.0, record_every=10,
                 batch_scheme="independent"),
        methods=("rbm", "rvrbm"),
        snapshot_times=(1.0, 5.0),
        kde="opinion",
    )


def _preset_test2() -> dict:
    model = ModelSpec(
        name="test2",
        kernel=KernelSpec(variant=KernelVariant.BOUNDED_CONFIDENCE, delta=1.0),
        diffusion=DiffusionSpec(variant=DiffusionVariant.OPINION_MULTIPLICATIVE, sigma2=0.1),
        init="uniform_opinion",
    )
    cv = CvConfig(lambda_mode="scalar", reference_mean_mode="recomputed")
    return dict(
        model=model,
        cv=cv,
        sim=dict(n=10_000, m=10, dt=1e-2, t_end=5.0, record_every=10,
                 batch_scheme="independent"),
        methods=("rbm", "rvrbm"),
        snapshot_times=(1.0, 5.0),
        kde="opinion",
    )


def _preset_test3() -> dict:
    model = ModelSpec(
        name="test3",
        kernel=KernelSpec(variant=KernelVariant.CUCKER_SMALE, xi=1.0, beta=0.1),
        init="uniform_phase_square",
        dim_x=1,
        opinion_domain=False,
    )
    cv = CvConfig(lambda_mode="per_particle", reference_mean_mode="frozen")
    return dict(
        model=model,
        cv=cv,
        sim=dict(n=10_000, m=10, dt=1e-2, t_end=10.0, record_every=10,
                 batch_scheme="partition"),
        methods=("rbm", "rvrbm"),
        snapshot_times=(1.0, 10.0),
        kde="phase",
    )


PRESETS = {
    "test1a": _preset_test1a,
    "test1b": _preset_test1b,
    "test2": _preset_test2,
    "test3": _preset_test3,
}


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment invocation.

    ``None`` fields fall back to the preset (or the built-in defaults for
    preset "custom").  ``sweep`` is (axis, values) with axis "n" or "m".
    """

    preset: Optional[str] = None
    methods: Optional[tuple[str, ...]] = None
    n: Optional[int] = None
    m: Optional[int] = None
    dt: Optional[float] = None
    t_end: Optional[float] = None
    seed: int = 0
    record_every: Optional[int] = None
    batch_scheme: Optional[str] = None
    error_reference: Optional[str] = None
    threads: int = 1
    # model overrides
    kernel: Optional[str] = None
    init: Optional[str] = None
    diffusion: Optional[str] = None
    delta: Optional[float] = None
    sigma2: Optional[float] = None
    xi: Optional[float] = None
    beta: Optional[float] = None
    # control-variate overrides
    surrogate: Optional[str] = None
    lambda_mode: Optional[str] = None
    reference_mean_mode: Optional[str] = None
    clusters: Optional[tuple[float, ...]] = None
    # sweep
    sweep: Optional[tuple[str, tuple[float, ...]]] = None
    repeats: int = 1
    # outputs
    outdir: Path = Path("out")
    plots: bool = True
    snapshot_times: Optional[tuple[float, ...]] = None
    kde_sigma2: Optional[float] = None
    kde_points: Optional[int] = None
    # bench
    bench_n_values: tuple[int, ...] = (5_000, 10_000, 20_000)
    bench_steps: int = 10

    def resolve(self):
        """Materialize (SimConfig, methods, snapshot times) for this config."""
        if self.preset is not None and self.preset != "custom":
            if self.preset not in PRESETS:
                raise ConfigError(
                    f"unknown preset {self.preset!r}; expected one of "
                    f"{sorted(PRESETS)} or 'custom'"
                )
            spec = PRESETS[self.preset]()
        elif self.kernel is not None or self.preset == "custom":
            spec = self._custom_spec()
        else:
            raise ConfigError("no preset and no model specified")

        model = spec["model"]
        cv = spec["cv"]
        sim = dict(spec["sim"])

        model = self._override_model(model)
        cv = self._override_cv(cv)
        for name in ("n", "m", "dt", "t_end", "record_every", "batch_scheme",
                     "error_reference"):
            val = getattr(self, name)
            if val is not None:
                sim[name] = val

        methods = self.methods or spec["methods"]
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; expected subset of {METHODS}")

        snapshot_times = (
            self.snapshot_times if self.snapshot_times is not None else spec["snapshot_times"]
        )
        kde = self._kde_config(spec["kde"], model, sim)
        # validate against the strictest method requested so batch-size
        # mistakes surface here, as configuration errors
        check_method = next((m for m in methods if m in ("rbm", "rvrbm")), methods[0])
        try:
            base = SimConfig(
                model=model,
                cv=cv,
                method=check_method,
                seed=self.seed,
                threads=self.threads,
                kde=kde,
                snapshot_times=tuple(snapshot_times),
                **sim,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return base, tuple(methods)

    def _custom_spec(self) -> dict:
        if self.kernel is None:
            raise ConfigError("preset 'custom' requires a kernel")
        model = ModelSpec(name="custom", init=self.init or "uniform_opinion")
        if self.init == "uniform_phase_square":
            model = replace(model, dim_x=1, opinion_domain=False)
        cv = CvConfig()
        return dict(
            model=model,
            cv=cv,
            sim=dict(n=1000, m=10, dt=1e-2, t_end=1.0, record_every=10,
                     batch_scheme="partition"),
            methods=("full",),
            snapshot_times=(),
            kde="opinion" if (self.init or "uniform_opinion") != "uniform_phase_square" else "phase",
        )

    def _override_model(self, model: ModelSpec) -> ModelSpec:
        kernel = model.kernel
        if self.kernel is not None:
            if self.kernel not in _KERNELS:
                raise ConfigError(f"unknown kernel {self.kernel!r}")
            kernel = KernelSpec(variant=_KERNELS[self.kernel])
        kparams = {}
        if self.delta is not None:
            kparams["delta"] = self.delta
        if self.xi is not None:
            kparams["xi"] = self.xi
        if self.beta is not None:
            kparams["beta"] = self.beta
        if kparams:
            try:
                kernel = replace(kernel, **kparams)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        diffusion = model.diffusion
        if self.diffusion is not None:
            if self.diffusion not in _DIFFUSIONS:
                raise ConfigError(f"unknown diffusion {self.diffusion!r}")
            var = _DIFFUSIONS[self.diffusion]
            s2 = self.sigma2 if self.sigma2 is not None else (model.diffusion.sigma2 or 0.1)
            diffusion = DiffusionSpec(variant=var, sigma2=s2 if var is not DiffusionVariant.NONE else 0.0)
        elif self.sigma2 is not None:
            if diffusion.variant is DiffusionVariant.NONE:
                raise ConfigError("sigma2 given but the model has no diffusion")
            diffusion = replace(diffusion, sigma2=self.sigma2)
        init = self.init or model.init
        model = replace(model, kernel=kernel, diffusion=diffusion, init=init)
        return model

    def _override_cv(self, cv: CvConfig) -> CvConfig:
        params = {}
        if self.surrogate is not None:
            if self.surrogate not in _SURROGATES:
                raise ConfigError(
                    f"unknown surrogate {self.surrogate!r}; expected one of {sorted(_SURROGATES)}"
                )
            params["surrogate"] = SurrogateSpec(
                variant=_SURROGATES[self.surrogate], clusters=cv.surrogate.clusters
            )
        if self.lambda_mode is not None:
            params["lambda_mode"] = self.lambda_mode
        if self.reference_mean_mode is not None:
            params["reference_mean_mode"] = self.reference_mean_mode
        if self.clusters is not None:
            params["clusters"] = tuple(self.clusters)
        if not params:
            return cv
        try:
            return replace(cv, **params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def _kde_config(self, kind: str, model: ModelSpec, sim: dict) -> KdeConfig:
        sigma2 = self.kde_sigma2 if self.kde_sigma2 is not None else 1e-5
        points = self.kde_points if self.kde_points is not None else (400 if kind == "opinion" else 100)
        if kind == "opinion":
            axes = (np.linspace(-1.1, 1.1, points),)
        else:
            # fixed phase-space window so densities of coupled methods share
            # a grid; covers the unit square transported for ~10 time units
            axes = (np.linspace(-3.2, 3.2, points), np.linspace(-1.2, 1.2, points))
        return KdeConfig(sigma2_kernel=sigma2, axes=axes)


# ---------------------------------------------------------------------------
# config file parsing
# ---------------------------------------------------------------------------

_SECTION_FIELDS = {
    "experiment": {"preset", "methods", "repeats", "seed", "threads"},
    "sim": {"n", "m", "dt", "t_end", "record_every", "batch_scheme", "error_reference"},
    "model": {"kernel", "init", "diffusion", "delta", "sigma2", "xi", "beta"},
    "cv": {"surrogate", "lambda_mode", "reference_mean_mode", "clusters"},
    "sweep": {"axis", "values"},
    "output": {"dir", "plots"},
    "kde": {"sigma2", "points", "snapshot_times"},
}

_INT_FIELDS = {"n", "m", "seed", "repeats", "record_every", "threads", "points"}
_FLOAT_FIELDS = {"dt", "t_end", "delta", "sigma2", "xi", "beta"}


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list from {text!r}") from exc


def parse_config(path: Optional[str] = None, **overrides) -> ExperimentConfig:
    """Build an ExperimentConfig from an INI-style file plus flag overrides.

    Flag overrides win over file values.  Unknown sections or keys are
    fatal and named in the error message.
    """
    values: dict = {}
    if path is not None:
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError(f"config file {path!r} not found or unreadable")
        for section in cp.sections():
            if section not in _SECTION_FIELDS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                if key not in _SECTION_FIELDS[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                values.update(_convert_file_value(section, key, raw))
        if not values:
            raise ConfigError("no preset and no model specified")
    axis = values.pop("_sweep_axis", None)
    sweep_values = values.pop("_sweep_values", None)
    if (axis is None) != (sweep_values is None):
        raise ConfigError("config section [sweep] needs both 'axis' and 'values'")
    if axis is not None:
        values["sweep"] = (axis, sweep_values)
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.repeats < 1:
        raise ConfigError("sweep repeat count must be >= 1")
    return cfg


def _convert_file_value(section: str, key: str, raw: str) -> dict:
    raw = raw.strip()
    if section == "sweep":
        if key == "axis":
            if raw not in ("n", "m"):
                raise ConfigError(f"sweep axis must be 'n' or 'm', got {raw!r}")
            return {"_sweep_axis": raw}
        return {"_sweep_values": _parse_float_list(raw)}
    if section == "output":
        if key == "dir":
            return {"outdir": Path(raw)}
        return {"plots": raw.lower() in ("1", "true", "yes", "on")}
    if section == "kde":
        if key == "sigma2":
            return {"kde_sigma2": float(raw)}
        if key == "points":
            return {"kde_points": int(raw)}
        return {"snapshot_times": _parse_float_list(raw)}
    if key == "methods":
        return {"methods": tuple(tok for tok in raw.replace(",", " ").split())}
    if key == "clusters":
        return {"clusters": _parse_float_list(raw)}
    if key in _INT_FIELDS:
        try:
            return {key: int(raw)}
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: expected integer, got {raw!r}") from exc
    if key in _FLOAT_FIELDS:
        try:
            return {key: float(raw)}
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: expected number, got {raw!r}") from exc
    return {key: raw}


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment (single comparison or sweep); returns output paths."""
    from . import reports

    base, methods = cfg.resolve()
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = {}

    if cfg.sweep is None:
        outputs = {}
        for method in methods:
            outputs[method] = run(replace(base, method=method))
        written.update(reports.write_series(outdir, outputs))
        written.update(reports.write_densities(outdir, outputs))
        if cfg.plots:
            written.update(reports.render_run_figures(outdir, outputs))
        summary_rows = None
    else:
        summary_rows = _run_sweep(cfg, base, methods)
        written.update(reports.write_summary(outdir, summary_rows))
        if cfg.plots:
            written.update(reports.render_sweep_figure(outdir, summary_rows, cfg.sweep[0]))

    written.update(reports.write_manifest(outdir, cfg, base, methods, written))
    return written


def _run_sweep(cfg: ExperimentConfig, base: SimConfig, methods) -> list[dict]:
    axis, values = cfg.sweep
    if axis not in ("n", "m"):
        raise ConfigError(f"sweep axis must be 'n' or 'm', got {axis!r}")
    rows = []
    for value in values:
        point = {axis: int(value)}
        for method in methods:
            errors = []
            for r in range(cfg.repeats):
                sim = replace(
                    base,
                    method=method,
                    seed=cfg.seed + r,
                    snapshot_times=(),
                    **point,
                )
                out = run(sim)
                errors.append(float(out.error[-1]))
            if cfg.repeats >= 2:
                mean, rms, band = rmse_over_repeats(errors)
            else:
                mean = rms = errors[0]
                band = (errors[0], errors[0])
            rows.append(
                dict(
                    axis=axis,
                    value=int(value),
                    method=method,
                    repeats=cfg.repeats,
                    error_mean=mean,
                    error_rms=rms,
                    ci_lo=band[0],
                    ci_hi=band[1],
                )
            )
    return rows


def bench(cfg: ExperimentConfig) -> dict:
    """Per-step wall time of full/rbm/rvrbm across ensemble sizes."""
    from . import reports

    if cfg.preset is None and cfg.kernel is None:
        cfg = replace(cfg, preset="test1a")
    base, _ = cfg.resolve()
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    steps = max(3, cfg.bench_steps)
    results: dict[str, dict[int, float]] = {}
    for method in ("full", "rbm", "rvrbm"):
        per_n = {}
        for n in cfg.bench_n_values:
            n_steps = steps if method != "full" else max(2, steps // 3)
            sim = replace(
                base,
                method=method,
                n=int(n),
                t_end=base.dt * n_steps,
                record_every=max(1, n_steps),
                snapshot_times=(),
            )
            run(replace(sim, t_end=base.dt))  # warm up (JIT, caches)
            out = run(sim)
            per_n[int(n)] = out.wall_time["steps"] / sim.n_steps
        results[method] = per_n

    n_values = [int(n) for n in cfg.bench_n_values]
    report = {
        "n_values": n_values,
        "seconds_per_step": results,
        "doubling_ratios": {
            meth: [
                results[meth][b] / results[meth][a]
                for a, b in zip(n_values, n_values[1:])
            ]
            for meth in results
        },
        "rvrbm_over_rbm": {
            str(n): results["rvrbm"][n] / results["rbm"][n] for n in n_values
        },
    }
    written = reports.write_bench(outdir, report)
    if cfg.plots:
        written.update(reports.render_bench_figure(outdir, report))
    return report | {"outputs": written}

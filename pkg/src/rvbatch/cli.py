"""Command-line experiment runner.

Subcommands:
  run    execute a preset or custom experiment, optionally as a sweep
  bench  time full/rbm/rvrbm steps across ensemble sizes

Exit codes: 0 success, 1 configuration error, 2 simulation failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

# environment noise from numba probing an old TBB; harmless for this tool
warnings.filterwarnings("ignore", message=".*TBB.*")

from .experiments import ConfigError, bench, parse_config, run_experiment
from .integrate import SimulationError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through exit code 1
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--preset", help="test1a | test1b | test2 | test3 | custom")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--n", type=int, help="particle count")
    p.add_argument("--m", type=int, help="batch size")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--record-every", type=int)
    p.add_argument("--method", "--methods", dest="methods",
                   help="comma list from full,rbm,rvrbm")
    p.add_argument("--batch-scheme", choices=["partition", "independent"])
    p.add_argument("--error-reference", choices=["sample", "law"])
    p.add_argument("--kernel", choices=["constant", "bounded_confidence", "cucker_smale"])
    p.add_argument("--init", choices=["uniform_opinion", "two_cluster_opinion",
                                      "uniform_phase_square"])
    p.add_argument("--diffusion", choices=["none", "constant", "opinion_multiplicative"])
    p.add_argument("--delta", type=float, help="bounded-confidence threshold")
    p.add_argument("--sigma2", type=float, help="diffusion strength")
    p.add_argument("--xi", type=float, help="communication length scale")
    p.add_argument("--beta", type=float, help="communication decay exponent")
    p.add_argument("--surrogate", choices=["one", "parabolic", "two_cluster_quadratic"])
    p.add_argument("--lambda-mode", choices=["scalar", "per_particle"])
    p.add_argument("--reference-mean", dest="reference_mean_mode",
                   choices=["frozen", "recomputed"])
    p.add_argument("--clusters", help="comma list of cluster centers")
    p.add_argument("--snapshot-times", help="comma list of times for density output")
    p.add_argument("--kde-sigma2", type=float, help="density bandwidth variance")
    p.add_argument("--kde-points", type=int, help="density grid points per axis")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rvbatch", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="run an experiment")
    _add_common(p_run)
    p_run.add_argument("--sweep", help="axis=values, e.g. n=100,1000,10000")
    p_run.add_argument("--repeats", type=int, help="seeds per sweep point")

    p_bench = sub.add_parser("bench", help="time the methods")
    _add_common(p_bench)
    p_bench.add_argument("--n-values", help="comma list of ensemble sizes")
    p_bench.add_argument("--steps", type=int, help="timed steps per point")
    return parser


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _collect_overrides(args: argparse.Namespace) -> dict:
    over = {
        "preset": args.preset,
        "seed": args.seed,
        "threads": args.threads,
        "n": args.n,
        "m": args.m,
        "dt": args.dt,
        "t_end": args.t_end,
        "record_every": args.record_every,
        "batch_scheme": args.batch_scheme,
        "error_reference": args.error_reference,
        "kernel": args.kernel,
        "init": args.init,
        "diffusion": args.diffusion,
        "delta": args.delta,
        "sigma2": args.sigma2,
        "xi": args.xi,
        "beta": args.beta,
        "surrogate": args.surrogate,
        "lambda_mode": args.lambda_mode,
        "reference_mean_mode": args.reference_mean_mode,
        "kde_sigma2": args.kde_sigma2,
        "kde_points": args.kde_points,
    }
    over["outdir"] = Path(args.out) if args.out else None
    if args.methods:
        over["methods"] = tuple(tok for tok in args.methods.replace(",", " ").split())
    if args.clusters:
        over["clusters"] = _csv_floats(args.clusters)
    if args.snapshot_times is not None:
        over["snapshot_times"] = _csv_floats(args.snapshot_times)
    if args.no_plots:
        over["plots"] = False
    if getattr(args, "repeats", None) is not None:
        over["repeats"] = args.repeats
    if getattr(args, "sweep", None):
        if "=" not in args.sweep:
            raise ConfigError("--sweep expects axis=values, e.g. n=100,1000")
        axis, _, values = args.sweep.partition("=")
        over["sweep"] = (axis.strip(), _csv_floats(values))
    if getattr(args, "n_values", None):
        over["bench_n_values"] = tuple(int(v) for v in _csv_floats(args.n_values))
    if getattr(args, "steps", None) is not None:
        over["bench_steps"] = args.steps
    return over


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = parse_config(args.config, **_collect_overrides(args))
        if args.command == "bench":
            report = bench(cfg)
            for n, ratio in report["rvrbm_over_rbm"].items():
                print(f"n={n}: rvrbm/rbm step-time ratio {ratio:.2f}")
        else:
            written = run_experiment(cfg)
            for name, path in sorted(written.items()):
                print(f"{name}: {path}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

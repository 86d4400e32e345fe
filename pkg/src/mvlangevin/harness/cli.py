"""Command-line entry point.

Verbs:
    constants   admissibility report; exit status 0 iff admissible
    figure      running-mean decay sweep over interaction strengths
    converge    empirical-measure convergence curve
    contract    reflection-coupling contraction experiment
    moments     second-moment boundedness experiment

Each verb takes --config FILE (INI, see harness.config) plus overrides;
without a config a desk-scale preset for that verb is used.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig, load_config, serialize_config
from .experiments import (run_admissibility_report, run_contraction,
                          run_empirical_convergence, run_mean_decay_figure,
                          run_moments)

_PRESETS = {
    "constants": dict(k=0.04),
    "figure": dict(kind="exactlinear", n_paths=16, n_steps=100_000, dt=1.0),
    "converge": dict(kind="frozen", n_paths=16, n_steps=100_000, dt=1.0,
                     checkpoints="100, 1000, 10000, 100000"),
    "contract": dict(kind="frozen", k=0.04, dt=0.005, n_steps=1600,
                     n_pairs=256),
    "moments": dict(kind="frozen", dt=0.01, n_steps=5000, n_paths=256),
}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvlangevin")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in _PRESETS:
        sp = sub.add_parser(verb)
        sp.add_argument("--config", default=None, help="INI config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--steps", type=int, default=None)
        sp.add_argument("--paths", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--k", type=float, default=None,
                        help="interaction strength override")
        if verb == "figure":
            sp.add_argument("--k-list", default=None,
                            help="comma-separated interaction strengths")
        if verb == "constants":
            sp.add_argument("--dump-config", action="store_true",
                            help="print the effective config and exit")
    return ap


def _effective_config(args) -> ExperimentConfig:
    if args.config is not None:
        ec = load_config(args.config)
        ec.validate_files()
    else:
        ec = ExperimentConfig(**_PRESETS[args.verb])
    if args.seed is not None:
        ec.seed = args.seed
    if args.steps is not None:
        ec.n_steps = args.steps
    if args.paths is not None:
        ec.n_paths = args.paths
    if args.out is not None:
        ec.out_dir = args.out
    if args.k is not None:
        ec.k = args.k
    if getattr(args, "k_list", None):
        ec.k_list = tuple(float(t) for t in args.k_list.replace(",", " ").split())
    return ec


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        ec = _effective_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.verb == "constants":
        if getattr(args, "dump_config", False):
            print(serialize_config(ec), end="")
            return 0
        text, code = run_admissibility_report(ec.build_model())
        print(text, end="")
        return code
    if args.verb == "figure":
        res = run_mean_decay_figure(ec.k_list, ec.n_paths, ec.n_steps,
                                    ec.seed, ec.out_dir)
        print("\n".join(res.csv_paths + res.svg_paths))
        return 0
    if args.verb == "converge":
        res = run_empirical_convergence(ec, ec.out_dir)
        print(f"{res.csv_path}\n{res.svg_path}")
        print(f"fitted_slope = {res.fitted_slope!r}, eps_bound = {res.eps_bound!r}")
        return 0
    if args.verb == "contract":
        report = run_contraction(ec, ec.out_dir)
        print(report.summary_line())
        return 0
    if args.verb == "moments":
        report = run_moments(ec, ec.out_dir)
        print(f"growth_flag = {report.growth_flag}")
        return 0
    raise AssertionError(f"unhandled verb {args.verb}")  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

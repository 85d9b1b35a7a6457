"""``minmax`` command line entry point."""

import argparse
import sys

import numpy as np

from minmax.errors import ConfigError, MinmaxError
from minmax.harness.config import TASKS, load_config
from minmax.harness.experiments import run_experiment, run_project


def build_parser():
    parser = argparse.ArgumentParser(prog="minmax", description="Min-max robust attacks and adversarial training.")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        if task == "project":
            continue
        p = sub.add_parser(task, help=f"run the {task} task from a config file")
        p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--out", default=None, help="output directory (overrides [run] out)")

    p = sub.add_parser("project", help="project one vector onto an lp ball intersected with a box")
    p.add_argument("--norm", required=True, choices=["0", "1", "2", "inf"])
    p.add_argument("--eps", required=True, type=float)
    p.add_argument("--vector", required=True, help='comma or space separated, e.g. "0.5,-0.2,0.9"')
    p.add_argument("--lower", default="", help="box lower bounds (default: -|vector|)")
    p.add_argument("--upper", default="", help="box upper bounds (default: |vector|)")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="also write metrics.csv/manifest.json here")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.task == "project":
        overrides = {("project", k): getattr(args, k) for k in ("norm", "eps", "vector", "lower", "upper")}
    try:
        cfg = load_config(args.config, task=args.task, seed=args.seed, out=args.out, overrides=overrides)
    except ConfigError as exc:
        print(f"minmax: config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.task == "project" and args.out is None:
            res = run_project(cfg)
        else:
            res = run_experiment(cfg)
    except (MinmaxError, ValueError, ArithmeticError, OSError) as exc:
        print(f"minmax: {args.task} failed: {exc}", file=sys.stderr)
        return 1
    if res.output is not None:
        print(" ".join(f"{v:.10g}" for v in np.asarray(res.output)))
    else:
        for r in res.records:
            print(f"{r.name}\t{r.value:.10g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .errors import ConfigError, LfsdaError, VerificationError
from .experiment import ExperimentConfig, run_experiment
from .pv import save_pv_csv

log = logging.getLogger("lfsda")

SUBSET = {
    "run": ("lfsda", "rtp", "without_trading", "optimal"),
    "lfsda": ("lfsda",),
    "rtp": ("rtp",),
    "baseline": ("without_trading",),
    "optimal": ("optimal",),
}


def _config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        changes["iterations"] = args.iterations
    if args.out is not None:
        changes["output_dir"] = args.out
    return replace(cfg, **changes) if changes else cfg


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lfsda", description="Local prosumer market simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "all conditions"), ("lfsda", "double-auction mechanism"),
                        ("rtp", "subgradient real-time pricing"),
                        ("baseline", "no local trading"),
                        ("optimal", "centralized welfare optimum")):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("--iterations", type=int, help="iteration budget")
        sp.add_argument("--parallel", action="store_true", help="run conditions in parallel")
    sub.add_parser("gen-pv", parents=[common], help="write synthetic PV profiles as CSV")
    sub.add_parser("verify", parents=[common], help="run the oracle self-checks")
    sub.add_parser("dump-config", parents=[common], help="print the effective configuration")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "dump-config":
            sys.stdout.write(cfg.dumps())
            return 0
        if args.command == "gen-pv":
            os.makedirs(cfg.output_dir, exist_ok=True)
            path = os.path.join(cfg.output_dir, "pv.csv")
            save_pv_csv(cfg.pv_profiles(), path)
            print(path)
            return 0
        if args.command == "verify":
            from .verification import run_all
            results = run_all(cfg, seed=cfg.rng_seed)
            for r in results:
                print(r.line())
            if not all(r.passed for r in results):
                raise VerificationError("verification failed")
            return 0
        if args.seed is not None and args.seed >= 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        result = run_experiment(cfg, SUBSET[args.command], parallel=args.parallel)
        for f in result.files:
            print(f)
        if result.failures:
            for f in result.failures:
                print(f"error: {f['condition']}: {f['message']}", file=sys.stderr)
            return max(f["exit_code"] for f in result.failures)
        return 0
    except LfsdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

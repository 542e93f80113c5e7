"""Command-line entry point ``tlrl``.

Exit codes: 0 success, 1 configuration error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .tensor_core import CapacityError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _int_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _seeds(text):
    """``"0-19"``, ``"20"`` (meaning 0..19) or ``"1,5,9"``."""
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = (int(v) for v in text.split("-"))
        return list(range(lo, hi + 1))
    vals = _int_list(text)
    if len(vals) == 1 and "," not in text:
        return list(range(vals[0]))
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="tlrl", description="Tensor low-rank policy-gradient toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run an experiment over a seed sweep")
    t.add_argument("--config", required=True, help="experiment JSON file")
    t.add_argument("--seeds", type=_seeds, help="override seeds: N, LO-HI or a,b,c")
    t.add_argument("--out", help="override the output directory")
    t.add_argument("--parallel", type=int, default=1, help="worker processes (seed level)")

    r = sub.add_parser("rank-sweep", help="ALS NFE for a list of ranks")
    r.add_argument("--tensor", required=True, help="TLRT binary or JSON tensor file")
    r.add_argument("--ranks", required=True, type=_int_list, help="e.g. 1,2,3,4")
    r.add_argument("--restarts", type=int, default=3)
    r.add_argument("--out", help="CSV output path")
    r.add_argument("--seed", type=int, default=0)

    o = sub.add_parser("oracle", help="solve a gridworld by value iteration")
    o.add_argument("--grid", default="5x5", help="ROWSxCOLS, a JSON object or a JSON file")
    o.add_argument("--gamma", type=float, default=1.0)
    o.add_argument("--tol", type=float, default=1e-10)
    o.add_argument("--horizon", type=int, default=None)
    o.add_argument("--out", help="CSV output path for values and greedy actions")

    e = sub.add_parser("eval", help="roll out a saved policy")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--horizon", type=int, default=None)
    return p


def _train(args):
    exp = harness.ExperimentConfig.load(args.config)
    if args.seeds is not None:
        exp.seeds = args.seeds
    if args.out is not None:
        exp.out = args.out
    exp.__post_init__()
    if args.parallel < 1:
        raise harness.ConfigError("--parallel must be >= 1")
    agg = harness.run_experiment(exp, parallel=args.parallel)
    print(f"seeds completed: {len(agg.completed)}/{len(exp.seeds)}")
    print(f"final median return: {agg.p50[-1]:.6g} (IQR {agg.p25[-1]:.6g} .. {agg.p75[-1]:.6g})")
    print(f"outputs in {exp.out}")
    return EXIT_RUNTIME if agg.failed else EXIT_OK


def _rank_sweep(args):
    if args.restarts < 1:
        raise harness.ConfigError("--restarts must be >= 1")
    rows = harness.rank_sweep(args.tensor, args.ranks, args.restarts, args.out, seed=args.seed)
    print("rank,nfe")
    for K, err in rows:
        print(f"{K},{err:.6e}")
    return EXIT_OK


def _oracle(args):
    if not 0 < args.gamma <= 1 or not args.tol > 0:
        raise harness.ConfigError("need 0 < gamma <= 1 and tol > 0")
    res = harness.oracle_cmd(args.grid, args.gamma, args.tol, args.horizon, args.out)
    arrows = np.array(list("^v<>"))
    print(f"optimal return from start: {res.start_return:.10g}")
    print(f"value iteration sweeps: {res.iterations}")
    for row in arrows[res.policy]:
        print(" ".join(row))
    return EXIT_OK


def _eval(args):
    if args.episodes < 1:
        raise harness.ConfigError("--episodes must be >= 1")
    rets = harness.evaluate_checkpoint(args.checkpoint, args.episodes, args.seed, args.horizon)
    print(json.dumps({"episodes": int(rets.size), "mean_return": float(np.mean(rets)),
                      "median_return": float(np.median(rets)), "std_return": float(np.std(rets))}))
    return EXIT_OK


_COMMANDS = {"train": _train, "rank-sweep": _rank_sweep, "oracle": _oracle, "eval": _eval}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (harness.ConfigError, FileNotFoundError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

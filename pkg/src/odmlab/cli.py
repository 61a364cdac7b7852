"""Command-line entry points.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
runtime failures. The output directory is resolved as: --output-dir flag,
then the ODMLAB_OUTDIR environment variable, then the config file value.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional

from . import __version__
from .core import CostSpec
from .mediators import fit_matched_epsilon, kappa0
from .pm import build_matrices, format_game, game_csv_rows
from .runner import (OUTPUT_DIR_ENV_VAR, SWEEP_AXES, ConfigError,
                     aggregate_directory, load_config,
                     request_curves_from_rounds_csv, run_suite, run_sweep,
                     save_matched)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems via exit code 1."""

    def error(self, message):  # noqa: D102 - argparse hook
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="odmlab",
                     description="Online decision mediation laboratory")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a suite of runs from a "
                           "YAML config and write CSV artifacts")
    p_run.add_argument("--config", required=True, help="YAML config path")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--workers", type=int, default=None,
                       help="override worker process count")
    p_run.add_argument("--master-seed", type=int, default=None)
    p_run.add_argument("--runs", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="re-run the suite across one "
                             "parameter axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", default=None,
                         help="comma-separated values (else from the "
                         "config's sweep section)")
    p_sweep.add_argument("--output-dir", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_agg = sub.add_parser("aggregate", help="recompute aggregate CSVs "
                           "from per-run rounds/heldout files")
    p_agg.add_argument("--dir", required=True,
                       help="directory holding rounds_*.csv files")
    p_agg.add_argument("--ma-window", type=int, default=None,
                       help="moving-average window (default n // 5)")
    p_agg.set_defaults(func=_cmd_aggregate)

    p_pm = sub.add_parser("pm-matrices", help="print the partial-monitoring "
                          "reward and feedback matrices")
    p_pm.add_argument("--m", type=int, required=True,
                      help="number of actions")
    p_pm.add_argument("--k-int", type=float, default=0.1)
    p_pm.add_argument("--k-req", type=float, default=None,
                      help="request cost (default: the m/(m-1) rule)")
    p_pm.add_argument("--human-action", type=int, default=None,
                      help="single human action (default: all)")
    p_pm.add_argument("--csv", default=None,
                      help="also write the matrices to this CSV path")
    p_pm.set_defaults(func=_cmd_pm)

    p_fit = sub.add_parser("fit-matched-eps", help="fit the decaying "
                           "request schedule from rounds CSVs")
    p_fit.add_argument("--rounds", nargs="+", required=True,
                       help="rounds_*.csv files of the policy to match")
    p_fit.add_argument("--output", required=True,
                       help="JSON path for the fitted table")
    p_fit.set_defaults(func=_cmd_fit_matched)
    return parser


def _resolve_outdir(flag_value: Optional[str], config_value: str) -> str:
    if flag_value:
        return flag_value
    env_value = os.environ.get(OUTPUT_DIR_ENV_VAR)
    if env_value:
        return env_value
    return config_value


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    if args.master_seed is not None:
        config = replace(config, master_seed=args.master_seed)
    if args.runs is not None:
        config = replace(config, runs=args.runs)
    outdir = _resolve_outdir(args.output_dir, config.output_dir)
    suite = run_suite(config, output_dir=outdir)
    print(f"wrote artifacts to {suite.output_dir}")
    for name in suite.policy_names:
        if name not in suite.per_policy:
            continue
        arrays = suite.per_policy[name]
        fr = arrays["final_regret"]
        req = arrays["requests"]
        print(f"  {name}: final regret {fr.mean():.4f} +/- {fr.std():.4f}, "
              f"requests {req.mean():.1f}")
    if suite.failures:
        print(f"{len(suite.failures)} run(s) failed; see failures.csv",
              file=sys.stderr)
        return 2
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    values = None
    if args.values is not None:
        raw = [v for v in args.values.split(",") if v.strip()]
        if not raw:
            raise ConfigError("--values is empty")
        caster = int if args.axis == "s" else float
        try:
            values = [caster(v) for v in raw]
        except ValueError as exc:
            raise ConfigError(f"bad sweep value in {args.values!r}") from exc
    outdir = _resolve_outdir(args.output_dir, config.output_dir)
    table = run_sweep(config, args.axis, values=values, output_dir=outdir)
    print(f"wrote sweep table to {os.path.join(outdir, f'sweep_{args.axis}.csv')}")
    for row in table:
        print(f"  {row['axis']}={row['value']} {row['policy']}: "
              f"avg loss {row['avg_loss_mean']:.4f} +/- {row['avg_loss_std']:.4f}")
    return 0


def _cmd_aggregate(args) -> int:
    if not os.path.isdir(args.dir):
        raise ConfigError(f"not a directory: {args.dir}")
    try:
        names = aggregate_directory(args.dir, ma_window=args.ma_window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"regenerated aggregates for: {', '.join(names)}")
    return 0


def _cmd_pm(args) -> int:
    try:
        costs = CostSpec(k_int=args.k_int, k_req=args.k_req).resolved(
            args.m, kappa0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.human_action is not None:
        actions = [args.human_action]
    else:
        actions = list(range(args.m))
    games = []
    for a in actions:
        try:
            games.append(build_matrices(args.m, a, costs))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    print(f"m={args.m}, k_int={costs.k_int:.9g}, k_req={costs.k_req:.9g}")
    print()
    for game in games:
        print(format_game(game))
        print()
    if args.csv:
        rows: List[List[str]] = []
        for i, game in enumerate(games):
            grid = game_csv_rows(game)
            rows.extend(grid if i == 0 else grid[1:])
        import csv as _csv
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            _csv.writer(fh, lineterminator="\n").writerows(rows)
        print(f"wrote {args.csv}")
    return 0


def _cmd_fit_matched(args) -> int:
    curves = []
    for path in args.rounds:
        if not os.path.exists(path):
            raise ConfigError(f"rounds file not found: {path}")
        curves.extend(request_curves_from_rounds_csv(path))
    matched = fit_matched_epsilon(curves)
    save_matched(matched, args.output)
    actual = float(sum(c[-1] for c in curves)) / len(curves)
    fitted = float(matched.eps_table.sum())
    print(f"fitted table over horizon {matched.horizon}: "
          f"expected requests {fitted:.2f} (mean actual {actual:.2f})")
    print(f"wrote {args.output}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        logger.exception("command failed")
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

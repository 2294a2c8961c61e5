"""Command line entry point: ``nhmarket run | compare | oracle-check``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness import ScenarioConfig, compare_schemes, default_comparison, load_comparison, load_config, run_scenario, write_summary
from .rl import TrainingFault
from .tenants import ConfigError, oracle_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if getattr(args, "checkpoint", None):
        changes["checkpoint"] = args.checkpoint
    if getattr(args, "scheme", None):
        changes["scheme"] = args.scheme
    try:
        return replace(cfg, **changes) if changes else cfg
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _print_table(table: dict):
    cols = ("mean_reward", "mean_abs_mismatch", "normalized_revenue", "profit_above_target",
            "total_disutility", "total_served", "bits_per_price_unit", "messages")
    print(f"{'scheme':16s}" + "".join(f"{c:>22s}" for c in cols))
    for name, s in table.items():
        print(f"{name:16s}" + "".join(f"{getattr(s, c):>22.6g}" for c in cols))


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    cfg = _apply_overrides(cfg, args)
    result = run_scenario(cfg, args.out)
    if args.out:
        write_summary(f"{args.out}/summary_{cfg.label}.csv", {cfg.label: result.summary})
    _print_table({cfg.label: result.summary})
    return EXIT_OK


def cmd_compare(args) -> int:
    cfgs = load_comparison(args.config) if args.config else default_comparison()
    cfgs = [_apply_overrides(c, args) for c in cfgs]
    comp = compare_schemes(cfgs, args.out)
    _print_table(comp.table)
    return EXIT_OK


def cmd_oracle(args) -> int:
    report = oracle_sweep(args.samples, args.seed or 0)
    status = "ok" if report.ok else "FAILED"
    print(f"oracle-check {status}: {report.samples} samples, {report.failures} outside tolerance, "
          f"worst margin {report.worst_excess:+.3g} RBs")
    return EXIT_OK if report.ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nhmarket", description="Shared-spectrum pricing market simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML scenario file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="directory for CSV output")
        p.add_argument("--epochs", type=int)

    run = sub.add_parser("run", help="run one scheme")
    common(run)
    run.add_argument("--scheme", help="override the configured scheme")
    run.add_argument("--checkpoint", help="DDPG checkpoint: loaded if present, saved at the end")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run several schemes on shared samples")
    common(cmp_)
    cmp_.set_defaults(func=cmd_compare)

    orc = sub.add_parser("oracle-check", help="closed-form tenant requests vs grid minimiser")
    orc.add_argument("--samples", type=int, default=1000)
    orc.add_argument("--seed", type=int)
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingFault, ArithmeticError, OSError, ValueError) as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

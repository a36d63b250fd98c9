"""Command-line entry point: ``run``, ``decompose``, ``sweep``, ``equilibrium``.

Exit codes: 0 success, 1 configuration/input error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from mls_forge.domain import CANONICAL_PD, RuleConfig, Strategy
from mls_forge.equilibrium import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    BeliefDistribution,
    deviation_gains,
    find_equilibrium,
)
from mls_forge.errors import ConfigError, GenerationError, MLSError, NotConvergedError
from mls_forge.io.config import load_document, parse_scenario
from mls_forge.io.output import read_snapshot, read_weights, write_csv, write_run
from mls_forge.io.sweep import run_sweep, sweep_rows, sweep_values
from mls_forge.orchestrator import run_scenario
from mls_forge.price import price_decomposition

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(path, f"cannot read: {exc.strerror}") from None


def cmd_run(args) -> int:
    scenario = parse_scenario(_read_text(args.config))
    records = run_scenario(scenario)
    write_run(records, scenario, Path(args.out), snapshots=args.snapshots)
    print(f"wrote {len(records)} generations to {args.out}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    before = read_snapshot(Path(args.before))
    after = read_snapshot(Path(args.after))
    weights = read_weights(Path(args.weights)) if args.weights else []
    report = price_decomposition(before, after, weights)
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = load_document(_read_text(args.config))
    values = sweep_values(args.start, args.stop, args.steps)
    points = run_sweep(doc, args.param, values, args.workers)
    header, rows = sweep_rows(points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", header, rows)
    for p in points:
        print(f"{args.param}={p.value:.6g}\tcooperation={p.final_cooperation_share:.4f}\t"
              f"mean_V={p.mean_v:.6g}")
    return EXIT_OK


_BUILTIN_RULES = {
    "baseline": lambda a: RuleConfig.baseline(cost=a.cost),
    "sanctions": lambda a: RuleConfig.graduated(severity=a.lam, decay=a.decay, cost=a.cost),
    "norm": lambda a: RuleConfig.norm_seeded(strategy=Strategy.parse(a.strategy),
                                             seeding_fraction=a.seeding_fraction, cost=a.cost),
}


def _pick_rule(args):
    if args.config:
        scenario = parse_scenario(_read_text(args.config))
        for rule in scenario.rules:
            if args.rule in (str(rule.id), rule.name) or (
                    args.rule == rule.kind.value and
                    sum(r.kind is rule.kind for r in scenario.rules) == 1):
                beliefs = BeliefDistribution(scenario.initial_human, scenario.initial_ai,
                                             scenario.ai_fraction)
                return rule, scenario.base, scenario.rounds, beliefs
        raise ConfigError("--rule", f"no rule {args.rule!r} in {args.config}")
    key = {"graduated_sanctions": "sanctions", "norm_seeded": "norm"}.get(args.rule, args.rule)
    if key not in _BUILTIN_RULES:
        raise ConfigError("--rule", f"expected one of {sorted(_BUILTIN_RULES)}")
    return _BUILTIN_RULES[key](args), CANONICAL_PD, args.rounds, BeliefDistribution()


def cmd_equilibrium(args) -> int:
    try:
        rule, base, rounds, beliefs = _pick_rule(args)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("--rule", str(exc)) from None
    result = find_equilibrium(rule, base, rounds, beliefs, args.max_iters, args.epsilon)
    out = result.as_dict()
    out["rule_kind"] = rule.kind.value
    out["rounds"] = rounds
    gains = deviation_gains(result, base, rounds)
    out["deviation_gain"] = {k.value: g for k, g in gains.items()}
    out["audit_passed"] = all(g <= args.epsilon for g in gains.values())
    print(json.dumps(out, indent=2))
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mls-forge", description="Multi-level selection simulator for human-AI institutions.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write CSV outputs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--snapshots", action="store_true",
                   help="also write per-generation agent snapshots and interaction weights")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("decompose", help="Price decomposition of two snapshot CSVs")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--weights")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("sweep", help="vary one parameter and summarize each run")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, help="override MLS_FORGE_THREADS")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("equilibrium", help="institutional equilibrium for one rule")
    p.add_argument("--rule", required=True,
                   help="rule id or name from --config, or baseline|sanctions|norm")
    p.add_argument("--config")
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p.add_argument("--decay", type=float, default=1.0)
    p.add_argument("--strategy", default="TitForTat")
    p.add_argument("--seeding-fraction", type=float, default=1.0)
    p.add_argument("--cost", type=float, default=0.0)
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.set_defaults(func=cmd_equilibrium)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NotConvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED if isinstance(exc.cause, NotConvergedError) else EXIT_CONFIG
    except (MLSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

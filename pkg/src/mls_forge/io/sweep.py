"""One-parameter sweeps over a scenario document."""

from __future__ import annotations

import copy
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from mls_forge.errors import ConfigError
from mls_forge.io.config import scenario_from_dict, set_path
from mls_forge.orchestrator import run_scenario

THREADS_ENV = "MLS_FORGE_THREADS"

# Short names that fan out to every rule carrying the key.
RULE_ALIASES = {"lambda": "graduated_sanctions", "decay": "graduated_sanctions",
                "seeding_fraction": "norm_seeded", "cost": None}
SECTION_ALIASES = {
    "generations": "scenario", "seed": "scenario",
    "ai_fraction": "groups", "count": "groups", "size": "groups",
    "rounds": "game", "matches": "game",
    "imitation_rate": "learning", "mutation_rate": "learning", "selection_intensity": "learning",
    "alpha": "evolution", "beta": "evolution", "gamma": "evolution", "dt": "evolution",
}
INTEGER_KEYS = {"seed", "generations", "count", "size", "rounds", "matches", "max_iters"}


def apply_param(doc: dict, param: str, value: float) -> dict:
    """Return a copy of ``doc`` with ``param`` set to ``value``.

    ``param`` is a dotted path (``rules.1.lambda``), a key name from one of the
    fixed sections (``imitation_rate``), or a rule key (``lambda``) applied to
    every rule of the matching kind. Sweeping ``lambda`` through 0 turns the
    sanctioned rule into a baseline rule at that point.
    """
    doc = copy.deepcopy(doc)
    leaf = param.rsplit(".", 1)[-1]
    if leaf in INTEGER_KEYS:
        if float(value) != int(round(value)):
            raise ConfigError(param, f"needs an integer value, got {value!r}")
        value = int(round(value))
    else:
        value = float(value)
    if "." in param:
        set_path(doc, param, value)
    elif param in RULE_ALIASES:
        kind = RULE_ALIASES[param]
        hits = [r for r in doc.get("rules", {}).values()
                if kind is None or str(r.get("kind", "")).replace("-", "_") == kind]
        if not hits:
            raise ConfigError(param, "no rule in the scenario carries this parameter")
        for rule in hits:
            rule[param] = value
            if param == "lambda" and value == 0:
                # No surcharge at all is the baseline game.
                rule["kind"] = "baseline"
                rule.pop("lambda")
                rule.pop("decay", None)
    elif param in SECTION_ALIASES:
        set_path(doc, f"{SECTION_ALIASES[param]}.{param}", value)
    else:
        raise ConfigError(param, "unknown sweep parameter")
    return doc


@dataclass
class SweepPoint:
    value: float
    final_cooperation_share: float
    final_mean_pi: float
    mean_v: float
    frequencies: dict[int, float]


def _run_point(args: tuple[dict, str, float]) -> SweepPoint:
    doc, param, value = args
    scenario = scenario_from_dict(apply_param(doc, param, value))
    records = run_scenario(scenario)
    if not records:
        return SweepPoint(value, float("nan"), float("nan"), float("nan"),
                          scenario.initial_rule_population().as_dict())
    last = records[-1]
    return SweepPoint(value, last.cooperation_share, last.mean_pi, last.mean_rule_fitness,
                      dict(last.frequencies))


def sweep_values(start: float, stop: float, steps: int) -> list[float]:
    if steps < 1:
        raise ConfigError("steps", "must be >= 1")
    return [float(v) for v in np.linspace(start, stop, steps)]


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected an integer, got {raw!r}") from None


def run_sweep(doc: dict, param: str, values: Sequence[float],
              workers: int | None = None) -> list[SweepPoint]:
    """Run one scenario per value; results come back in ``values`` order."""
    # Validate every point before spending time on any of them.
    for v in values:
        scenario_from_dict(apply_param(doc, param, v))
    jobs = [(doc, param, v) for v in values]
    workers = min(workers or thread_cap(), len(jobs)) if jobs else 1
    if workers <= 1:
        return [_run_point(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_point, jobs))


def sweep_rows(points: Sequence[SweepPoint]) -> tuple[list[str], list[list[Any]]]:
    rule_ids = list(points[0].frequencies) if points else []
    header = ["value", "final_cooperation_share", "final_mean_pi", "mean_V",
              *(f"freq_rule_{rid}" for rid in rule_ids)]
    rows = [[p.value, p.final_cooperation_share, p.final_mean_pi, p.mean_v,
             *(p.frequencies[rid] for rid in rule_ids)] for p in points]
    return header, rows

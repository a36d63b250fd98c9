"""TOML scenario files: parsing, validation, defaults, serialization.

Schema (every key, with its default; ``required`` keys have none)::

    [scenario]
    seed = required            # 0 <= seed < 2**64
    generations = required
    name = ""

    [groups]
    count = required
    size = required            # >= 2
    ai_fraction = 0.5
    initial_human = { AllC = 0.25, TitForTat = 0.25, WinStayLoseShift = 0.25, AllD = 0.25 }
    initial_ai = (same as initial_human)

    [game]
    reward = 1.0               # jail-years; must satisfy temptation < reward < punishment < sucker
    sucker = 3.0
    temptation = 0.0
    punishment = 2.0
    rounds = 10
    pairing = "round-robin"    # or "random-pairs"
    matches = 1                # random perfect matchings per generation (random-pairs only)

    [rules.<id>]               # integer id, one table per rule
    kind = required            # "baseline" | "graduated_sanctions" | "norm_seeded"
    cost = 0.0
    name = ""
    lambda = required for graduated_sanctions
    decay = 1.0                # graduated_sanctions only
    strategy = required for norm_seeded
    seeding_fraction = 1.0     # norm_seeded only
    initial_frequency = (uniform over rules when omitted everywhere)

    [learning]
    imitation_rate = 0.1
    mutation_rate = 0.01
    selection_intensity = 1.0

    [evolution]
    alpha = 0.5
    beta = 0.5
    gamma = 0.0
    dt = 0.05
    mode = "empirical"         # or "equilibrium"
    max_iters = 10000
    epsilon = 1e-9
"""

from __future__ import annotations

import hashlib
import math
from typing import Any, Callable

import tomli
import tomli_w

from mls_forge.domain import (
    STRATEGIES,
    FitnessMapParams,
    PayoffMatrix,
    RuleConfig,
    RuleKind,
    Strategy,
    StrategyMix,
    validate_pd,
)
from mls_forge.errors import ConfigError, ContractViolation
from mls_forge.game import RANDOM_PAIRS, ROUND_ROBIN, PairingPolicy
from mls_forge.orchestrator import EMPIRICAL, EQUILIBRIUM, Scenario

REQUIRED = object()

_SCHEMA: dict[str, dict[str, Any]] = {
    "scenario": {"seed": REQUIRED, "generations": REQUIRED, "name": ""},
    "groups": {"count": REQUIRED, "size": REQUIRED, "ai_fraction": 0.5,
               "initial_human": None, "initial_ai": None},
    "game": {"reward": 1.0, "sucker": 3.0, "temptation": 0.0, "punishment": 2.0,
             "rounds": 10, "pairing": ROUND_ROBIN, "matches": 1},
    "learning": {"imitation_rate": 0.1, "mutation_rate": 0.01, "selection_intensity": 1.0},
    "evolution": {"alpha": 0.5, "beta": 0.5, "gamma": 0.0, "dt": 0.05, "mode": EMPIRICAL,
                  "max_iters": 10_000, "epsilon": 1e-9},
}
_RULE_KEYS = {"kind", "cost", "name", "lambda", "decay", "strategy", "seeding_fraction",
              "initial_frequency"}
_RULE_KIND_KEYS = {
    RuleKind.BASELINE: set(),
    RuleKind.GRADUATED_SANCTIONS: {"lambda", "decay"},
    RuleKind.NORM_SEEDED: {"strategy", "seeding_fraction"},
}


def _section(doc: dict, name: str) -> dict[str, Any]:
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(name, "must be a table")
    schema = _SCHEMA[name]
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{name}.{key}", "unknown key")
    out = {}
    for key, default in schema.items():
        if key in raw:
            out[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigError(f"{name}.{key}", "missing required key")
        else:
            out[key] = default
    return out


def _num(key: str, value: Any, *, integer: bool = False,
         check: Callable[[float], bool] | None = None, expect: str = "") -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(key, f"expected an integer, got {value!r}")
            value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
    if check is not None and not check(value):
        raise ConfigError(key, f"out of range ({expect}): {value!r}")
    return value


def _rate(key, value):
    return _num(key, value, check=lambda v: 0.0 <= v <= 1.0, expect="must lie in [0, 1]")


def _mix(key: str, value: Any) -> StrategyMix:
    if value is None:
        return StrategyMix()
    if not isinstance(value, dict):
        raise ConfigError(key, "must be a table of strategy weights")
    weights = {}
    for name, w in value.items():
        try:
            s = Strategy.parse(name)
        except ValueError:
            raise ConfigError(f"{key}.{name}", "unknown strategy") from None
        weights[s] = _num(f"{key}.{name}", w, check=lambda v: v >= 0, expect="must be >= 0")
    try:
        return StrategyMix.from_mapping(weights)
    except ContractViolation as exc:
        raise ConfigError(key, str(exc)) from None


def _rule(rid_text: str, raw: Any) -> RuleConfig:
    prefix = f"rules.{rid_text}"
    try:
        rid = int(rid_text)
    except ValueError:
        raise ConfigError(prefix, "rule ids must be integers") from None
    if not isinstance(raw, dict):
        raise ConfigError(prefix, "must be a table")
    for key in raw:
        if key not in _RULE_KEYS:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    if "kind" not in raw:
        raise ConfigError(f"{prefix}.kind", "missing required key")
    try:
        kind = RuleKind(str(raw["kind"]).replace("-", "_"))
    except ValueError:
        raise ConfigError(f"{prefix}.kind", f"unknown rule kind {raw['kind']!r}") from None
    for key in _RULE_KIND_KEYS.keys() - {kind}:
        for extra in _RULE_KIND_KEYS[key] - _RULE_KIND_KEYS[kind]:
            if extra in raw:
                raise ConfigError(f"{prefix}.{extra}", f"not valid for kind {kind.value}")
    kw: dict[str, Any] = {
        "cost": _num(f"{prefix}.cost", raw.get("cost", 0.0), check=lambda v: v >= 0,
                     expect="must be >= 0"),
        "name": str(raw.get("name", "")),
    }
    if "initial_frequency" in raw:
        kw["initial_frequency"] = _num(f"{prefix}.initial_frequency", raw["initial_frequency"],
                                       check=lambda v: v >= 0, expect="must be >= 0")
    if kind is RuleKind.GRADUATED_SANCTIONS:
        if "lambda" not in raw:
            raise ConfigError(f"{prefix}.lambda", "missing required key")
        kw["severity"] = _num(f"{prefix}.lambda", raw["lambda"], check=lambda v: v > 0,
                              expect="must be > 0")
        kw["decay"] = _rate(f"{prefix}.decay", raw.get("decay", 1.0))
    elif kind is RuleKind.NORM_SEEDED:
        if "strategy" not in raw:
            raise ConfigError(f"{prefix}.strategy", "missing required key")
        try:
            kw["strategy"] = Strategy.parse(str(raw["strategy"]))
        except ValueError:
            raise ConfigError(f"{prefix}.strategy", f"unknown strategy {raw['strategy']!r}") from None
        kw["seeding_fraction"] = _rate(f"{prefix}.seeding_fraction",
                                       raw.get("seeding_fraction", 1.0))
    return RuleConfig(id=rid, kind=kind, **kw)


def scenario_from_dict(doc: dict) -> Scenario:
    for name in doc:
        if name not in _SCHEMA and name != "rules":
            raise ConfigError(name, "unknown section")
    sc = _section(doc, "scenario")
    gr = _section(doc, "groups")
    ga = _section(doc, "game")
    le = _section(doc, "learning")
    ev = _section(doc, "evolution")

    rules_doc = doc.get("rules")
    if not isinstance(rules_doc, dict) or not rules_doc:
        raise ConfigError("rules", "at least one [rules.<id>] table is required")
    rules = tuple(_rule(rid, raw) for rid, raw in rules_doc.items())
    if len({r.id for r in rules}) != len(rules):
        raise ConfigError("rules", "duplicate rule ids")
    given = [r.initial_frequency is not None for r in rules]
    if any(given) and not all(given):
        raise ConfigError("rules", "initial_frequency must be given for every rule or none")
    if all(given) and sum(r.initial_frequency for r in rules) <= 0:
        raise ConfigError("rules", "initial frequencies must have positive total")

    matrix = PayoffMatrix.symmetric(
        _num("game.reward", ga["reward"]), _num("game.sucker", ga["sucker"]),
        _num("game.temptation", ga["temptation"]), _num("game.punishment", ga["punishment"]))
    if not validate_pd(matrix):
        raise ConfigError("game", "not a Prisoner's Dilemma (need temptation < reward < "
                                  "punishment < sucker in jail-years)")
    if ga["pairing"] not in (ROUND_ROBIN, RANDOM_PAIRS):
        raise ConfigError("game.pairing", f"unknown pairing policy {ga['pairing']!r}")
    mode = ev["mode"]
    if mode not in (EMPIRICAL, EQUILIBRIUM):
        raise ConfigError("evolution.mode", f"unknown mode {mode!r}")

    positive_int = dict(integer=True, check=lambda v: v >= 1, expect="must be >= 1")
    try:
        return Scenario(
            seed=_num("scenario.seed", sc["seed"], integer=True,
                      check=lambda v: 0 <= v < 2**64, expect="must be a 64-bit unsigned integer"),
            generations=_num("scenario.generations", sc["generations"], integer=True,
                             check=lambda v: v >= 0, expect="must be >= 0"),
            name=str(sc["name"]),
            n_groups=_num("groups.count", gr["count"], **positive_int),
            group_size=_num("groups.size", gr["size"], integer=True, check=lambda v: v >= 2,
                            expect="must be >= 2"),
            ai_fraction=_rate("groups.ai_fraction", gr["ai_fraction"]),
            initial_human=_mix("groups.initial_human", gr["initial_human"]),
            initial_ai=_mix("groups.initial_ai", gr["initial_ai"] if gr["initial_ai"] is not None
                            else gr["initial_human"]),
            base=matrix,
            rounds=_num("game.rounds", ga["rounds"], **positive_int),
            pairing=PairingPolicy(ga["pairing"], _num("game.matches", ga["matches"],
                                                      **positive_int)),
            rules=rules,
            imitation_rate=_rate("learning.imitation_rate", le["imitation_rate"]),
            mutation_rate=_rate("learning.mutation_rate", le["mutation_rate"]),
            selection_intensity=_num("learning.selection_intensity", le["selection_intensity"],
                                     check=lambda v: v > 0, expect="must be > 0"),
            fitness_params=FitnessMapParams(_num("evolution.alpha", ev["alpha"]),
                                            _num("evolution.beta", ev["beta"]),
                                            _num("evolution.gamma", ev["gamma"])),
            dt=_num("evolution.dt", ev["dt"], check=lambda v: v > 0, expect="must be > 0"),
            fitness_mode=mode,
            eq_max_iters=_num("evolution.max_iters", ev["max_iters"], **positive_int),
            eq_epsilon=_num("evolution.epsilon", ev["epsilon"], check=lambda v: v > 0,
                            expect="must be > 0"),
        )
    except ContractViolation as exc:
        raise ConfigError("scenario", str(exc)) from None


def load_document(text: str) -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"invalid TOML: {exc}") from None


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario file; errors name the offending section/key."""
    return scenario_from_dict(load_document(text))


def scenario_to_dict(s: Scenario) -> dict:
    """Full document with every key spelled out, suitable for ``scenario_from_dict``."""
    mix = lambda m: {st.value: m[st] for st in STRATEGIES}  # noqa: E731
    rules = {}
    for r in s.rules:
        entry: dict[str, Any] = {"kind": r.kind.value, "cost": r.cost, "name": r.name}
        if r.kind is RuleKind.GRADUATED_SANCTIONS:
            entry["lambda"] = r.severity
            entry["decay"] = r.decay
        elif r.kind is RuleKind.NORM_SEEDED:
            entry["strategy"] = r.strategy.value
            entry["seeding_fraction"] = r.seeding_fraction
        if r.initial_frequency is not None:
            entry["initial_frequency"] = r.initial_frequency
        rules[str(r.id)] = entry
    return {
        "scenario": {"seed": s.seed, "generations": s.generations, "name": s.name},
        "groups": {"count": s.n_groups, "size": s.group_size, "ai_fraction": s.ai_fraction,
                   "initial_human": mix(s.initial_human), "initial_ai": mix(s.initial_ai)},
        "game": {"reward": s.base.reward, "sucker": s.base.sucker,
                 "temptation": s.base.temptation, "punishment": s.base.punishment,
                 "rounds": s.rounds, "pairing": s.pairing.kind, "matches": s.pairing.matches},
        "rules": rules,
        "learning": {"imitation_rate": s.imitation_rate, "mutation_rate": s.mutation_rate,
                     "selection_intensity": s.selection_intensity},
        "evolution": {"alpha": s.fitness_params.alpha, "beta": s.fitness_params.beta,
                      "gamma": s.fitness_params.gamma, "dt": s.dt, "mode": s.fitness_mode,
                      "max_iters": s.eq_max_iters, "epsilon": s.eq_epsilon},
    }


def serialize_scenario(s: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(s))


def config_hash(s: Scenario) -> str:
    return hashlib.sha256(serialize_scenario(s).encode()).hexdigest()


def set_path(doc: dict, path: str, value: Any) -> None:
    """Assign ``value`` at a dotted key path such as ``learning.imitation_rate``."""
    parts = path.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(path, "path runs through a non-table value")
    node[parts[-1]] = value

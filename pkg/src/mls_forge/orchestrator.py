"""Generation loop: group play, fitness, Price accounting, rule selection, social learning."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from mls_forge.domain import (
    STRATEGIES,
    Agent,
    AgentKind,
    FitnessMapParams,
    Group,
    InteractionWeight,
    PayoffMatrix,
    RuleConfig,
    RuleKind,
    RulePopulation,
    Strategy,
    StrategyMix,
    CANONICAL_PD,
    validate_pd,
)
from mls_forge.errors import ContractViolation, GenerationError
from mls_forge.equilibrium import DEFAULT_EPSILON, DEFAULT_MAX_ITERS, BeliefDistribution
from mls_forge.game import PairingPolicy, run_group_round
from mls_forge.institution import (
    DEFAULT_DT,
    RuleFitnessReport,
    equilibrium_rule_report,
    replicator_step,
)
from mls_forge.price import GenerationSnapshot, PriceReport, price_decomposition, weighted_pair_covariance

log = logging.getLogger(__name__)

EMPIRICAL = "empirical"
EQUILIBRIUM = "equilibrium"

_INIT_STREAM = 0xFFFF_FFFF


@dataclass(frozen=True)
class Scenario:
    seed: int
    rules: tuple[RuleConfig, ...]
    generations: int = 100
    n_groups: int = 4
    group_size: int = 8
    ai_fraction: float = 0.5
    initial_human: StrategyMix = field(default_factory=StrategyMix)
    initial_ai: StrategyMix = field(default_factory=StrategyMix)
    base: PayoffMatrix = CANONICAL_PD
    rounds: int = 10
    pairing: PairingPolicy = field(default_factory=PairingPolicy)
    imitation_rate: float = 0.1
    mutation_rate: float = 0.01
    selection_intensity: float = 1.0
    fitness_params: FitnessMapParams = field(default_factory=FitnessMapParams)
    dt: float = DEFAULT_DT
    fitness_mode: str = EMPIRICAL
    eq_max_iters: int = DEFAULT_MAX_ITERS
    eq_epsilon: float = DEFAULT_EPSILON
    name: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ContractViolation("seed must be a 64-bit unsigned integer")
        if not self.rules:
            raise ContractViolation("at least one rule is required")
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ContractViolation("rule ids must be unique")
        if self.generations < 0:
            raise ContractViolation("generations must be >= 0")
        if self.n_groups < 1:
            raise ContractViolation("need at least one group")
        if self.group_size < 2:
            raise ContractViolation("groups need at least two agents")
        for name in ("ai_fraction", "imitation_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractViolation(f"{name} must lie in [0, 1]")
        if not self.selection_intensity > 0:
            raise ContractViolation("selection_intensity must be > 0")
        if not self.dt > 0:
            raise ContractViolation("dt must be > 0")
        if self.rounds < 1:
            raise ContractViolation("rounds must be >= 1")
        if not validate_pd(self.base):
            raise ContractViolation("base matrix is not a Prisoner's Dilemma")
        if self.fitness_mode not in (EMPIRICAL, EQUILIBRIUM):
            raise ContractViolation(f"unknown fitness mode {self.fitness_mode!r}")

    @property
    def population_size(self) -> int:
        return self.n_groups * self.group_size

    def initial_rule_population(self) -> RulePopulation:
        given = [r.initial_frequency for r in self.rules]
        ids = tuple(r.id for r in self.rules)
        if all(f is None for f in given):
            return RulePopulation.uniform(ids)
        if any(f is None for f in given):
            raise ContractViolation("give initial_frequency for every rule or for none")
        return RulePopulation.from_mapping(dict(zip(ids, given)))

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass
class GenerationRecord:
    generation: int
    frequencies: dict[int, float]
    reports: list[RuleFitnessReport]
    price: PriceReport | None
    census: dict[Strategy, int]
    mean_pi: float
    mean_pi_human: float | None
    mean_pi_ai: float | None
    mean_fitness: float
    cooperation_share: float
    group_rules: tuple[int, ...]
    clip_events: int = 0
    snapshot: GenerationSnapshot | None = field(default=None, repr=False)
    weights: list[InteractionWeight] = field(default_factory=list, repr=False)

    @property
    def fitness(self) -> dict[int, float]:
        return {rep.rule_id: rep.value for rep in self.reports}

    @property
    def mean_rule_fitness(self) -> float:
        return math.fsum(self.frequencies[rep.rule_id] * rep.value for rep in self.reports)


def assign_fitness(agents: Iterable[Agent], s: float) -> list[Agent]:
    """Set ``w = exp(s * pi)`` on every agent."""
    if not s > 0:
        raise ContractViolation("selection intensity must be > 0")
    out = list(agents)
    for a in out:
        a.fitness = math.exp(s * a.performance)
    return out


def social_learning_step(group: Group, m: float, u: float, rng: np.random.Generator,
                         strategies: Sequence[Strategy] = STRATEGIES) -> Group:
    """Imitation then mutation, applied synchronously to every member.

    Each agent copies, with probability ``m``, the pre-step strategy of a member
    drawn in proportion to fitness (itself included); then with probability
    ``u`` it takes a uniformly random strategy. Agents whose strategy changes
    start with a clean defection record.
    """
    if not (0.0 <= m <= 1.0 and 0.0 <= u <= 1.0):
        raise ContractViolation("learning rates must lie in [0, 1]")
    agents = group.agents
    before = [a.strategy for a in agents]
    w = np.array([a.fitness for a in agents], dtype=float)
    total = w.sum()
    p = w / total if total > 0 else None
    for i, agent in enumerate(agents):
        new = before[i]
        if rng.random() < m:
            new = before[int(rng.choice(len(agents), p=p))]
        if rng.random() < u:
            new = strategies[int(rng.integers(len(strategies)))]
        if new is not agent.strategy:
            agent.strategy = new
            agent.defection_counter = 0.0
    return group


def largest_remainder(frequencies: Sequence[float], total: int) -> list[int]:
    """Integer counts summing to ``total``, proportional to ``frequencies``; ties go to earlier entries."""
    quotas = [f * total for f in frequencies]
    counts = [int(math.floor(q)) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def reassign_groups(group_rules: Sequence[int], rule_ids: Sequence[int],
                    frequencies: Sequence[float]) -> list[int]:
    """Move as few groups as possible so each rule holds its rounded share of groups.

    Surplus groups (highest ids first) are handed to rules short of their
    target, in rule order.
    """
    target = dict(zip(rule_ids, largest_remainder(frequencies, len(group_rules))))
    held: dict[int, list[int]] = {rid: [] for rid in rule_ids}
    for gid, rid in enumerate(group_rules):
        held[rid].append(gid)
    released = []
    for rid in rule_ids:
        while len(held[rid]) > target[rid]:
            released.append(held[rid].pop())
    released.sort()
    out = list(group_rules)
    for rid in rule_ids:
        while len(held[rid]) < target[rid]:
            gid = released.pop(0)
            held[rid].append(gid)
            out[gid] = rid
    return out


def group_rng(seed: int, generation: int, group_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, generation, group_id]))


def build_population(scenario: Scenario, group_rules: Sequence[int]) -> list[Group]:
    n_ai = int(round(scenario.ai_fraction * scenario.group_size))
    groups = []
    for gid in range(scenario.n_groups):
        rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, _INIT_STREAM, gid]))
        agents = []
        for i in range(scenario.group_size):
            kind = AgentKind.AI if i >= scenario.group_size - n_ai else AgentKind.HUMAN
            mix = scenario.initial_ai if kind is AgentKind.AI else scenario.initial_human
            strategy = STRATEGIES[int(rng.choice(len(STRATEGIES), p=mix.as_array()))]
            agents.append(Agent(gid * scenario.group_size + i, kind, strategy))
        groups.append(Group(gid, group_rules[gid], agents))
    return groups


def apply_norm(group: Group, rule: RuleConfig) -> None:
    """Force the lowest-indexed share of members onto a seeded norm's strategy."""
    if rule.kind is not RuleKind.NORM_SEEDED:
        return
    count = int(round(rule.seeding_fraction * len(group.agents)))
    for agent in group.agents[:count]:
        agent.strategy = rule.strategy


def _kind_mean(agents: Sequence[Agent], kind: AgentKind) -> float | None:
    vals = [a.performance for a in agents if a.kind is kind]
    return math.fsum(vals) / len(vals) if vals else None


def empirical_rule_report(rule: RuleConfig, groups: Sequence[Group],
                          snapshot: GenerationSnapshot, weights,
                          params: FitnessMapParams) -> RuleFitnessReport:
    """Score a rule from the realized play of the groups it governs.

    A kind absent from those groups is scored at the all-agent mean.
    """
    members = [a for g in groups for a in g.agents]
    overall = math.fsum(a.performance for a in members) / len(members)
    pi_h = _kind_mean(members, AgentKind.HUMAN)
    pi_ai = _kind_mean(members, AgentKind.AI)
    gids = {g.id for g in groups}
    sub = GenerationSnapshot(tuple(a for a in snapshot.agents if a.group_id in gids))
    ids = {a.agent_id for a in sub.agents}
    sub_weights = [w for w in weights if w.human_id in ids]
    cov = weighted_pair_covariance(sub, sub_weights, "performance", "performance").value
    return RuleFitnessReport.build(rule, overall if pi_h is None else pi_h,
                                   overall if pi_ai is None else pi_ai, cov, params)


def run_scenario(scenario: Scenario) -> list[GenerationRecord]:
    """Run every generation of ``scenario``; the output depends on nothing but the scenario."""
    rules = {r.id: r for r in scenario.rules}
    rule_ids = tuple(rules)
    pop = scenario.initial_rule_population()
    group_rules = reassign_groups([rule_ids[0]] * scenario.n_groups, rule_ids,
                                  pop.frequencies)
    groups = build_population(scenario, group_rules)

    equilibrium_reports: dict[int, RuleFitnessReport] = {}

    def eq_report(rid: int) -> RuleFitnessReport:
        if rid not in equilibrium_reports:
            ai = scenario.ai_fraction
            equilibrium_reports[rid] = equilibrium_rule_report(
                rules[rid], scenario.base, scenario.rounds, scenario.fitness_params,
                BeliefDistribution(scenario.initial_human, scenario.initial_ai, ai),
                scenario.eq_max_iters, scenario.eq_epsilon)
        return equilibrium_reports[rid]

    last_report: dict[int, RuleFitnessReport] = {}
    records: list[GenerationRecord] = []
    prev_snapshot = None
    prev_weights: list = []
    for gen in range(scenario.generations):
        try:
            weights = []
            coop = actions = 0
            rngs = {}
            for g in groups:
                for a in g.agents:
                    a.defection_counter = 0.0
                rule = rules[g.rule]
                apply_norm(g, rule)
                rngs[g.id] = group_rng(scenario.seed, gen, g.id)
                res = run_group_round(g, scenario.base, rule, scenario.pairing,
                                      scenario.rounds, rngs[g.id])
                weights.extend(res.weights)
                coop += res.cooperations
                actions += res.actions
            everyone = [a for g in groups for a in g.agents]
            assign_fitness(everyone, scenario.selection_intensity)
            snapshot = GenerationSnapshot.from_groups(groups)
            price = None
            if prev_snapshot is not None:
                price = price_decomposition(prev_snapshot, snapshot, prev_weights)

            reports = []
            for rid in rule_ids:
                governed = [g for g in groups if g.rule == rid]
                if scenario.fitness_mode == EQUILIBRIUM:
                    rep = eq_report(rid)
                elif governed:
                    rep = empirical_rule_report(rules[rid], governed, snapshot, weights,
                                                scenario.fitness_params)
                else:
                    rep = last_report.get(rid) or eq_report(rid)
                last_report[rid] = rep
                reports.append(rep)

            records.append(GenerationRecord(
                generation=gen,
                frequencies=pop.as_dict(),
                reports=reports,
                price=price,
                census=dict(Counter(a.strategy for a in everyone)),
                mean_pi=math.fsum(a.performance for a in everyone) / len(everyone),
                mean_pi_human=_kind_mean(everyone, AgentKind.HUMAN),
                mean_pi_ai=_kind_mean(everyone, AgentKind.AI),
                mean_fitness=snapshot.mean_fitness,
                cooperation_share=coop / actions,
                group_rules=tuple(g.rule for g in groups),
                clip_events=pop.clip_events,
                snapshot=snapshot,
                weights=weights,
            ))

            pop = replicator_step(pop, [rep.value for rep in reports], scenario.dt)
            new_rules = reassign_groups([g.rule for g in groups], rule_ids, pop.frequencies)
            for g, rid in zip(groups, new_rules):
                g.rule = rid
            for g in groups:
                social_learning_step(g, scenario.imitation_rate, scenario.mutation_rate,
                                     rngs[g.id])
            prev_snapshot, prev_weights = snapshot, weights
        except GenerationError:
            raise
        except Exception as exc:
            raise GenerationError(gen, exc) from exc
    return records

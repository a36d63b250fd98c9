"""Multi-level selection accounting with the Price equation.

Two families of numbers are produced from a pair of generation snapshots:

* the exact two-level identity ``mean(w) * dpi = between + within``, where the
  change is the one produced by fitness-proportional reproduction without
  transmission bias and groups are weighted by size;
* the reported human/AI statistics, which average per-group covariances
  with equal weight per group and split out cross-kind pair covariances.

All covariances use population (1/N) normalization.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Iterable, NamedTuple, Sequence

from mls_forge.domain import AgentKind, Group, InteractionWeight
from mls_forge.errors import ContractViolation, MissingKindError

log = logging.getLogger(__name__)


class AgentRecord(NamedTuple):
    agent_id: int
    group_id: int
    kind: AgentKind
    fitness: float
    performance: float


@dataclass(frozen=True)
class GroupRecord:
    group_id: int
    members: tuple[AgentRecord, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def fitness(self) -> float:
        return _mean([a.fitness for a in self.members])

    @property
    def performance(self) -> float:
        return _mean([a.performance for a in self.members])

    def of_kind(self, kind: AgentKind) -> list[AgentRecord]:
        return [a for a in self.members if a.kind is kind]


@dataclass(frozen=True)
class GenerationSnapshot:
    """Per-agent (group, kind, fitness, performance) for one generation."""

    agents: tuple[AgentRecord, ...]
    groups: tuple[GroupRecord, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.agents:
            raise ContractViolation("snapshot has no agents")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ContractViolation("agent ids in a snapshot must be unique")
        by_group: dict[int, list[AgentRecord]] = defaultdict(list)
        for a in self.agents:
            by_group[a.group_id].append(a)
        groups = tuple(GroupRecord(g, tuple(by_group[g])) for g in sorted(by_group))
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_groups(cls, groups: Iterable[Group]) -> "GenerationSnapshot":
        return cls(tuple(AgentRecord(a.id, g.id, a.kind, a.fitness, a.performance)
                         for g in groups for a in g.agents))

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence]) -> "GenerationSnapshot":
        """Rows of (agent_id, group_id, kind, fitness, performance)."""
        return cls(tuple(AgentRecord(int(i), int(g), AgentKind(k) if not isinstance(k, AgentKind)
                                     else k, float(w), float(p))
                         for i, g, k, w, p in rows))

    @property
    def mean_fitness(self) -> float:
        return _mean([a.fitness for a in self.agents])

    @property
    def mean_performance(self) -> float:
        return _mean([a.performance for a in self.agents])

    def lookup(self) -> dict[int, AgentRecord]:
        return {a.agent_id: a for a in self.agents}

    def __len__(self):
        return len(self.agents)


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def covariance(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Population covariance."""
    if len(xs) != len(ys) or not xs:
        raise ContractViolation("covariance needs two equal-length nonempty sequences")
    mx, my = _mean(xs), _mean(ys)
    return math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys)) / len(xs)


def between_group_term(snapshot: GenerationSnapshot) -> float:
    """Covariance of group fitness with group mean performance, one vote per group."""
    groups = snapshot.groups
    if not groups:
        raise ContractViolation("empty population")
    return covariance([g.fitness for g in groups], [g.performance for g in groups])


def within_group_term(snapshot: GenerationSnapshot, kind: AgentKind) -> float:
    """Mean over groups containing ``kind`` of the within-kind fitness/performance covariance."""
    per_group = []
    for g in snapshot.groups:
        members = g.of_kind(kind)
        if members:
            per_group.append(covariance([a.fitness for a in members],
                                        [a.performance for a in members]))
    if not per_group:
        raise MissingKindError(f"no {kind.value} agents in the population")
    return _mean(per_group)


@dataclass
class PairCovariance:
    value: float
    groups_used: int
    zero_weight_groups: tuple[int, ...] = ()


def weighted_pair_covariance(snapshot: GenerationSnapshot,
                             weights: Iterable[InteractionWeight],
                             human_field: str, ai_field: str) -> PairCovariance:
    """Interaction-weighted covariance between a human attribute and an AI attribute.

    Within a group, deviations are taken from the group's kind-specific means
    (unweighted over that kind's members) and the products are averaged with
    the interaction weights. Groups with at least one listed pair are then
    averaged with equal weight; a group whose pairs all carry zero weight
    counts as zero and is reported.
    """
    agents = snapshot.lookup()
    pair_weight: dict[int, dict[tuple[int, int], float]] = defaultdict(lambda: defaultdict(float))
    for w in weights:
        if w.weight < 0:
            raise ContractViolation("interaction weights must be nonnegative")
        try:
            h, ai = agents[w.human_id], agents[w.ai_id]
        except KeyError as exc:
            raise ContractViolation(f"interaction references unknown agent {exc.args[0]}") from None
        if h.kind is not AgentKind.HUMAN or ai.kind is not AgentKind.AI:
            raise ContractViolation(f"pair ({w.human_id}, {w.ai_id}) is not human-AI")
        if h.group_id != ai.group_id:
            raise ContractViolation(f"pair ({w.human_id}, {w.ai_id}) spans two groups")
        pair_weight[h.group_id][(w.human_id, w.ai_id)] += w.weight

    per_group = []
    zero = []
    for g in snapshot.groups:
        pairs = pair_weight.get(g.group_id)
        if not pairs:
            continue
        total = math.fsum(pairs.values())
        if total <= 0:
            zero.append(g.group_id)
            per_group.append(0.0)
            continue
        hx = _mean([getattr(a, human_field) for a in g.of_kind(AgentKind.HUMAN)])
        ay = _mean([getattr(a, ai_field) for a in g.of_kind(AgentKind.AI)])
        acc = math.fsum(om * (getattr(agents[h], human_field) - hx)
                        * (getattr(agents[ai], ai_field) - ay)
                        for (h, ai), om in pairs.items())
        per_group.append(acc / total)
    if zero:
        log.warning("groups %s have human-AI pairs with zero total weight", zero)
    value = _mean(per_group) if per_group else 0.0
    return PairCovariance(value, len(per_group), tuple(zero))


class CrossTerms(NamedTuple):
    human_fitness_ai_performance: float
    ai_fitness_human_performance: float


def cross_agent_terms(snapshot: GenerationSnapshot,
                      weights: Sequence[InteractionWeight]) -> CrossTerms:
    """(Cov of human fitness with AI performance, Cov of AI fitness with human performance)."""
    weights = list(weights)
    t1 = weighted_pair_covariance(snapshot, weights, "fitness", "performance")
    t2 = weighted_pair_covariance(snapshot, weights, "performance", "fitness")
    return CrossTerms(t1.value, t2.value)


@dataclass
class PriceReport:
    between_group: float
    within_human: float
    within_ai: float
    cross_h_ai: float
    cross_ai_h: float
    delta_pi_bar: float
    lhs: float
    residual_two_term: float
    residual_five_term: float
    # Diagnostics outside the CSV column set.
    between_group_identity: float = 0.0
    within_total: float = 0.0
    transmission: float = 0.0
    missing_kinds: tuple[str, ...] = ()
    zero_weight_groups: tuple[int, ...] = ()

    CSV_COLUMNS = ("between_group", "within_human", "within_ai", "cross_h_ai", "cross_ai_h",
                   "delta_pi_bar", "lhs", "residual_two_term", "residual_five_term")

    def row(self) -> list[float]:
        return [getattr(self, c) for c in self.CSV_COLUMNS]

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def price_decomposition(snap_t: GenerationSnapshot, snap_t1: GenerationSnapshot,
                        weights: Sequence[InteractionWeight] = ()) -> PriceReport:
    """Decompose the change in mean performance between two generations.

    ``delta_pi_bar`` is the realized change between the snapshots. ``lhs`` is
    ``mean(w) * dpi`` for the offspring population implied by ``snap_t``
    (each agent leaves offspring in proportion to its fitness and passes its
    performance on unchanged). The gap between the two, scaled by mean
    fitness, is reported as ``transmission``.
    """
    w_bar = snap_t.mean_fitness
    if not w_bar > 0:
        raise ContractViolation("mean fitness must be positive")
    if [g.group_id for g in snap_t.groups] != [g.group_id for g in snap_t1.groups]:
        raise ContractViolation("snapshots must share the same groups")

    pi_bar = snap_t.mean_performance
    delta = snap_t1.mean_performance - pi_bar
    # w_bar * (sum(w pi) / sum(w) - pi_bar) is the population covariance of w and pi;
    # the centered form avoids the cancellation of the quotient.
    lhs = math.fsum((a.fitness - w_bar) * (a.performance - pi_bar)
                    for a in snap_t.agents) / len(snap_t)

    n = len(snap_t)
    between_id = math.fsum(g.size * (g.fitness - w_bar) * (g.performance - pi_bar)
                           for g in snap_t.groups) / n
    within_total = math.fsum(
        g.size * covariance([a.fitness for a in g.members], [a.performance for a in g.members])
        for g in snap_t.groups) / n

    missing = []
    kind_terms = {}
    for kind in AgentKind:
        try:
            kind_terms[kind] = within_group_term(snap_t, kind)
        except MissingKindError:
            kind_terms[kind] = 0.0
            missing.append(kind.value)

    weights = list(weights)
    c1 = weighted_pair_covariance(snap_t, weights, "fitness", "performance")
    c2 = weighted_pair_covariance(snap_t, weights, "performance", "fitness")
    wh, wa = kind_terms[AgentKind.HUMAN], kind_terms[AgentKind.AI]

    return PriceReport(
        between_group=between_group_term(snap_t),
        within_human=wh,
        within_ai=wa,
        cross_h_ai=c1.value,
        cross_ai_h=c2.value,
        delta_pi_bar=delta,
        lhs=lhs,
        residual_two_term=lhs - (between_id + within_total),
        residual_five_term=within_total - (wh + wa + c1.value + c2.value),
        between_group_identity=between_id,
        within_total=within_total,
        transmission=w_bar * delta - lhs,
        missing_kinds=tuple(missing),
        zero_weight_groups=tuple(sorted(set(c1.zero_weight_groups) | set(c2.zero_weight_groups))),
    )


"""Sanctioned repeated Prisoner's Dilemma: payoff transformation, strategies, matches."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from mls_forge.domain import (
    Agent,
    AgentKind,
    Group,
    InteractionWeight,
    PayoffMatrix,
    RuleConfig,
    RuleKind,
    Strategy,
)
from mls_forge.errors import ContractViolation

C = "C"
D = "D"

ROUND_ROBIN = "round-robin"
RANDOM_PAIRS = "random-pairs"


def apply_rule(base: PayoffMatrix, rule: RuleConfig, k_row: float, k_col: float) -> PayoffMatrix:
    """Return the jail matrix in force for players holding counters ``k_row``, ``k_col``.

    Graduated sanctions add ``severity * k`` to a player's jail in every outcome
    where that player defects. Other rule kinds leave the matrix alone.
    """
    if k_row < 0 or k_col < 0:
        raise ContractViolation("defection counters must be nonnegative")
    if rule.kind is not RuleKind.GRADUATED_SANCTIONS:
        return base
    pr = rule.severity * k_row
    pc = rule.severity * k_col
    return PayoffMatrix(
        cc=base.cc,
        cd=(base.cd[0], base.cd[1] + pc),
        dc=(base.dc[0] + pr, base.dc[1]),
        dd=(base.dd[0] + pr, base.dd[1] + pc),
    )


def next_action(strategy: Strategy, own_last: str | None = None,
                opponent_last: str | None = None, own_last_jail: float | None = None,
                aspiration: float = 1.0) -> str:
    """Pick the next move from one round of memory.

    Win-stay-lose-shift treats a round as a win when its jail did not exceed
    ``aspiration`` (the mutual-cooperation reward).
    """
    if strategy is Strategy.ALL_C:
        return C
    if strategy is Strategy.ALL_D:
        return D
    if strategy is Strategy.TIT_FOR_TAT:
        return C if opponent_last is None else opponent_last
    if strategy is Strategy.WIN_STAY_LOSE_SHIFT:
        if own_last is None:
            return C
        if own_last_jail is None:
            raise ContractViolation("win-stay-lose-shift needs its last jail value")
        if own_last_jail <= aspiration:
            return own_last
        return D if own_last == C else C
    raise ContractViolation(f"unknown strategy {strategy!r}")


class Round(NamedTuple):
    action_row: str
    action_col: str
    jail_row: float
    jail_col: float
    k_row_after: float
    k_col_after: float


@dataclass
class MatchTrace:
    rounds: list[Round] = field(default_factory=list)

    def __len__(self):
        return len(self.rounds)

    @property
    def jail_row(self) -> float:
        return sum(r.jail_row for r in self.rounds)

    @property
    def jail_col(self) -> float:
        return sum(r.jail_col for r in self.rounds)

    @property
    def cooperations(self) -> int:
        return sum((r.action_row == C) + (r.action_col == C) for r in self.rounds)


def play_match(row: Agent, col: Agent, base: PayoffMatrix, rule: RuleConfig,
               rounds: int, record: bool = True) -> MatchTrace | tuple[float, float, int]:
    """Play ``rounds`` rounds between two agents.

    Each round is priced with the counters held before it; afterwards every
    defector's counter grows by one and both counters are multiplied by the
    rule's retention. The agents' counters are updated in place, so they carry
    over into the next match.

    Returns the full trace, or ``(jail_row, jail_col, cooperations)`` when
    ``record`` is false.
    """
    if rounds < 1:
        raise ContractViolation("a match needs at least one round")
    sanctioned = rule.kind is RuleKind.GRADUATED_SANCTIONS
    lam = rule.severity
    keep = rule.counter_retention
    aspiration = base.reward
    k_r, k_c = row.defection_counter, col.defection_counter
    if k_r < 0 or k_c < 0:
        raise ContractViolation("defection counters must be nonnegative")
    s_r, s_c = row.strategy, col.strategy
    last_r = last_c = None
    jail_last_r = jail_last_c = None
    total_r = total_c = 0.0
    coop = 0
    trace = MatchTrace() if record else None
    for _ in range(rounds):
        a_r = next_action(s_r, last_r, last_c, jail_last_r, aspiration)
        a_c = next_action(s_c, last_c, last_r, jail_last_c, aspiration)
        d_r = a_r == D
        d_c = a_c == D
        j_r, j_c = base.entry(d_r, d_c)
        if sanctioned:
            if d_r:
                j_r += lam * k_r
            if d_c:
                j_c += lam * k_c
        if d_r:
            k_r += 1.0
        else:
            coop += 1
        if d_c:
            k_c += 1.0
        else:
            coop += 1
        k_r *= keep
        k_c *= keep
        total_r += j_r
        total_c += j_c
        last_r, last_c = a_r, a_c
        jail_last_r, jail_last_c = j_r, j_c
        if trace is not None:
            trace.rounds.append(Round(a_r, a_c, j_r, j_c, k_r, k_c))
    row.defection_counter = k_r
    col.defection_counter = k_c
    if trace is not None:
        return trace
    return total_r, total_c, coop


@dataclass(frozen=True)
class PairingPolicy:
    """Who plays whom within a group.

    ``round-robin`` plays every unordered pair once. ``random-pairs`` draws
    ``matches`` random perfect matchings; with an odd group the leftover
    agent is matched against a randomly chosen partner.
    """

    kind: str = ROUND_ROBIN
    matches: int = 1

    def __post_init__(self):
        if self.kind not in (ROUND_ROBIN, RANDOM_PAIRS):
            raise ContractViolation(f"unknown pairing policy {self.kind!r}")
        if self.matches < 1:
            raise ContractViolation("pairing needs at least one match")

    def pairs(self, n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        if self.kind == ROUND_ROBIN:
            return [(i, j) for i in range(n) for j in range(i + 1, n)]
        out = []
        for _ in range(self.matches):
            perm = rng.permutation(n)
            out.extend((int(perm[i]), int(perm[i + 1])) for i in range(0, n - 1, 2))
            if n % 2:
                odd = int(perm[-1])
                partner = int(perm[rng.integers(n - 1)])
                out.append((odd, partner))
        return out


@dataclass
class GroupRoundResult:
    performance: dict[int, float]
    weights: list[InteractionWeight]
    rounds_played: dict[int, int]
    cooperations: int
    actions: int

    @property
    def cooperation_share(self) -> float:
        return self.cooperations / self.actions if self.actions else 0.0


def run_group_round(group: Group, base: PayoffMatrix, rule: RuleConfig,
                    schedule: PairingPolicy, rounds: int,
                    rng: np.random.Generator) -> GroupRoundResult:
    """Play one generation of matches inside ``group``.

    Writes each agent's performance (negative mean jail per round played) back
    onto the agent and returns it together with human-AI interaction weights,
    which count the rounds each cross-kind pair spent together.
    """
    agents = group.agents
    n = len(agents)
    if n < 2:
        raise ContractViolation(f"group {group.id} has {n} agent(s); no pairing possible")
    if rounds < 1:
        raise ContractViolation("rounds must be >= 1")
    jail = [0.0] * n
    played = [0] * n
    cross: dict[tuple[int, int], float] = defaultdict(float)
    coop = 0
    for i, j in schedule.pairs(n, rng):
        a, b = agents[i], agents[j]
        j_a, j_b, c = play_match(a, b, base, rule, rounds, record=False)
        jail[i] += j_a
        jail[j] += j_b
        played[i] += rounds
        played[j] += rounds
        coop += c
        if a.kind is not b.kind:
            h, ai = (a, b) if a.kind is AgentKind.HUMAN else (b, a)
            cross[(h.id, ai.id)] += rounds
    perf = {}
    for idx, a in enumerate(agents):
        if played[idx] == 0:
            raise ContractViolation(f"agent {a.id} played no rounds")
        a.performance = -jail[idx] / played[idx]
        perf[a.id] = a.performance
    weights = [InteractionWeight(h, ai, w) for (h, ai), w in sorted(cross.items())]
    return GroupRoundResult(perf, weights, dict(zip((a.id for a in agents), played)),
                            coop, sum(played))

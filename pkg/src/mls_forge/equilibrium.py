"""Institutional equilibria of the rule-transformed repeated game.

Every pairing of the four deterministic strategies is played out exactly, so
expected payoffs are belief-weighted averages of a 4x4 match-utility table.
Equilibria are located by damped fictitious play and then audited for
profitable deviations instead of being trusted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from mls_forge.domain import (
    STRATEGIES,
    STRATEGY_INDEX,
    Agent,
    AgentKind,
    PayoffMatrix,
    RuleConfig,
    RuleKind,
    Strategy,
    StrategyMix,
)
from mls_forge.errors import ContractViolation, NotConvergedError
from mls_forge.game import play_match

DEFAULT_EPSILON = 1e-9
DEFAULT_MAX_ITERS = 10_000
TIE_TOL = 1e-12


@dataclass(frozen=True)
class BeliefDistribution:
    """Beliefs about how each kind of agent plays, plus the AI share of partners."""

    human: StrategyMix = field(default_factory=StrategyMix)
    ai: StrategyMix = field(default_factory=StrategyMix)
    ai_share: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.ai_share <= 1.0:
            raise ContractViolation("ai_share must lie in [0, 1]")

    @classmethod
    def point(cls, strategy: Strategy, ai_share: float = 0.5) -> "BeliefDistribution":
        mix = StrategyMix.point(strategy)
        return cls(mix, mix, ai_share)

    @classmethod
    def same(cls, mix: StrategyMix, ai_share: float = 0.5) -> "BeliefDistribution":
        return cls(mix, mix, ai_share)

    def of(self, kind: AgentKind) -> StrategyMix:
        return self.human if kind is AgentKind.HUMAN else self.ai

    def partner_mix(self) -> np.ndarray:
        return (1.0 - self.ai_share) * self.human.as_array() + self.ai_share * self.ai.as_array()


@lru_cache(maxsize=256)
def _utility_table(rule: RuleConfig, base: PayoffMatrix, rounds: int) -> np.ndarray:
    n = len(STRATEGIES)
    table = np.empty((n, n))
    for i, s in enumerate(STRATEGIES):
        for j, t in enumerate(STRATEGIES):
            me = Agent(0, AgentKind.HUMAN, s)
            other = Agent(1, AgentKind.HUMAN, t)
            trace = play_match(me, other, base, rule, rounds)
            table[i, j] = -trace.jail_row / rounds
    table.setflags(write=False)
    return table


def utility_table(rule: RuleConfig, base: PayoffMatrix, rounds: int) -> np.ndarray:
    """``U[i, j]``: per-round utility of strategy i against strategy j, counters starting at 0."""
    if rounds < 1:
        raise ContractViolation("rounds must be >= 1")
    return _utility_table(rule, base, rounds)


def opponent_mix(beliefs: BeliefDistribution, rule: RuleConfig) -> np.ndarray:
    """Distribution of partner strategies, including agents a norm forces onto its strategy."""
    mix = beliefs.partner_mix()
    if rule.kind is RuleKind.NORM_SEEDED:
        phi = rule.seeding_fraction
        seeded = StrategyMix.point(rule.strategy).as_array()
        mix = phi * seeded + (1.0 - phi) * mix
    return mix


def expected_payoff(strategy: Strategy, beliefs: BeliefDistribution, rule: RuleConfig,
                    base: PayoffMatrix, rounds: int) -> float:
    table = utility_table(rule, base, rounds)
    return float(table[STRATEGY_INDEX[strategy]] @ opponent_mix(beliefs, rule))


def best_response_to(values: np.ndarray, incumbent: np.ndarray | None = None) -> Strategy:
    """Argmax over strategy values.

    Near-ties go to the strategy holding the most ``incumbent`` mass when
    given, then to the earliest strategy in enumeration order.
    """
    top = float(np.max(values))
    tol = TIE_TOL * max(1.0, abs(top))
    tied = [i for i, v in enumerate(values) if v >= top - tol]
    if incumbent is not None:
        held = max(incumbent[i] for i in tied)
        tied = [i for i in tied if incumbent[i] == held]
    return STRATEGIES[tied[0]]


def best_response(kind: AgentKind, beliefs: BeliefDistribution, rule: RuleConfig,
                  base: PayoffMatrix, rounds: int) -> Strategy:
    # Both kinds share payoffs and the strategy set, so ``kind`` only matters
    # once kind-specific strategy sets exist.
    del kind
    table = utility_table(rule, base, rounds)
    return best_response_to(table @ opponent_mix(beliefs, rule))


@dataclass
class EquilibriumResult:
    """Fixed point of fictitious play.

    ``profile`` holds the freely chosen strategy mix of each kind; under a
    seeded norm the population also contains the forced agents, see
    ``population``.
    """

    rule: RuleConfig
    beliefs: BeliefDistribution
    pi_human: float
    pi_ai: float
    converged: bool
    iterations: int
    movement: float

    @property
    def profile(self) -> dict[AgentKind, StrategyMix]:
        return {AgentKind.HUMAN: self.beliefs.human, AgentKind.AI: self.beliefs.ai}

    def population(self, kind: AgentKind) -> np.ndarray:
        mix = self.beliefs.of(kind).as_array()
        if self.rule.kind is RuleKind.NORM_SEEDED:
            phi = self.rule.seeding_fraction
            mix = phi * StrategyMix.point(self.rule.strategy).as_array() + (1 - phi) * mix
        return mix

    def require_converged(self) -> "EquilibriumResult":
        if not self.converged:
            raise NotConvergedError(
                f"fictitious play for rule {self.rule.label} did not converge after "
                f"{self.iterations} iterations (last movement {self.movement:.3g})", self)
        return self

    def as_dict(self) -> dict:
        return {
            "rule": self.rule.label,
            "converged": self.converged,
            "iterations": self.iterations,
            "movement": self.movement,
            "pi_human": self.pi_human,
            "pi_ai": self.pi_ai,
            "profile": {
                kind.value: {s.value: self.beliefs.of(kind)[s] for s in STRATEGIES}
                for kind in AgentKind
            },
        }


def find_equilibrium(rule: RuleConfig, base: PayoffMatrix, rounds: int,
                     initial_beliefs: BeliefDistribution | None = None,
                     max_iters: int = DEFAULT_MAX_ITERS,
                     epsilon: float = DEFAULT_EPSILON) -> EquilibriumResult:
    """Damped fictitious play: beliefs move toward the current best response with step 1/(t+1).

    The first step (t = 0) jumps straight to the best response to the initial
    beliefs, so a strict equilibrium given as the start is confirmed after one
    iteration. Among tied best responses the one already carrying the most
    belief mass is kept, which stops the process drifting between payoff-
    equivalent strategies. Convergence means the L-inf belief movement fell below
    ``epsilon``; otherwise the last iterate is returned with ``converged=False``.
    """
    if max_iters < 1:
        raise ContractViolation("max_iters must be >= 1")
    if not epsilon > 0:
        raise ContractViolation("epsilon must be > 0")
    beliefs = initial_beliefs or BeliefDistribution()
    table = utility_table(rule, base, rounds)
    ai_share = beliefs.ai_share
    mu = {k: beliefs.of(k).as_array() for k in AgentKind}
    converged = False
    movement = np.inf
    t = 0
    for t in range(max_iters):
        current = BeliefDistribution(*(_as_mix(mu[k]) for k in AgentKind), ai_share)
        values = table @ opponent_mix(current, rule)
        movement = 0.0
        for k in AgentKind:
            target = np.zeros(len(STRATEGIES))
            target[STRATEGY_INDEX[best_response_to(values, mu[k])]] = 1.0
            updated = mu[k] + (target - mu[k]) / (t + 1)
            movement = max(movement, float(np.max(np.abs(updated - mu[k]))))
            mu[k] = updated
        if movement < epsilon:
            converged = True
            break
    final = BeliefDistribution(*(_as_mix(mu[k]) for k in AgentKind), ai_share)
    values = table @ opponent_mix(final, rule)
    result = EquilibriumResult(rule, final, 0.0, 0.0, converged, t + 1, movement)
    result.pi_human = float(result.population(AgentKind.HUMAN) @ values)
    result.pi_ai = float(result.population(AgentKind.AI) @ values)
    return result


def _as_mix(p: np.ndarray) -> StrategyMix:
    p = np.clip(p, 0.0, None)
    return StrategyMix(tuple(float(x) for x in p / p.sum()))


def deviation_gains(result: EquilibriumResult, base: PayoffMatrix, rounds: int,
                    support_tol: float = 1e-6) -> dict[AgentKind, float]:
    """Largest payoff gain from switching any supported strategy to any other pure strategy.

    Payoffs are recomputed strategy by strategy through ``expected_payoff``.
    Strategies forced by a seeded norm are not choices and are not audited.
    """
    gains = {}
    for kind in AgentKind:
        values = {s: expected_payoff(s, result.beliefs, result.rule, base, rounds)
                  for s in STRATEGIES}
        best = max(values.values())
        mix = result.beliefs.of(kind)
        supported = [values[s] for s in STRATEGIES if mix[s] > support_tol]
        gains[kind] = best - min(supported)
    return gains


def audit_equilibrium(result: EquilibriumResult, base: PayoffMatrix, rounds: int,
                      epsilon: float = DEFAULT_EPSILON) -> bool:
    return all(g <= epsilon for g in deviation_gains(result, base, rounds).values())


def equilibrium_cross_covariance(result: EquilibriumResult, base: PayoffMatrix,
                                 rounds: int) -> float:
    """Covariance of (human utility, AI utility) over human-AI pairings drawn from the profile."""
    table = utility_table(result.rule, base, rounds)
    p_h = result.population(AgentKind.HUMAN)
    p_a = result.population(AgentKind.AI)
    weight = np.outer(p_h, p_a)
    x = table
    y = table.T
    mx = float(np.sum(weight * x))
    my = float(np.sum(weight * y))
    return float(np.sum(weight * (x - mx) * (y - my)))

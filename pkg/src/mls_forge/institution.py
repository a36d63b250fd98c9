"""Fitness of rule configurations and replicator dynamics over their frequencies."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from mls_forge.domain import FitnessMapParams, PayoffMatrix, RuleConfig, RulePopulation, check_simplex
from mls_forge.equilibrium import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    BeliefDistribution,
    EquilibriumResult,
    equilibrium_cross_covariance,
    find_equilibrium,
)
from mls_forge.errors import ContractViolation, NotConvergedError

log = logging.getLogger(__name__)

OFF_SIMPLEX_TOL = 1e-9
DEFAULT_DT = 0.05


def fitness_map(pi_human: float, pi_ai: float, cross_cov: float,
                params: FitnessMapParams) -> float:
    """Weighted sum of mean human performance, mean AI performance and their covariance."""
    vals = (pi_human, pi_ai, cross_cov)
    if not all(math.isfinite(v) for v in vals):
        raise ContractViolation("fitness_map inputs must be finite")
    return params.alpha * pi_human + params.beta * pi_ai + params.gamma * cross_cov


def institutional_fitness(rule: RuleConfig, eq: EquilibriumResult, cross_cov: float,
                          params: FitnessMapParams, allow_unconverged: bool = False) -> float:
    if not eq.converged and not allow_unconverged:
        raise NotConvergedError(f"equilibrium for rule {rule.label} has not converged", eq)
    return fitness_map(eq.pi_human, eq.pi_ai, cross_cov, params) - rule.cost


@dataclass
class RuleFitnessReport:
    rule_id: int
    value: float        # V_j
    f_value: float
    pi_human: float
    pi_ai: float
    cross_cov: float
    cost: float

    @classmethod
    def build(cls, rule: RuleConfig, pi_human: float, pi_ai: float, cross_cov: float,
              params: FitnessMapParams) -> "RuleFitnessReport":
        f = fitness_map(pi_human, pi_ai, cross_cov, params)
        return cls(rule.id, f - rule.cost, f, pi_human, pi_ai, cross_cov, rule.cost)


def replicator_step(r: RulePopulation, fitness: Sequence[float], dt: float) -> RulePopulation:
    """One explicit-Euler step of the replicator equation, projected back onto the simplex.

    Negative intermediates are clipped to zero before renormalizing; each
    clip increments ``clip_events`` on the returned population.
    """
    freqs = np.asarray(r.frequencies, dtype=float)
    v = np.asarray(fitness, dtype=float)
    if v.shape != freqs.shape:
        raise ContractViolation("one fitness value per rule is required")
    if not np.all(np.isfinite(v)):
        raise ContractViolation("rule fitness must be finite")
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    check_simplex(freqs, OFF_SIMPLEX_TOL)

    v_bar = float(freqs @ v)
    nxt = freqs + dt * freqs * (v - v_bar)
    clips = r.clip_events
    if np.any(nxt < 0):
        clips += 1
        log.warning("replicator step clipped negative frequencies; reduce dt (dt=%g)", dt)
        nxt = np.clip(nxt, 0.0, None)
    nxt = nxt / math.fsum(nxt)
    return RulePopulation(nxt, r.rule_ids, clips)


def mean_fitness(r: RulePopulation, fitness: Sequence[float]) -> float:
    return float(r.frequencies @ np.asarray(fitness, dtype=float))


def equilibrium_rule_report(rule: RuleConfig, base: PayoffMatrix, rounds: int,
                            params: FitnessMapParams,
                            beliefs: BeliefDistribution | None = None,
                            max_iters: int = DEFAULT_MAX_ITERS,
                            epsilon: float = DEFAULT_EPSILON) -> RuleFitnessReport:
    eq = find_equilibrium(rule, base, rounds, beliefs, max_iters, epsilon).require_converged()
    cov = equilibrium_cross_covariance(eq, base, rounds)
    institutional_fitness(rule, eq, cov, params)
    return RuleFitnessReport.build(rule, eq.pi_human, eq.pi_ai, cov, params)


@dataclass
class EvolutionStep:
    generation: int
    population: RulePopulation     # frequencies in force during this generation
    reports: list[RuleFitnessReport]

    @property
    def fitness(self) -> np.ndarray:
        return np.array([rep.value for rep in self.reports])

    @property
    def mean_fitness(self) -> float:
        return mean_fitness(self.population, self.fitness)


Evaluator = Callable[[int, RulePopulation], list[RuleFitnessReport]]


def evolve_rules(rules: Sequence[RuleConfig], base: PayoffMatrix, rounds: int,
                 params: FitnessMapParams, generations: int, dt: float = DEFAULT_DT,
                 initial: RulePopulation | None = None,
                 beliefs: BeliefDistribution | None = None,
                 evaluate: Evaluator | None = None) -> list[EvolutionStep]:
    """Evolve rule frequencies for ``generations`` steps.

    By default each rule is scored from its institutional equilibrium (these
    scores do not depend on the frequencies, so they are computed once).
    ``evaluate`` replaces that with any per-generation scoring, e.g. realized
    group outcomes.
    """
    if not rules:
        raise ContractViolation("at least one rule is required")
    ids = tuple(rule.id for rule in rules)
    if len(set(ids)) != len(ids):
        raise ContractViolation("rule ids must be unique")
    pop = initial or RulePopulation.uniform(ids)
    if pop.rule_ids != ids:
        raise ContractViolation("initial population does not match the rule ids")

    if evaluate is None:
        static = [equilibrium_rule_report(rule, base, rounds, params, beliefs) for rule in rules]
        evaluate = lambda gen, r: static  # noqa: E731

    history = []
    for gen in range(generations):
        reports = evaluate(gen, pop)
        history.append(EvolutionStep(gen, pop, reports))
        pop = replicator_step(pop, [rep.value for rep in reports], dt)
    return history

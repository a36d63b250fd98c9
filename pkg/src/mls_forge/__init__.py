"""Multi-level selection simulator for mixed human/AI groups under institutional rules."""

from mls_forge.domain import (
    CANONICAL_PD,
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
    validate_pd,
)
from mls_forge.equilibrium import BeliefDistribution, EquilibriumResult, find_equilibrium
from mls_forge.game import PairingPolicy, apply_rule, next_action, play_match, run_group_round
from mls_forge.institution import evolve_rules, fitness_map, institutional_fitness, replicator_step
from mls_forge.orchestrator import Scenario, run_scenario
from mls_forge.price import GenerationSnapshot, PriceReport, price_decomposition

__version__ = "0.1.0"

"""Core data model: agents, groups, payoff matrices, rule configurations."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from mls_forge.errors import ContractViolation

SIMPLEX_TOL = 1e-12


class AgentKind(enum.Enum):
    HUMAN = "human"
    AI = "ai"


class Strategy(enum.Enum):
    # Declaration order is the best-response tie-break order.
    ALL_C = "AllC"
    TIT_FOR_TAT = "TitForTat"
    WIN_STAY_LOSE_SHIFT = "WinStayLoseShift"
    ALL_D = "AllD"

    @property
    def has_memory(self) -> bool:
        return self in (Strategy.TIT_FOR_TAT, Strategy.WIN_STAY_LOSE_SHIFT)

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        key = name.replace("-", "").replace("_", "").lower()
        for s in cls:
            if s.value.lower() == key:
                return s
        aliases = {"tft": cls.TIT_FOR_TAT, "wsls": cls.WIN_STAY_LOSE_SHIFT,
                   "pavlov": cls.WIN_STAY_LOSE_SHIFT}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown strategy {name!r}")


STRATEGIES: tuple[Strategy, ...] = tuple(Strategy)
STRATEGY_INDEX = {s: i for i, s in enumerate(STRATEGIES)}


@dataclass(slots=True)
class Agent:
    """A strategy-bearing unit.

    ``performance`` is utility per round (negative mean jail-years) and
    ``fitness`` is the reproductive weight derived from it.
    """

    id: int
    kind: AgentKind
    strategy: Strategy
    defection_counter: float = 0.0
    fitness: float = 1.0
    performance: float = 0.0

    def __post_init__(self):
        if not self.defection_counter >= 0:
            raise ContractViolation(f"agent {self.id}: defection counter must be >= 0")
        if not self.fitness >= 0:
            raise ContractViolation(f"agent {self.id}: fitness must be >= 0")


@dataclass
class Group:
    id: int
    rule: int
    agents: list[Agent]

    def __post_init__(self):
        if not self.agents:
            raise ContractViolation(f"group {self.id} is empty")

    @property
    def group_performance(self) -> float:
        return math.fsum(a.performance for a in self.agents) / len(self.agents)

    @property
    def group_fitness(self) -> float:
        return math.fsum(a.fitness for a in self.agents) / len(self.agents)

    def members(self, kind: AgentKind) -> list[Agent]:
        return [a for a in self.agents if a.kind is kind]

    def __len__(self):
        return len(self.agents)


@dataclass(frozen=True)
class PayoffMatrix:
    """Jail-years for the ordered outcomes; each entry is (row years, column years).

    Lower is better for the player.
    """

    cc: tuple[float, float] = (1.0, 1.0)
    cd: tuple[float, float] = (3.0, 0.0)
    dc: tuple[float, float] = (0.0, 3.0)
    dd: tuple[float, float] = (2.0, 2.0)

    @classmethod
    def symmetric(cls, reward: float, sucker: float, temptation: float,
                  punishment: float) -> "PayoffMatrix":
        return cls(cc=(reward, reward), cd=(sucker, temptation),
                   dc=(temptation, sucker), dd=(punishment, punishment))

    @classmethod
    def from_layout(cls, values: Sequence[float]) -> "PayoffMatrix":
        """Build from the (R, S, T, P) jail layout, e.g. ``(1, 3, 0, 2)``."""
        r, s, t, p = (float(v) for v in values)
        return cls.symmetric(r, s, t, p)

    def entry(self, row_defects: bool, col_defects: bool) -> tuple[float, float]:
        if row_defects:
            return self.dd if col_defects else self.dc
        return self.cd if col_defects else self.cc

    @property
    def reward(self) -> float:
        return self.cc[0]

    @property
    def sucker(self) -> float:
        return self.cd[0]

    @property
    def temptation(self) -> float:
        return self.dc[0]

    @property
    def punishment(self) -> float:
        return self.dd[0]

    def values(self) -> tuple[float, ...]:
        return (*self.cc, *self.cd, *self.dc, *self.dd)

    def negated(self) -> "PayoffMatrix":
        """Same outcomes expressed in utility (negative jail) terms."""
        neg = lambda pair: (-pair[0], -pair[1])  # noqa: E731
        return PayoffMatrix(neg(self.cc), neg(self.cd), neg(self.dc), neg(self.dd))


def validate_pd(matrix: PayoffMatrix) -> bool:
    """True iff both players face the jail ordering T < R < P < S."""
    if not all(math.isfinite(v) for v in matrix.values()):
        return False
    row = (matrix.dc[0], matrix.cc[0], matrix.dd[0], matrix.cd[0])
    col = (matrix.cd[1], matrix.cc[1], matrix.dd[1], matrix.dc[1])
    return all(a < b < c < d for a, b, c, d in (row, col))


def validate_pd_utility(matrix: PayoffMatrix) -> bool:
    """Utility-convention check: T > R > P > S for both players."""
    row = (matrix.dc[0], matrix.cc[0], matrix.dd[0], matrix.cd[0])
    col = (matrix.cd[1], matrix.cc[1], matrix.dd[1], matrix.dc[1])
    return all(a > b > c > d for a, b, c, d in (row, col))


CANONICAL_PD = PayoffMatrix()


class RuleKind(enum.Enum):
    BASELINE = "baseline"
    GRADUATED_SANCTIONS = "graduated_sanctions"
    NORM_SEEDED = "norm_seeded"


@dataclass(frozen=True)
class RuleConfig:
    """An institutional rule: a payoff transformation or seeded norm plus its cost.

    ``severity`` is the per-defection sanction and ``decay`` the per-round
    retention of the defection counter (1 keeps everything, 0 forgets at once).
    """

    id: int
    kind: RuleKind = RuleKind.BASELINE
    cost: float = 0.0
    severity: float = 0.0
    decay: float = 1.0
    strategy: Strategy | None = None
    seeding_fraction: float = 0.0
    name: str = ""
    initial_frequency: float | None = None

    def __post_init__(self):
        if not (self.cost >= 0 and math.isfinite(self.cost)):
            raise ContractViolation(f"rule {self.id}: cost must be finite and >= 0")
        if not 0.0 <= self.decay <= 1.0:
            raise ContractViolation(f"rule {self.id}: decay must lie in [0, 1]")
        if self.kind is RuleKind.GRADUATED_SANCTIONS:
            if not (self.severity > 0 and math.isfinite(self.severity)):
                raise ContractViolation(f"rule {self.id}: lambda must be > 0")
        if self.kind is RuleKind.NORM_SEEDED:
            if self.strategy is None:
                raise ContractViolation(f"rule {self.id}: norm-seeded rule needs a strategy")
            if not 0.0 <= self.seeding_fraction <= 1.0:
                raise ContractViolation(f"rule {self.id}: seeding_fraction must lie in [0, 1]")

    @classmethod
    def baseline(cls, id: int = 0, cost: float = 0.0, **kw) -> "RuleConfig":
        return cls(id=id, kind=RuleKind.BASELINE, cost=cost, **kw)

    @classmethod
    def graduated(cls, id: int = 0, severity: float = 1.0, decay: float = 1.0,
                  cost: float = 0.0, **kw) -> "RuleConfig":
        return cls(id=id, kind=RuleKind.GRADUATED_SANCTIONS, severity=severity,
                   decay=decay, cost=cost, **kw)

    @classmethod
    def norm_seeded(cls, id: int = 0, strategy: Strategy = Strategy.TIT_FOR_TAT,
                    seeding_fraction: float = 1.0, cost: float = 0.0, **kw) -> "RuleConfig":
        return cls(id=id, kind=RuleKind.NORM_SEEDED, strategy=strategy,
                   seeding_fraction=seeding_fraction, cost=cost, **kw)

    @property
    def label(self) -> str:
        return self.name or f"{self.kind.value}-{self.id}"

    @property
    def counter_retention(self) -> float:
        return self.decay if self.kind is RuleKind.GRADUATED_SANCTIONS else 1.0


@dataclass(frozen=True)
class InteractionWeight:
    human_id: int
    ai_id: int
    weight: float

    def __post_init__(self):
        if not self.weight >= 0:
            raise ContractViolation("interaction weight must be >= 0")


@dataclass(frozen=True)
class FitnessMapParams:
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.alpha, self.beta, self.gamma)):
            raise ContractViolation("fitness-map weights must be finite")


@dataclass
class RulePopulation:
    """Frequencies over rule configurations, kept on the simplex."""

    frequencies: np.ndarray
    rule_ids: tuple[int, ...] = ()
    clip_events: int = 0

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        if self.frequencies.ndim != 1 or self.frequencies.size == 0:
            raise ContractViolation("rule frequencies must be a nonempty vector")
        if not self.rule_ids:
            self.rule_ids = tuple(range(self.frequencies.size))
        if len(self.rule_ids) != self.frequencies.size:
            raise ContractViolation("rule ids and frequencies differ in length")
        check_simplex(self.frequencies, SIMPLEX_TOL)

    @classmethod
    def uniform(cls, rule_ids: Iterable[int]) -> "RulePopulation":
        ids = tuple(rule_ids)
        return cls(np.full(len(ids), 1.0 / len(ids)), ids)

    @classmethod
    def from_mapping(cls, freqs: Mapping[int, float]) -> "RulePopulation":
        ids = tuple(freqs)
        raw = np.array([freqs[i] for i in ids], dtype=float)
        return cls(raw / raw.sum(), ids)

    def __getitem__(self, rule_id: int) -> float:
        return float(self.frequencies[self.rule_ids.index(rule_id)])

    def as_dict(self) -> dict[int, float]:
        return {rid: float(f) for rid, f in zip(self.rule_ids, self.frequencies)}


def check_simplex(r: np.ndarray, tol: float) -> None:
    if not np.all(np.isfinite(r)):
        raise ContractViolation("frequencies must be finite")
    if np.any(r < 0):
        raise ContractViolation("frequencies must be nonnegative")
    if abs(math.fsum(r) - 1.0) > tol:
        raise ContractViolation(f"frequencies sum to {math.fsum(r)!r}, not 1")


@dataclass(frozen=True)
class StrategyMix:
    """Probability vector over ``STRATEGIES``."""

    probs: tuple[float, ...] = field(default_factory=lambda: (0.25,) * 4)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(STRATEGIES),):
            raise ContractViolation("strategy mix needs one probability per strategy")
        check_simplex(p, SIMPLEX_TOL)

    @classmethod
    def point(cls, strategy: Strategy) -> "StrategyMix":
        p = [0.0] * len(STRATEGIES)
        p[STRATEGY_INDEX[strategy]] = 1.0
        return cls(tuple(p))

    @classmethod
    def from_mapping(cls, weights: Mapping[Strategy, float]) -> "StrategyMix":
        total = math.fsum(weights.values())
        if total <= 0:
            raise ContractViolation("strategy weights must have positive mass")
        if abs(total - 1.0) <= SIMPLEX_TOL:
            total = 1.0  # already normalized; keep values bit-exact
        return cls(tuple(float(weights.get(s, 0.0)) / total for s in STRATEGIES))

    def as_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=float)

    def __getitem__(self, s: Strategy) -> float:
        return self.probs[STRATEGY_INDEX[s]]

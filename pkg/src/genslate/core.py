"""Shared value types, quota arithmetic and support counting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

Number = Union[int, float, Fraction]

NEG_INF = float("-inf")


class GenslateError(Exception):
    """Base class for errors raised by this package."""


class InvalidInstanceError(GenslateError, ValueError):
    pass


class ConfigError(GenslateError, ValueError):
    pass


class ContractViolation(GenslateError):
    """An oracle or caller broke a documented pre/post condition."""


class InfeasibleAssignmentError(GenslateError, ValueError):
    pass


def as_utility(x: Any) -> Fraction:
    """Convert ``x`` to an exact rational.

    Floats are converted exactly (``Fraction(0.1)`` is not ``1/10``), so
    callers that mean decimal literals should pass strings.

    >>> as_utility("2.5")
    Fraction(5, 2)
    >>> as_utility(3)
    Fraction(3, 1)
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not utilities")
    if isinstance(x, (int, str)):
        return Fraction(x)
    if hasattr(x, "item"):  # numpy scalar
        x = x.item()
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"utility must be finite, got {x}")
        return Fraction(x)
    return Fraction(x)


def _is_neg_inf(level: Any) -> bool:
    return isinstance(level, float) and level == NEG_INF


@dataclass(frozen=True)
class Statement:
    """A candidate statement. ``payload`` is text, or an opinion tuple for
    the synthetic environment (0 = issue not addressed)."""

    id: int
    payload: Any
    cost: int

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("statement cost must be nonnegative")


@dataclass(frozen=True)
class Agent:
    id: int
    description: Any = None


@dataclass(frozen=True)
class Instance:
    agents: tuple
    budget: int
    level_grid: tuple

    def __post_init__(self):
        agents = tuple(a if isinstance(a, Agent) else Agent(int(a)) for a in self.agents)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "level_grid", tuple(as_utility(v) for v in self.level_grid))
        if self.budget < 1:
            raise InvalidInstanceError("budget must be at least 1")
        if not agents:
            raise InvalidInstanceError("instance needs at least one agent")
        if [a.id for a in agents] != list(range(len(agents))):
            raise InvalidInstanceError("agent ids must be dense 0..n-1")
        grid = self.level_grid
        if not grid:
            raise InvalidInstanceError("level grid is empty")
        if any(a <= b for a, b in zip(grid, grid[1:])):
            raise InvalidInstanceError("level grid must be strictly descending")

    @property
    def n(self) -> int:
        return len(self.agents)

    @classmethod
    def build(cls, n: int, budget: int, level_grid: Iterable[Number], descriptions=None) -> "Instance":
        descriptions = descriptions if descriptions is not None else [None] * n
        agents = tuple(Agent(i, d) for i, d in enumerate(descriptions))
        return cls(agents, budget, tuple(level_grid))


@dataclass(frozen=True)
class Slate:
    """Statements in order of addition. A statement may appear more than
    once when the process selects it again; each copy is paid for."""

    statements: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "statements", tuple(self.statements))
        seen = {}
        for s in self.statements:
            if seen.setdefault(s.id, s) != s:
                raise ContractViolation(f"two different statements share id {s.id}")

    def multiplicity(self, sid) -> int:
        return sum(1 for s in self.statements if s.id == sid)

    def distinct(self) -> list:
        out = {}
        for s in self.statements:
            out.setdefault(s.id, s)
        return list(out.values())

    @property
    def cost(self) -> int:
        return sum(s.cost for s in self.statements)

    @property
    def ids(self) -> list:
        return [s.id for s in self.statements]

    def by_id(self, sid) -> Statement:
        for s in self.statements:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def __len__(self):
        return len(self.statements)

    def __iter__(self):
        return iter(self.statements)


# agent id -> statement id
Assignment = Mapping[int, int]


def quota(cost: int, n: int, B: int) -> int:
    """Number of agents a statement of ``cost`` must represent, ceil(cost*n/B).

    >>> quota(41, 41, 164)
    11
    >>> quota(0, 60, 15)
    0
    """
    if B <= 0:
        raise InvalidInstanceError("budget must be positive")
    if cost < 0 or n < 1:
        raise ValueError("need cost >= 0 and n >= 1")
    return -(-cost * n // B)


def quota_bounds(cost: int, n: int, B: int) -> tuple:
    """(floor, ceil) of cost*n/B."""
    if B <= 0:
        raise InvalidInstanceError("budget must be positive")
    return cost * n // B, quota(cost, n, B)


def _ge(value, level) -> bool:
    if _is_neg_inf(level):
        return True
    return value >= level


def support(statement: Statement, agents: Iterable[int], level, utility: Callable) -> int:
    """Count agents whose utility for ``statement`` is at least ``level``.

    ``level`` may be ``float('-inf')``, in which case everyone counts.
    """
    return sum(1 for i in agents if _ge(utility(i, statement), level))


def assignment_counts(assignment: Assignment, slate: Slate) -> dict:
    ids = set(slate.ids)
    counts = {sid: 0 for sid in ids}
    for agent, sid in assignment.items():
        if sid not in ids:
            raise ContractViolation(f"agent {agent} assigned to statement {sid} outside the slate")
        counts[sid] += 1
    return counts


def is_balanced(assignment: Assignment, slate: Slate, n: int, B: int, require_total: bool = True) -> bool:
    """True iff each slate statement gets floor or ceil of c*n/B agents.

    A statement placed k times on the slate may hold k times those bounds.
    With ``require_total=False`` agents may be left out, which is what
    partial process outputs look like.
    """
    counts = assignment_counts(assignment, slate)
    if require_total and set(assignment) != set(range(n)):
        return False
    for s in slate.distinct():
        lo, hi = quota_bounds(s.cost, n, B)
        k = slate.multiplicity(s.id)
        if not k * lo <= counts[s.id] <= k * hi:
            return False
    return True


def check_level_grid(grid: Sequence) -> tuple:
    grid = tuple(as_utility(v) for v in grid)
    if not grid or any(a <= b for a, b in zip(grid, grid[1:])):
        raise InvalidInstanceError("level grid must be nonempty and strictly descending")
    return grid


@dataclass
class StatementBank:
    """Every statement generated during a run, in creation order."""

    _items: dict = field(default_factory=dict)

    def add(self, statement: Statement) -> None:
        self._items.setdefault(statement.id, statement)

    def __contains__(self, sid) -> bool:
        return sid in self._items

    def __iter__(self):
        return iter(self._items.values())

    def __len__(self):
        return len(self._items)

    def get(self, sid) -> Optional[Statement]:
        return self._items.get(sid)

    def statements(self) -> list:
        return list(self._items.values())

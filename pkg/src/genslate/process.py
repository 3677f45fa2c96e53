"""The democratic process (cost-aware greedy over utility levels) and the
unit-cost approximate variant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator

from .core import (
    ConfigError,
    ContractViolation,
    Instance,
    Slate,
    Statement,
    StatementBank,
    as_utility,
    quota,
)

VARIANTS = ("fast", "complex", "uniform", "unit_cost", "custom")


class QuerySuite:
    """Oracle pair used by the process.

    Subclasses implement ``disc`` and ``gen``. ``disc_many`` may be
    overridden with a vectorised version; it must return an array of shape
    ``(len(agents), len(statements))``.
    """

    #: whether one instance may serve several concurrent runs
    shareable = False

    def disc(self, agent: int, statement: Statement):
        raise NotImplementedError

    def gen(self, agents, level, cost_cap: int, rng) -> Optional[Statement]:
        raise NotImplementedError

    def disc_many(self, agents, statements) -> np.ndarray:
        out = np.empty((len(agents), len(statements)), dtype=object)
        for r, a in enumerate(agents):
            for c, s in enumerate(statements):
                out[r, c] = self.disc(int(a), s)
        return out


class FunctionQuerySuite(QuerySuite):
    """Wraps two plain callables."""

    def __init__(self, disc: Callable, gen: Callable):
        self._disc = disc
        self._gen = gen

    def disc(self, agent, statement):
        return self._disc(agent, statement)

    def gen(self, agents, level, cost_cap, rng):
        return self._gen(agents, level, cost_cap, rng)


def single_level(level, grid):
    return [level]


def upward_levels(level, grid):
    # every grid level at or above ``level``, top first
    return [g for g in grid if g >= level]


LEVEL_EXPANSIONS = {"single": single_level, "upward": upward_levels}


@dataclass(frozen=True)
class ProcessConfig:
    cost_list: tuple
    level_expansion: Union[str, Callable] = "single"
    min_statement_cost: int = 0
    use_statement_bank: bool = False
    variant_tag: str = "custom"
    # what to do when the remaining budget cannot pay for C[j]:
    # "skip" tries the next (smaller) cost, "stop" ends the level
    on_unaffordable: str = "skip"
    # whether a statement already on the slate may be selected again
    allow_repeats: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cost_list", tuple(int(c) for c in self.cost_list))
        if not self.cost_list or min(self.cost_list) < 1:
            raise ConfigError("cost list must be nonempty with positive entries")
        if self.variant_tag not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant_tag!r}")
        if self.on_unaffordable not in ("skip", "stop"):
            raise ConfigError("on_unaffordable must be 'skip' or 'stop'")
        if isinstance(self.level_expansion, str) and self.level_expansion not in LEVEL_EXPANSIONS:
            raise ConfigError(f"unknown level expansion {self.level_expansion!r}")

    def expand(self, level, grid) -> list:
        f = self.level_expansion
        if isinstance(f, str):
            f = LEVEL_EXPANSIONS[f]
        return list(f(level, grid))


def make_config(variant: str, instance: Instance, k_or_cost: Optional[int] = None, **options) -> ProcessConfig:
    """Named instantiations of the process.

    >>> from genslate.core import Instance
    >>> inst = Instance.build(60, 15, [1, 0])
    >>> make_config("fast", inst).cost_list[:3]
    (15, 14, 13)
    """
    n, B = instance.n, instance.budget
    if variant == "fast":
        costs = sorted({j * B // n for j in range(1, n + 1)} - {0}, reverse=True)
        return ProcessConfig(tuple(costs), "single", variant_tag="fast", **options)
    if variant == "complex":
        return ProcessConfig(tuple(range(B, 0, -1)), "upward", variant_tag="complex", **options)
    if variant == "uniform":
        if k_or_cost is None:
            raise ConfigError("uniform variant needs the statement cost")
        if not 1 <= k_or_cost <= B:
            raise ConfigError("uniform cost must lie in [1, B]")
        return ProcessConfig((int(k_or_cost),), "single", variant_tag="uniform", **options)
    if variant == "unit_cost":
        return ProcessConfig((1,), "single", variant_tag="unit_cost", **options)
    raise ConfigError(f"unknown variant {variant!r}")


@dataclass(frozen=True, slots=True)
class RoundRecord:
    level: Fraction
    cost_cap: int
    candidates: tuple  # (statement id, |S_alpha|) pairs
    chosen: Optional[int]
    added: bool
    removed: tuple  # (agent id, disc value) pairs


@dataclass
class SlateResult:
    slate: Slate
    assignment: dict
    trace: list
    bank: StatementBank
    unassigned: tuple = ()
    oracle_errors: list = field(default_factory=list)

    @property
    def is_total(self) -> bool:
        return not self.unassigned


def _approvals(vals: np.ndarray, level) -> np.ndarray:
    if vals.dtype != object:
        fl = float(level)
        if Fraction(fl) == level:
            return vals >= fl
    return np.frompyfunc(lambda v: v >= level, 1, 1)(vals).astype(bool)


def _top_rows(vals: np.ndarray, rows: np.ndarray, agent_ids: np.ndarray, q: int) -> np.ndarray:
    """The q approving rows with highest value, ties to lower agent id."""
    if vals.dtype != object:
        order = np.lexsort((agent_ids[rows], -vals[rows]))
    else:
        order = sorted(range(len(rows)), key=lambda r: (-vals[rows[r]], agent_ids[rows[r]]))
    return rows[np.asarray(order[:q], dtype=np.int64)]


def _to_py(v):
    return v.item() if hasattr(v, "item") else v


def run_process(instance: Instance, queries: QuerySuite, config: ProcessConfig, rng=None) -> SlateResult:
    """Run the greedy democratic process.

    Levels are visited top to bottom; for each level the cost list is
    walked, each round asking ``gen`` for one candidate per expanded level
    and adding the best-supported candidate when its support reaches the
    quota. Agents removed in a round are assigned to that statement.
    """
    rng = np.random.default_rng(rng)
    n, B = instance.n, instance.budget
    grid = instance.level_grid
    unit = config.variant_tag == "unit_cost"
    if max(config.cost_list) > B:
        raise ConfigError("cost list entries must not exceed the budget")

    def cost_of(s: Statement) -> int:
        return 1 if unit else s.cost

    def need(c: int) -> int:
        return n // B if unit else quota(c, n, B)

    remaining = np.arange(n, dtype=np.int64)
    remaining.flags.writeable = False
    slate, assignment, trace, errors = [], {}, [], []
    bank = StatementBank()
    spent = 0
    chosen_ids = set()
    C = config.cost_list

    for li, level in enumerate(grid):
        if remaining.size == 0 or spent >= B:
            break
        min_cost = 0 if li == len(grid) - 1 else config.min_statement_cost
        levels = config.expand(level, grid)
        j = 0
        while j < len(C) and remaining.size:
            x = C[j]
            if B - spent < x:
                if config.on_unaffordable == "stop":
                    break
                j += 1
                continue
            found = {}
            for lv in levels:
                st = queries.gen(remaining, lv, x, rng)
                if st is None:
                    continue
                if cost_of(st) > x:
                    errors.append(ContractViolation(f"gen returned cost {st.cost} above cap {x}"))
                    continue
                bank.add(st)
                found.setdefault(st.id, st)
            if config.use_statement_bank:
                for st in bank:
                    if cost_of(st) <= x:
                        found.setdefault(st.id, st)
            cands = [s for sid, s in sorted(found.items())
                     if cost_of(s) >= 1 and s.cost >= min_cost
                     and (config.allow_repeats or sid not in chosen_ids)]
            if not cands:
                trace.append(RoundRecord(level, x, (), None, False, ()))
                j += 1
                continue
            vals = np.asarray(queries.disc_many(remaining, cands))
            appr = _approvals(vals, level)
            counts = appr.sum(axis=0)
            best = int(np.argmax(counts))
            st = cands[best]
            q = need(cost_of(st))
            added = bool(q > 0 and counts[best] >= q)
            removed = ()
            if added:
                rows = _top_rows(vals[:, best], np.flatnonzero(appr[:, best]), remaining, q)
                removed = tuple((int(remaining[r]), _to_py(vals[r, best])) for r in rows)
                for a, _ in removed:
                    assignment[a] = st.id
                remaining = np.delete(remaining, rows)
                remaining.flags.writeable = False
                slate.append(st)
                chosen_ids.add(st.id)
                spent += cost_of(st)
                assert spent <= B
            trace.append(RoundRecord(
                level, x, tuple((s.id, int(c)) for s, c in zip(cands, counts)), st.id, added, removed))
            if not added:
                j += 1

    if unit and remaining.size and slate and spent >= B:
        for a in remaining:
            assignment[int(a)] = slate[-1].id
        remaining = remaining[:0]

    return SlateResult(Slate(slate), assignment, trace, bank, tuple(int(a) for a in remaining), errors)


def run_uniform_approx(instance: Instance, queries: QuerySuite, mu, gamma, rng=None) -> SlateResult:
    """Unit-cost process for approximate oracles.

    Uses a single cost cap floor(1/mu), all levels at or above the current
    one, acceptance threshold n*gamma/(B*gamma+1) and removal count equal
    to its ceiling. Levels below 1 are never visited.
    """
    mu, gamma = as_utility(mu), as_utility(gamma)
    if not (0 < mu <= 1 and 0 < gamma <= 1):
        raise ConfigError("mu and gamma must lie in (0, 1]")
    rng = np.random.default_rng(rng)
    n, B = instance.n, instance.budget
    grid = instance.level_grid
    cap = math.floor(1 / mu)
    threshold = Fraction(n) * gamma / (B * gamma + 1)
    take = math.ceil(threshold)

    remaining = np.arange(n, dtype=np.int64)
    slate, assignment, trace, errors = [], {}, [], []
    bank = StatementBank()
    spent = 0
    for level in grid:
        if level < 1 or remaining.size == 0 or spent >= B:
            break
        while remaining.size and spent < B:
            found = {}
            for lv in upward_levels(level, grid):
                st = queries.gen(remaining, lv, cap, rng)
                if st is None:
                    continue
                if st.cost > cap:
                    errors.append(ContractViolation(f"gen returned cost {st.cost} above cap {cap}"))
                    continue
                bank.add(st)
                found.setdefault(st.id, st)
            cands = [s for _, s in sorted(found.items())]
            if not cands:
                trace.append(RoundRecord(level, cap, (), None, False, ()))
                break
            vals = np.asarray(queries.disc_many(remaining, cands))
            appr = _approvals(vals, level)
            counts = appr.sum(axis=0)
            best = int(np.argmax(counts))
            st = cands[best]
            added = bool(counts[best] >= threshold and spent + st.cost <= B)
            removed = ()
            if added:
                rows = _top_rows(vals[:, best], np.flatnonzero(appr[:, best]), remaining, take)
                removed = tuple((int(remaining[r]), _to_py(vals[r, best])) for r in rows)
                for a, _ in removed:
                    assignment[a] = st.id
                remaining = np.delete(remaining, rows)
                slate.append(st)
                spent += st.cost
            trace.append(RoundRecord(
                level, cap, tuple((s.id, int(c)) for s, c in zip(cands, counts)), st.id, added, removed))
            if not added:
                break

    # leftover agents go to statements that still have room under ceil(c*n/B)
    left = [int(a) for a in remaining]
    if left and slate:
        load = {s.id: 0 for s in slate}
        for sid in assignment.values():
            load[sid] += 1
        for s in slate:
            while load[s.id] < quota(s.cost, n, B) * slate.count(s) and left:
                assignment[left.pop(0)] = s.id
                load[s.id] += 1
    return SlateResult(Slate(slate), assignment, trace, bank, tuple(left), errors)


class DemocraticProcess(BaseEstimator):
    """Estimator-style wrapper around :func:`run_process`.

    ``fit(instance, queries)`` runs the process; ``predict(agent_ids)``
    returns each agent's assigned statement id (-1 when unassigned).

    Parameters
    ----------
    variant : {"fast", "complex", "uniform", "unit_cost"}
    statement_cost : int, optional
        Required by the uniform variant.
    min_statement_cost : int
    use_statement_bank : bool
    on_unaffordable : {"skip", "stop"}
    allow_repeats : bool
    random_state : int or None
    """

    def __init__(self, variant="complex", statement_cost=None, min_statement_cost=0,
                 use_statement_bank=False, on_unaffordable="skip", allow_repeats=True,
                 random_state=None):
        self.variant = variant
        self.statement_cost = statement_cost
        self.min_statement_cost = min_statement_cost
        self.use_statement_bank = use_statement_bank
        self.on_unaffordable = on_unaffordable
        self.allow_repeats = allow_repeats
        self.random_state = random_state

    def fit(self, instance: Instance, queries: QuerySuite):
        if not isinstance(instance, Instance):
            raise TypeError("fit expects an Instance")
        cfg = make_config(self.variant, instance, self.statement_cost,
                          min_statement_cost=self.min_statement_cost,
                          use_statement_bank=self.use_statement_bank,
                          on_unaffordable=self.on_unaffordable,
                          allow_repeats=self.allow_repeats)
        res = run_process(instance, queries, cfg, self.random_state)
        self.config_ = cfg
        self.result_ = res
        self.slate_ = res.slate
        self.assignment_ = dict(res.assignment)
        self.n_agents_ = instance.n
        return self

    def predict(self, agent_ids: Sequence[int]) -> np.ndarray:
        if not hasattr(self, "assignment_"):
            raise AttributeError("call fit before predict")
        ids = np.asarray(agent_ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_agents_):
            raise ValueError("agent id out of range")
        return np.array([self.assignment_.get(int(a), -1) for a in ids], dtype=np.int64)

"""Issue/opinion environment with an enumerable statement universe, exact
oracles and noisy oracle simulators.

Utilities are kept internally in half units (2*u) as small integers, which
keeps every comparison exact while letting numpy do the heavy lifting.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .core import ConfigError, ContractViolation, Instance, Statement, as_utility, quota
from .process import QuerySuite

MIDPOINTS = ("half", "floor")


@dataclass(frozen=True, eq=False)
class SyntheticEnv:
    """Agents with ideal opinions on every issue.

    A statement takes an opinion in ``1..b`` on a subset of issues (0 marks
    an issue it does not address) and costs the number of issues it
    addresses. Agent utility is the per-issue sum of ``m - |ideal - o|``
    where ``m`` is ``b/2`` (``midpoint="half"``) or ``b//2``
    (``midpoint="floor"``).
    """

    num_issues: int
    opinion_count: int
    ideals: np.ndarray
    budget: int
    seed: Optional[int] = None
    midpoint: str = "half"

    def __post_init__(self):
        ideals = np.array(self.ideals, dtype=np.int64)
        if ideals.ndim != 2 or ideals.shape[1] != self.num_issues:
            raise ValueError("ideals must be an n x num_issues matrix")
        if ideals.size and (ideals.min() < 1 or ideals.max() > self.opinion_count):
            raise ValueError("ideal opinions must lie in 1..b")
        if self.midpoint not in MIDPOINTS:
            raise ConfigError(f"midpoint must be one of {MIDPOINTS}")
        ideals.flags.writeable = False
        object.__setattr__(self, "ideals", ideals)

    @property
    def n(self) -> int:
        return self.ideals.shape[0]

    @property
    def per_issue_top(self) -> int:
        """Half-unit score of a perfectly matching issue."""
        b = self.opinion_count
        return b if self.midpoint == "half" else 2 * (b // 2)

    @cached_property
    def opinions(self) -> np.ndarray:
        """Universe as an (M, |I|) array, in lexicographic order; row 0 is empty."""
        rows = itertools.product(range(self.opinion_count + 1), repeat=self.num_issues)
        arr = np.array(list(rows), dtype=np.int64).reshape(-1, self.num_issues)
        arr.flags.writeable = False
        return arr

    @cached_property
    def costs(self) -> np.ndarray:
        c = (self.opinions > 0).sum(axis=1)
        c.flags.writeable = False
        return c

    @property
    def universe_size(self) -> int:
        return (self.opinion_count + 1) ** self.num_issues

    @cached_property
    def half_units(self) -> np.ndarray:
        """(n, M) matrix of 2*utility."""
        op = self.opinions
        d = np.abs(self.ideals[:, None, :] - op[None, :, :])
        h = np.where(op[None, :, :] > 0, self.per_issue_top - 2 * d, 0).sum(axis=2)
        h = h.astype(np.int32)
        h.flags.writeable = False
        return h

    def statement(self, index: int) -> Statement:
        index = int(index)
        return Statement(index, tuple(int(v) for v in self.opinions[index]), int(self.costs[index]))

    def index_of(self, opinions: Sequence[int]) -> int:
        idx = 0
        for o in opinions:
            idx = idx * (self.opinion_count + 1) + int(o)
        return idx

    def statements(self) -> list:
        return [self.statement(i) for i in range(self.universe_size)]

    def utility_bounds(self) -> tuple:
        """(min, max) achievable utility over all statements, as Fractions."""
        top = Fraction(self.per_issue_top, 2)
        worst = top - (self.opinion_count - 1)
        return self.num_issues * min(worst, 0), self.num_issues * top

    def level_grid(self, step=Fraction(1, 2), bottom=None) -> tuple:
        """Descending grid from the maximum utility to ``bottom`` (default:
        the minimum achievable utility)."""
        step = as_utility(step)
        lo, hi = self.utility_bounds()
        bottom = lo if bottom is None else max(as_utility(bottom), lo)
        out, v = [], hi
        while v >= bottom:
            out.append(v)
            v -= step
        return tuple(out)

    def instance(self, step=Fraction(1, 2), bottom=None) -> Instance:
        descs = [tuple(int(v) for v in row) for row in self.ideals]
        return Instance.build(self.n, self.budget, self.level_grid(step, bottom), descs)


def make_env(seed, num_issues=5, opinion_count=5, n=60, B=15, midpoint="half") -> SyntheticEnv:
    if min(num_issues, opinion_count, n, B) < 1:
        raise ValueError("all environment parameters must be >= 1")
    rng = np.random.default_rng(seed)
    ideals = rng.integers(1, opinion_count + 1, size=(n, num_issues))
    return SyntheticEnv(num_issues, opinion_count, ideals, B, seed, midpoint)


def true_utility(env: SyntheticEnv, agent: int, statement) -> Fraction:
    """Exact utility of ``agent`` for a statement (or an opinion tuple)."""
    ops = statement.payload if isinstance(statement, Statement) else tuple(statement)
    ideal = env.ideals[agent]
    total = 0
    for j, o in enumerate(ops):
        if o:
            total += env.per_issue_top - 2 * abs(int(ideal[j]) - int(o))
    return Fraction(total, 2)


@dataclass(frozen=True)
class ErrorModel:
    beta: int = 0
    gamma: Fraction = Fraction(1)
    delta: Fraction = Fraction(0)
    mu: Fraction = Fraction(1)
    mode: str = "uniform"
    seed: Optional[int] = None
    # worst-case gen when the best support M is 0: "argmin" keeps picking
    # the worst admissible statement, "uniform" samples all of them
    zero_support_rule: str = "argmin"

    def __post_init__(self):
        for name in ("gamma", "delta", "mu"):
            object.__setattr__(self, name, as_utility(getattr(self, name)))
        if self.beta < 0 or self.delta < 0:
            raise ConfigError("beta and delta must be nonnegative")
        if not (0 < self.gamma <= 1 and 0 < self.mu <= 1):
            raise ConfigError("gamma and mu must lie in (0, 1]")
        if self.mode not in ("uniform", "worst_case"):
            raise ConfigError("mode must be 'uniform' or 'worst_case'")
        if self.zero_support_rule not in ("argmin", "uniform"):
            raise ConfigError("zero_support_rule must be 'argmin' or 'uniform'")

    @property
    def is_exact(self) -> bool:
        return self.beta == 0 and self.delta == 0 and self.gamma == 1 and self.mu == 1


def _level_to_half(level) -> Optional[int]:
    """Smallest half-unit value h with h/2 >= level; None for -inf."""
    if isinstance(level, float) and level == float("-inf"):
        return None
    return math.ceil(2 * as_utility(level))


class _SupportTable:
    """ge[alpha, k] = number of agents in S with 2*u(alpha) >= lo + k."""

    def __init__(self, H: np.ndarray, agents: np.ndarray, lo: int, hi: int):
        K = hi - lo + 1
        M = H.shape[1]
        self.lo, self.K, self.size = lo, K, len(agents)
        if len(agents):
            sub = H[agents] - lo
            flat = (sub + np.arange(M, dtype=np.int64) * K).ravel()
            hist = np.bincount(flat, minlength=M * K).reshape(M, K)
            ge = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]
        else:
            ge = np.zeros((M, K), dtype=np.int64)
        self.ge = np.concatenate([ge, np.zeros((M, 1), dtype=ge.dtype)], axis=1)
        self.memo = {}

    def sup(self, h: Optional[int]) -> np.ndarray:
        if h is None:
            return self.ge[:, 0]
        k = min(max(h - self.lo, 0), self.K)
        return self.ge[:, k]


class SyntheticQueries(QuerySuite):
    """Exact or noisy oracles over a :class:`SyntheticEnv`.

    ``cost_mode="exact"`` makes gen return statements of cost exactly the
    cap (comparing against statements of cost exactly ceil(mu*x)); the
    default considers every nonempty statement of cost at most the cap.
    """

    def __init__(self, env: SyntheticEnv, error_model: Optional[ErrorModel] = None,
                 cost_mode: str = "at_most", seed=None):
        if cost_mode not in ("at_most", "exact"):
            raise ConfigError("cost_mode must be 'at_most' or 'exact'")
        self.env = env
        self.error_model = error_model
        self.cost_mode = cost_mode
        if seed is None and error_model is not None:
            seed = error_model.seed
        self.rng = np.random.default_rng(seed)
        H = env.half_units
        self._H = H
        self._lo, self._hi = int(H.min()), int(H.max())
        self._table = None
        self._table_key = None
        self._nonempty = env.costs > 0

    # ---- discriminative
    def _noise(self, shape) -> np.ndarray:
        em = self.error_model
        if em is None or em.beta == 0:
            return np.zeros(shape, dtype=np.int64)
        if em.mode == "uniform":
            return self.rng.integers(-em.beta, em.beta + 1, size=shape)
        return em.beta * (2 * self.rng.integers(0, 2, size=shape) - 1)

    def disc(self, agent, statement):
        h = int(self._H[agent, statement.id]) + 2 * int(self._noise(()))
        return Fraction(h, 2)

    def disc_many(self, agents, statements) -> np.ndarray:
        ids = np.fromiter((s.id for s in statements), dtype=np.int64, count=len(statements))
        h = self._H[np.ix_(np.asarray(agents, dtype=np.int64), ids)]
        if self.error_model is not None and self.error_model.beta:
            h = h + 2 * self._noise(h.shape)
        return h / 2.0

    # ---- generative
    def tables(self, agents) -> _SupportTable:
        agents = np.asarray(agents, dtype=np.int64)
        key = agents.tobytes()
        if key != self._table_key:
            self._table = _SupportTable(self._H, agents, self._lo, self._hi)
            self._table_key = key
        return self._table

    def _masks(self, x: int, comparator_cap: int):
        costs = self.env.costs
        if self.cost_mode == "exact":
            return costs == x, costs == comparator_cap
        return self._nonempty & (costs <= x), self._nonempty & (costs <= comparator_cap)

    def candidates(self, agents, level, x: int) -> np.ndarray:
        """Indices gen(agents, level, x) samples from."""
        t = self.tables(agents)
        h = _level_to_half(level)
        key = (h, x)
        hit = t.memo.get(key)
        if hit is not None:
            return hit
        em = self.error_model
        if em is None or em.is_exact:
            feas, _ = self._masks(x, x)
            s = t.sup(h)
            if not feas.any():
                cand = np.zeros(0, dtype=np.int64)
            else:
                cand = np.flatnonzero(feas & (s == s[feas].max()))
        else:
            cap = math.ceil(em.mu * x)
            feas, comp = self._masks(x, cap)
            s = t.sup(h)
            M = int(s[comp].max()) if comp.any() else 0
            hd = _level_to_half(as_utility(level) - em.delta) if h is not None else None
            sd = t.sup(hd)
            g = em.gamma
            F = feas & (sd * g.denominator >= g.numerator * M)
            if feas.any() and not F.any():
                raise ContractViolation("no statement satisfies the accuracy bound")
            if em.mode == "uniform" or (M == 0 and em.zero_support_rule == "uniform"):
                cand = np.flatnonzero(F)
            else:
                cand = np.flatnonzero(F & (sd == sd[F].min())) if F.any() else np.flatnonzero(F)
        t.memo[key] = cand
        return cand

    def gen(self, agents, level, cost_cap, rng):
        if cost_cap < 1:
            return self.env.statement(0)
        cand = self.candidates(agents, level, int(cost_cap))
        if cand.size == 0:
            return None
        return self.env.statement(cand[rng.integers(cand.size)])


def exact_queries(env: SyntheticEnv, cost_mode: str = "at_most") -> SyntheticQueries:
    return SyntheticQueries(env, None, cost_mode)


def noisy_queries(env: SyntheticEnv, error_model: ErrorModel, cost_mode: str = "at_most") -> SyntheticQueries:
    return SyntheticQueries(env, error_model, cost_mode)


def assignment_vector(env: SyntheticEnv, assignment) -> np.ndarray:
    """Statement index per agent; unassigned agents map to the empty statement."""
    vec = np.zeros(env.n, dtype=np.int64)
    for a, sid in assignment.items():
        vec[a] = sid
    return vec


def violation_curve(env: SyntheticEnv, assignment, bs: Sequence) -> dict:
    """Max (b, d)-violation ratio over the whole universe for each b.

    Returns ``{b: (ratio, statement_index, theta)}``; ratio is an exact
    Fraction (0 with index None when nothing violates). Unassigned agents
    count as holding the empty statement (utility 0). Every b must be a
    multiple of 1/2.
    """
    H = env.half_units
    vec = assignment if isinstance(assignment, np.ndarray) else assignment_vector(env, assignment)
    w = H[np.arange(env.n), vec].astype(np.int64)
    costs = env.costs
    q = np.array([quota(int(c), env.n, env.budget) for c in range(env.num_issues + 1)])[costs]
    valid = q > 0
    lo_v, hi_v = int(H.min()), int(H.max())
    K = hi_v - lo_v + 2
    M = H.shape[1]
    cols = np.arange(M, dtype=np.int64) * K
    out = {}
    for b in bs:
        bh = 2 * as_utility(b)
        if bh.denominator != 1:
            raise ValueError("b must be a multiple of 1/2")
        start = np.maximum(w[:, None] + int(bh) + 1, lo_v)
        ok = start <= H
        plus = (start - lo_v + cols)[ok]
        minus = (H + 1 - lo_v + cols)[ok]
        diff = np.bincount(plus, minlength=M * K) - np.bincount(minus, minlength=M * K)
        run = diff.reshape(M, K).cumsum(axis=1)
        best_k = run.argmax(axis=1)
        cnt = run[np.arange(M), best_k]
        ratio = np.where(valid, cnt / np.where(valid, q, 1), 0.0)
        a = int(np.argmax(ratio))
        if cnt[a] == 0 or not valid[a]:
            out[b] = (Fraction(0), None, None)
        else:
            out[b] = (Fraction(int(cnt[a]), int(q[a])), a, Fraction(int(best_k[a]) + lo_v, 2))
    return out

"""Proportionality audits and maximum-weight balanced assignment."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    ContractViolation,
    InfeasibleAssignmentError,
    Slate,
    Statement,
    as_utility,
    is_balanced,
    quota,
    quota_bounds,
)


@dataclass(frozen=True)
class ViolationWitness:
    coalition: frozenset
    statement: Statement
    threshold: Fraction
    ratio: Fraction
    slack: Fraction


@dataclass
class AuditReport:
    curve: dict = field(default_factory=dict)  # b -> max ratio
    witnesses: dict = field(default_factory=dict)  # b -> witness or None


def _held_utilities(slate: Slate, assignment: Mapping, utilities: Callable, n: int, unassigned_utility):
    held = []
    for i in range(n):
        sid = assignment.get(i)
        if sid is None:
            if unassigned_utility is None:
                raise ContractViolation(f"agent {i} is unassigned")
            held.append(as_utility(unassigned_utility))
        else:
            held.append(as_utility(utilities(i, slate.by_id(sid))))
    return held


def _best_for_statement(alpha: Statement, held, utilities, b, n, B):
    """(count, theta, coalition) maximising the violation count for alpha."""
    vals = [as_utility(utilities(i, alpha)) for i in range(n)]
    best = (0, None, frozenset())
    for theta in sorted(set(vals), reverse=True):
        members = [i for i in range(n) if vals[i] >= theta and held[i] < theta - b]
        if len(members) > best[0]:
            best = (len(members), theta, frozenset(members))
    return best


def max_violation_ratio(slate: Slate, assignment: Mapping, candidates: Sequence[Statement],
                        utilities: Callable, b, n: int, B: int, unassigned_utility=None,
                        require_balanced: bool = True):
    """Largest d such that some candidate witnesses a (b, d)-violation.

    ``utilities(i, statement)`` gives agent utilities. Agents missing from
    ``assignment`` are only allowed when ``unassigned_utility`` is given.
    Returns ``(ratio, witness)``; ``(0, None)`` when nothing violates.
    """
    b = as_utility(b)
    if require_balanced and not is_balanced(assignment, slate, n, B, require_total=unassigned_utility is None):
        raise ContractViolation("assignment is not balanced")
    held = _held_utilities(slate, assignment, utilities, n, unassigned_utility)
    best_ratio, witness = Fraction(0), None
    for alpha in candidates:
        q = quota(alpha.cost, n, B)
        if q == 0:
            continue
        count, theta, members = _best_for_statement(alpha, held, utilities, b, n, B)
        if count and Fraction(count, q) > best_ratio:
            best_ratio = Fraction(count, q)
            witness = ViolationWitness(members, alpha, theta, best_ratio, b)
    return best_ratio, witness


def audit_curve(slate, assignment, candidates, utilities, bs, n, B, unassigned_utility=None) -> AuditReport:
    rep = AuditReport()
    for b in bs:
        r, w = max_violation_ratio(slate, assignment, candidates, utilities, b, n, B, unassigned_utility)
        rep.curve[b] = r
        rep.witnesses[b] = w
    return rep


def check_cjr(slate: Slate, candidates: Sequence[Statement], utilities: Callable, b, d, n: int, B: int):
    """First (b, d)-cJR witness among ``candidates``, or None.

    Here an agent counts as unrepresented when every slate statement gives
    it less than theta - b.
    """
    b, d = as_utility(b), as_utility(d)
    if len(slate):
        held = [max(as_utility(utilities(i, s)) for s in slate) for i in range(n)]
    else:
        held = [None] * n
    for alpha in candidates:
        q = quota(alpha.cost, n, B)
        if q == 0:
            continue
        vals = [as_utility(utilities(i, alpha)) for i in range(n)]
        for theta in sorted(set(vals), reverse=True):
            members = [i for i in range(n)
                       if vals[i] >= theta and (held[i] is None or held[i] < theta - b)]
            if members and len(members) >= d * q:
                return ViolationWitness(frozenset(members), alpha, theta, Fraction(len(members), q), b)
    return None


# ---------------------------------------------------------------- flow

class _Graph:
    def __init__(self, size):
        self.adj = [[] for _ in range(size)]
        self.to, self.cap, self.cost = [], [], []

    def add(self, u, v, cap, cost):
        self.adj[u].append(len(self.to))
        self.to.append(v); self.cap.append(cap); self.cost.append(cost)
        self.adj[v].append(len(self.to))
        self.to.append(u); self.cap.append(0); self.cost.append(-cost)

    def min_cost_flow(self, s, t, want):
        """Successive shortest paths with Johnson potentials. All initial
        arc costs must be nonnegative."""
        size = len(self.adj)
        pot = [0] * size
        flow = total = 0
        while flow < want:
            dist = [None] * size
            prev = [-1] * size
            dist[s] = 0
            heap = [(0, s)]
            while heap:
                du, u = heapq.heappop(heap)
                if du != dist[u]:
                    continue
                for e in self.adj[u]:
                    if self.cap[e] <= 0:
                        continue
                    v = self.to[e]
                    nd = du + self.cost[e] + pot[u] - pot[v]
                    if dist[v] is None or nd < dist[v]:
                        dist[v] = nd
                        prev[v] = e
                        heapq.heappush(heap, (nd, v))
            if dist[t] is None:
                break
            for v in range(size):
                if dist[v] is not None:
                    pot[v] += dist[v]
            push, v = want - flow, t
            while v != s:
                e = prev[v]
                push = min(push, self.cap[e])
                v = self.to[e ^ 1]
            v = t
            while v != s:
                e = prev[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                total += push * self.cost[e]
                v = self.to[e ^ 1]
            flow += push
        return flow, total


def assignment_bounds(costs: Sequence[int], n: int, B: int) -> list:
    return [quota_bounds(int(c), n, B) for c in costs]


def max_weight_balanced_assignment(utilities, costs: Sequence[int], n: int, B: int):
    """Balanced assignment of n agents to k statements maximising total utility.

    ``utilities`` is an n x k matrix (rows agents). Statement j receives
    between floor(c_j n/B) and ceil(c_j n/B) agents. Returns
    ``(choice, total)`` where ``choice[i]`` is the column given to agent i
    and ``total`` is the exact optimum.

    >>> max_weight_balanced_assignment([[5, 1], [1, 5]], [1, 1], 2, 2)
    ([0, 1], Fraction(10, 1))
    """
    U = [[as_utility(v) for v in row] for row in utilities]
    k = len(costs)
    if len(U) != n or any(len(r) != k for r in U):
        raise ValueError("utility matrix must be n x k")
    bounds = assignment_bounds(costs, n, B)
    if sum(lo for lo, _ in bounds) > n or sum(hi for _, hi in bounds) < n:
        raise InfeasibleAssignmentError(f"no balanced assignment exists for bounds {bounds}")
    if n == 0:
        return [], Fraction(0)
    den = 1
    for row in U:
        for v in row:
            den = den * v.denominator // math.gcd(den, v.denominator)
    scaled = [[int(v * den) for v in row] for row in U]
    top = max(max(r) for r in scaled)
    spread = top - min(min(r) for r in scaled)
    penalty = n * spread + 1  # beats any utility difference, so floors fill first

    s, t = 0, n + k + 1
    g = _Graph(n + k + 2)
    for i in range(n):
        g.add(s, 1 + i, 1, 0)
    arc = {}
    for i in range(n):
        for j in range(k):
            arc[(i, j)] = len(g.to)
            g.add(1 + i, 1 + n + j, 1, top - scaled[i][j])
    for j, (lo, hi) in enumerate(bounds):
        if lo:
            g.add(1 + n + j, t, lo, 0)
        if hi > lo:
            g.add(1 + n + j, t, hi - lo, penalty)
    flow, _ = g.min_cost_flow(s, t, n)
    if flow != n:
        raise InfeasibleAssignmentError("flow could not route every agent")
    choice = [-1] * n
    for (i, j), e in arc.items():
        if g.cap[e] == 0:
            choice[i] = j
    counts = [choice.count(j) for j in range(k)]
    if any(not lo <= c <= hi for c, (lo, hi) in zip(counts, bounds)):
        raise InfeasibleAssignmentError("lower bounds could not be met")
    total = sum((U[i][choice[i]] for i in range(n)), Fraction(0))
    return choice, total


def sample_violation_rate(bank: Sequence[Statement], slate: Slate, assignment: Mapping, utilities: Callable,
                          sample_size: int, rng, n: int, B: int, unassigned_utility=None,
                          require_balanced: bool = True) -> float:
    """Share of statements, sampled with replacement from ``bank``, that
    witness a (0, 1)-violation against (slate, assignment)."""
    bank = list(bank)
    if sample_size < 1:
        raise ValueError("sample_size must be positive")
    if not bank:
        raise ValueError("statement bank is empty")
    rng = np.random.default_rng(rng)
    picks = rng.integers(len(bank), size=sample_size)
    if require_balanced and not is_balanced(assignment, slate, n, B, require_total=unassigned_utility is None):
        raise ContractViolation("assignment is not balanced")
    held = _held_utilities(slate, assignment, utilities, n, unassigned_utility)
    verdict = {}
    hits = 0
    for p in picks:
        p = int(p)
        if p not in verdict:
            alpha = bank[p]
            q = quota(alpha.cost, n, B)
            if q == 0:
                verdict[p] = False
            else:
                count, _, _ = _best_for_statement(alpha, held, utilities, Fraction(0), n, B)
                verdict[p] = count >= q
        hits += verdict[p]
    return hits / sample_size

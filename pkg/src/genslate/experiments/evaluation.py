"""Scoring finished slates with an evaluator oracle, and vote validation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats
from sklearn.metrics import cohen_kappa_score

from ..audit import max_weight_balanced_assignment, sample_violation_rate
from ..core import InfeasibleAssignmentError, Slate, Statement

log = logging.getLogger(__name__)

VIOLATION_SAMPLES = 100


class UtilityTable:
    """Memoised ``utility(agent, statement)`` with optional column batching.

    ``column(statements)`` may be given to fetch many (agent, statement)
    utilities in one go; it receives statements and returns an n x k array.
    """

    def __init__(self, n: int, utility: Callable, column: Optional[Callable] = None):
        self.n = n
        self._utility = utility
        self._column = column
        self._memo = {}

    def _key(self, s: Statement):
        return s.payload if isinstance(s.payload, (str, tuple)) else s.id

    def prefetch(self, statements) -> None:
        missing = []
        for s in statements:
            k = self._key(s)
            if k not in {key for key, _ in missing} and any((i, k) not in self._memo for i in range(self.n)):
                missing.append((k, s))
        if not missing or self._column is None:
            return
        M = self._column([s for _, s in missing])
        for c, (k, _) in enumerate(missing):
            for i in range(self.n):
                self._memo[(i, k)] = M[i][c]

    def __call__(self, i: int, s: Statement):
        k = (i, self._key(s))
        if k not in self._memo:
            self.prefetch([s])
            if k not in self._memo:
                self._memo[k] = self._utility(i, s)
        return self._memo[k]

    def matrix(self, statements) -> list:
        self.prefetch(statements)
        return [[self(i, s) for s in statements] for i in range(self.n)]


@dataclass
class MethodStats:
    method: str
    mean: float
    q1: float
    p_value: float
    violation_rate: float
    slate_cost: int
    statements: int
    assignment_budget: int
    utilities: list = field(default_factory=list)


@dataclass
class EvalReport:
    reference: str
    methods: dict = field(default_factory=dict)

    def rows(self) -> list:
        return [{"method": m.method, "mean": m.mean, "q1": m.q1, "p_value": m.p_value,
                 "violation_rate": m.violation_rate, "slate_cost": m.slate_cost,
                 "statements": m.statements, "assignment_budget": m.assignment_budget}
                for m in self.methods.values()]


def paired_p_value(a, b) -> float:
    """Two-sided paired t-test; 1.0 when the vectors coincide."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    if np.all(d == d[0]):
        return 1.0 if d[0] == 0 else 0.0
    return float(stats.ttest_rel(a, b).pvalue)


def assign_by_utility(slate: Slate, table: UtilityTable, n: int, B: int):
    """Max-utility balanced assignment; when B admits none, the slate's own
    cost is used as the budget. Returns (assignment, budget used)."""
    stmts = list(slate)
    if not stmts:
        raise ValueError("cannot assign agents to an empty slate")
    U = table.matrix(stmts)
    for budget in (B, slate.cost):
        if budget < 1:
            continue
        try:
            choice, _ = max_weight_balanced_assignment(U, [s.cost for s in stmts], n, budget)
        except InfeasibleAssignmentError:
            continue
        return {i: stmts[j].id for i, j in enumerate(choice)}, budget
    raise InfeasibleAssignmentError("no balanced assignment for this slate under B or its own cost")


def evaluate_llm_slates(slates: Mapping[str, tuple], n: int, B: int, table: UtilityTable,
                        bank: Sequence[Statement], rng=None, reference: str = "prose",
                        unassigned_utility=1, samples: int = VIOLATION_SAMPLES) -> EvalReport:
    """Per-method utility statistics under the evaluator oracle ``table``.

    ``slates`` maps method -> (Slate, assignment or None). Methods without
    an assignment get the evaluator-optimal balanced one. The violation rate
    uses ``samples`` bank statements drawn with replacement; all methods see
    the same draws.
    """
    if reference not in slates:
        raise ValueError(f"reference method {reference!r} missing")
    seed = np.random.default_rng(rng).integers(2 ** 63)
    per = {}
    for method, (slate, assignment) in slates.items():
        budget = B
        if assignment is None:
            assignment, budget = assign_by_utility(slate, table, n, B)
        table.prefetch(list(slate))
        u = [float(table(i, slate.by_id(assignment[i]))) if i in assignment else float(unassigned_utility)
             for i in range(n)]
        rate = float("nan")
        if bank:
            picks = np.random.default_rng(seed).integers(len(bank), size=samples)
            table.prefetch([bank[int(k)] for k in np.unique(picks)])
            rate = sample_violation_rate(bank, slate, assignment, table, samples, np.random.default_rng(seed),
                                         n, B, unassigned_utility, require_balanced=False)
        per[method] = (slate, budget, u, rate)
    ref_u = per[reference][2]
    report = EvalReport(reference)
    for method, (slate, budget, u, rate) in per.items():
        report.methods[method] = MethodStats(
            method, float(np.mean(u)), float(np.percentile(u, 25)), paired_p_value(u, ref_u), rate,
            slate.cost, len(slate), budget, u)
    return report


# ------------------------------------------------------------ vote check

@dataclass
class VoteValidation:
    fractions: list  # per implementation
    intervals: list  # Clopper-Pearson 95% (lo, hi) per implementation
    agents: int
    pearson_r: float
    kappa: float
    skipped: list


def vote_validation(votes: Sequence[tuple], impls: Sequence[Callable], min_votes: int = 5) -> VoteValidation:
    """Check whether oracles rank an agent's upvoted statements above their
    downvoted ones.

    ``votes`` holds (agent, upvoted statements, downvoted statements);
    ``impls`` are two callables ``score(agent, statement)``. Agents with
    fewer than ``min_votes`` of either kind are skipped with a warning.
    """
    if len(impls) != 2:
        raise ValueError("vote validation compares exactly two oracles")
    diffs = [[], []]
    skipped = []
    for agent, up, down in votes:
        if len(up) < min_votes or len(down) < min_votes:
            log.warning("agent %s has %d up / %d down votes; skipped", agent, len(up), len(down))
            skipped.append(agent)
            continue
        for k, f in enumerate(impls):
            mu = np.mean([float(f(agent, s)) for s in up])
            md = np.mean([float(f(agent, s)) for s in down])
            diffs[k].append(mu - md)
    m = len(diffs[0])
    if m == 0:
        raise ValueError("no agent has enough votes")
    fractions, intervals, hits = [], [], []
    for d in diffs:
        h = np.asarray(d) > 0
        hits.append(h)
        k = int(h.sum())
        fractions.append(k / m)
        ci = stats.binomtest(k, m).proportion_ci(0.95, method="exact")
        intervals.append((float(ci.low), float(ci.high)))
    a, b = np.asarray(diffs[0]), np.asarray(diffs[1])
    r = float(stats.pearsonr(a, b)[0]) if m > 1 and a.std() > 0 and b.std() > 0 else float("nan")
    if np.array_equal(hits[0], hits[1]):
        kappa = 1.0
    else:
        kappa = float(cohen_kappa_score(hits[0], hits[1]))
    return VoteValidation(fractions, intervals, m, r, kappa, skipped)

"""Ways of picking a cohesive group of agents for one generation call."""

from __future__ import annotations

import math

import numpy as np

GROUP_KINDS = ("tag_nn", "weighted_nn", "closest_cluster", "previous_best")


def target_size(cost_cap: int, n: int, B: int, available: int) -> int:
    return max(1, min(-(-cost_cap * n // B), available))


def _dist(emb: np.ndarray, agents: np.ndarray) -> np.ndarray:
    X = emb[agents]
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def _nearest(D: np.ndarray, row: int, m: int) -> np.ndarray:
    # stable sort keeps lower positions (lower agent ids) first on ties
    return np.argsort(D[row], kind="stable")[:m]


def tag_nn(agents, m, emb, rng, anchor=None) -> np.ndarray:
    """``anchor`` (a position in ``agents``) defaults to a random one."""
    D = _dist(emb, agents)
    if anchor is None:
        anchor = int(rng.integers(len(agents)))
    return agents[np.sort(_nearest(D, anchor, m))]


def balance_weights(A: np.ndarray, rounds: int = 100) -> np.ndarray:
    """Cluster probabilities making agents' inclusion probabilities similar.

    ``A`` is clusters x agents (0/1). Multiplicative reweighting: clusters
    whose members are over-included lose weight.
    """
    p = np.full(A.shape[0], 1.0 / A.shape[0])
    for _ in range(rounds):
        incl = A.T @ p
        target = incl.mean()
        member_mean = (A @ incl) / A.sum(axis=1)
        p = p * target / np.maximum(member_mean, 1e-12)
        p /= p.sum()
    return p


def weighted_nn(agents, m, emb, rng) -> np.ndarray:
    D = _dist(emb, agents)
    k = len(agents)
    A = np.zeros((k, k))
    clusters = []
    for r in range(k):
        idx = _nearest(D, r, m)
        clusters.append(idx)
        A[r, idx] = 1
    p = balance_weights(A)
    pick = int(rng.choice(k, p=p))
    return agents[np.sort(clusters[pick])]


def closest_cluster(agents, m, emb, rng, eps: float = 1e-6) -> np.ndarray:
    D = _dist(emb, agents)
    k = len(agents)
    clusters, spread = [], []
    for r in range(k):
        members = [r]
        load = D[r].copy()  # summed distance of each agent to the cluster
        total = 0.0
        while len(members) < m:
            load_masked = load.copy()
            load_masked[members] = np.inf
            j = int(np.argmin(load_masked))
            total += load[j]
            members.append(j)
            load += D[j]
        clusters.append(np.array(sorted(members)))
        spread.append(total)
    w = 1.0 / (eps + np.asarray(spread))
    pick = int(rng.choice(k, p=w / w.sum()))
    return agents[clusters[pick]]


def previous_best(agents, level, bank, approvals) -> np.ndarray:
    """Largest set of agents approving a banked statement at ``level``.

    ``approvals(agents, statements)`` returns a boolean agents x statements
    matrix. Ties go to the earlier statement.
    """
    if not len(bank):
        return agents[:0]
    M = approvals(agents, bank)
    counts = M.sum(axis=0)
    best = int(np.argmax(counts))
    return agents[M[:, best]]


def propose_group(kind: str, agents, level, cost_cap: int, state, rng, embedding: str = "text") -> np.ndarray:
    """Group of agent ids for one generation call (see ``GROUP_KINDS``)."""
    agents = np.asarray(agents, dtype=np.int64)
    if kind not in GROUP_KINDS:
        raise ValueError(f"unknown group kind {kind!r}")
    if len(agents) <= 1:
        return agents.copy()
    if kind == "previous_best":
        bank = state.bank_list()
        return previous_best(agents, level, bank, lambda a, s: state.approvals(a, s, level))
    m = target_size(cost_cap, state.n, state.group_budget, len(agents))
    emb = state.embeddings.get(embedding)
    fn = {"tag_nn": tag_nn, "weighted_nn": weighted_nn, "closest_cluster": closest_cluster}[kind]
    return fn(agents, m, emb, rng)

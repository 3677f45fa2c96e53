"""Comparison methods for text slates."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.cluster import AffinityPropagation
from sklearn.decomposition import PCA

from ..core import Slate, Statement
from .client import LlmClient, LlmRequest
from .embeddings import parse_bullets
from .generation import ProseConfig, consensus_statement, word_count
from .pipeline import UNIT_COST_STATEMENTS, run_prose
from .prompts import render, template, user_list

log = logging.getLogger(__name__)

BASELINES = ("contextless_zero_shot", "zero_shot", "clustering", "unit_cost")


@dataclass
class BaselineResult:
    method: str
    slate: Slate
    assignment: Optional[dict] = None
    over_budget: bool = False
    notes: list = field(default_factory=list)


def _statements(texts) -> Slate:
    return Slate(tuple(Statement(k, t, word_count(t)) for k, t in enumerate(texts)))


def _slate_prompt(method, topic, budget, descriptions, model) -> LlmRequest:
    if method == "contextless_zero_shot":
        user = template("contextless_user")
    else:
        user = render("zero_shot_user", user_list(descriptions))
    return LlmRequest(model=model, system=render("slate_system", topic, budget), user=user,
                      temperature=None, purpose=method)


def zero_shot_slate(method: str, topic: str, budget: int, descriptions, client: LlmClient,
                    model: str) -> BaselineResult:
    resp = client.chat(_slate_prompt(method, topic, budget, descriptions, model))
    texts = parse_bullets(resp.text)
    slate = _statements(texts)
    over = slate.cost > budget
    notes = [f"slate uses {slate.cost} words, budget {budget}"] if over else []
    if over:
        log.warning("%s slate exceeds the word budget (%d > %d)", method, slate.cost, budget)
    return BaselineResult(method, slate, None, over, notes)


def cluster_agents(embedding: np.ndarray, components: int = 5, random_state: int = 0) -> np.ndarray:
    """Labels from affinity propagation on the leading principal components."""
    X = np.asarray(embedding, dtype=float)
    if len(X) == 1:
        return np.zeros(1, dtype=int)
    k = min(components, X.shape[0], X.shape[1])
    Z = PCA(n_components=k).fit_transform(X)
    ap = AffinityPropagation(damping=0.5, max_iter=200, convergence_iter=15, random_state=random_state)
    labels = ap.fit_predict(Z)
    if np.any(labels < 0):  # no convergence; treat everyone as one group
        log.warning("affinity propagation did not converge; using a single cluster")
        labels = np.zeros(len(X), dtype=int)
    _, labels = np.unique(labels, return_inverse=True)
    return labels


def clustering_slate(descriptions, budget: int, client: LlmClient, config: ProseConfig,
                     embedding: Optional[np.ndarray] = None) -> BaselineResult:
    n = len(descriptions)
    if embedding is None:
        embedding = client.embed(list(descriptions), config.embed_model)
    labels = cluster_agents(embedding)
    stmts, assignment, notes = [], {}, []
    for c in range(labels.max() + 1):
        members = np.flatnonzero(labels == c)
        words = max(1, len(members) * budget // n)
        text = consensus_statement([descriptions[i] for i in members], words, client, config.chat_model,
                                   sample=c, temperature=config.generation_temperature)
        st = Statement(len(stmts), text, word_count(text))
        stmts.append(st)
        for i in members:
            assignment[int(i)] = st.id
    return BaselineResult("clustering", Slate(tuple(stmts)), assignment, False, notes)


def unit_cost_slate(descriptions, client: LlmClient, config: ProseConfig, seed=0,
                    statements: int = UNIT_COST_STATEMENTS, embeddings=None) -> BaselineResult:
    run = run_prose(descriptions, statements, config, client, seed, unit_cost=True, embeddings=embeddings)
    notes = list(run.state.failures)
    if run.result.unassigned:
        notes.append(f"{len(run.result.unassigned)} agents unassigned")
    return BaselineResult("unit_cost", run.result.slate, dict(run.result.assignment), False, notes)


def baseline_slate(method: str, descriptions, budget: int, topic: str, client: LlmClient,
                   config: ProseConfig, seed=0, embeddings=None) -> BaselineResult:
    if method in ("contextless_zero_shot", "zero_shot"):
        return zero_shot_slate(method, topic, budget, descriptions, client, config.chat_model)
    if method == "clustering":
        emb = embeddings.text if embeddings is not None else None
        return clustering_slate(descriptions, budget, client, config, emb)
    if method == "unit_cost":
        return unit_cost_slate(descriptions, client, config, seed, embeddings=embeddings)
    raise ValueError(f"unknown baseline {method!r}; choose from {BASELINES}")

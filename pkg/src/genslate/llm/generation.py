"""Generative side of the text pipeline: consensus statements, the run
state shared by queries, and the generative query itself."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ..core import Statement, as_utility
from ..process import QuerySuite
from .client import LlmClient, LlmRequest
from .groups import propose_group
from .prompts import render, template, user_list
from .scoring import ScoringError, disc_from_responses, disc_requests

log = logging.getLogger(__name__)

DRUG_COSTS = (80, 70, 60, 50, 40, 36, 32, 28, 24, 20, 16, 12, 10, 8, 6, 4, 2)
BOWLING_GREEN_COSTS = (80, 60, 40, 36, 32, 28, 24, 20, 16, 12, 8, 4)
DEFAULT_LEVELS = tuple(as_utility(v) for v in ("5.5", "5", "4.5", "4", "3.5", "3", "2", "1", "0"))

# (group kind, embedding) per generator call; each generator runs twice and
# the embedding-based ones alternate embeddings
GENERATOR_SCHEDULE = (
    ("tag_nn", "text"), ("tag_nn", "rating"),
    ("weighted_nn", "text"), ("weighted_nn", "rating"),
    ("closest_cluster", "text"), ("closest_cluster", "rating"),
    ("previous_best", None), ("previous_best", None),
)

_OPINION = re.compile(r"<opinion>(.*?)</opinion>", re.S)


class GenerationError(ScoringError):
    pass


def word_count(text: str) -> int:
    """Number of maximal whitespace-separated tokens.

    >>> word_count("  a\\t b\\nc ")
    3
    """
    return len((text or "").split())


def extract_opinion(text: str) -> Optional[str]:
    m = _OPINION.search(text or "")
    return m.group(1).strip() if m else None


def consensus_request(descriptions: Sequence[str], word_budget: Optional[int], model: str,
                      sample: int = 0, temperature=None) -> LlmRequest:
    if word_budget is None:
        system = template("consensus_system_unbounded")
    else:
        system = render("consensus_system", word_budget)
    return LlmRequest(model=model, system=system, user=render("consensus_user", user_list(descriptions)),
                      temperature=temperature, purpose="consensus", sample=sample)


def consensus_statement(descriptions: Sequence[str], word_budget: Optional[int], client: LlmClient,
                        model: str, sample: int = 0, temperature=None) -> str:
    """Consensus text for a group; one re-ask on a missing tag or overrun.

    ``word_budget=None`` drops the length instruction. Returns the text;
    its cost is :func:`word_count` of it.
    """
    if word_budget is not None and word_budget < 1:
        raise ValueError("word budget must be at least 1")
    problem = None
    for attempt in range(2):
        req = consensus_request(descriptions, word_budget, model, 2 * sample + attempt, temperature)
        text = extract_opinion(client.chat(req).text)
        if text is None:
            problem = "response has no opinion tags"
        elif not text:
            problem = "opinion is empty"
        elif word_budget is not None and word_count(text) > word_budget:
            problem = f"opinion has {word_count(text)} words, budget {word_budget}"
        else:
            return text
    raise GenerationError(problem)


@dataclass(frozen=True)
class ProseConfig:
    cost_list: tuple = DRUG_COSTS
    levels: tuple = DEFAULT_LEVELS
    min_length: int = 10
    specificity_coefficient: Fraction = Fraction(1)
    chat_model: str = "gpt-4o"
    embed_model: str = "text-embedding-3-large"
    eval_model: str = "gpt-4o"
    rating_statements: int = 50
    brief_cap: int = 120
    generator_schedule: tuple = GENERATOR_SCHEDULE
    generation_temperature: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "cost_list", tuple(int(c) for c in self.cost_list))
        object.__setattr__(self, "levels", tuple(as_utility(v) for v in self.levels))
        object.__setattr__(self, "specificity_coefficient", as_utility(self.specificity_coefficient))
        object.__setattr__(self, "generator_schedule", tuple(tuple(g) for g in self.generator_schedule))

    @classmethod
    def preset(cls, name: str, **overrides) -> "ProseConfig":
        presets = {
            "drug": dict(cost_list=DRUG_COSTS, min_length=10),
            "bowling_green": dict(cost_list=BOWLING_GREEN_COSTS, min_length=8),
        }
        if name not in presets:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(presets)}")
        return cls(**{**presets[name], **overrides})


@dataclass
class ProseRunState:
    """Everything one text run accumulates: the statement bank (append-only,
    deduplicated by text), cached utilities and failure notes."""

    descriptions: list
    budget: int
    config: ProseConfig
    client: LlmClient
    embeddings: object = None
    unit_cost: bool = False
    bank: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    _by_text: dict = field(default_factory=dict)
    _disc: dict = field(default_factory=dict)
    _samples: int = 0

    @property
    def n(self) -> int:
        return len(self.descriptions)

    @property
    def group_budget(self) -> int:
        return self.budget

    def bank_list(self) -> list:
        return list(self.bank)

    def next_sample(self) -> int:
        self._samples += 1
        return self._samples - 1

    def add_text(self, text: str) -> Statement:
        st = self._by_text.get(text)
        if st is None:
            st = Statement(len(self.bank), text, word_count(text))
            self.bank.append(st)
            self._by_text[text] = st
        return st

    def disc_matrix(self, agents, statements) -> np.ndarray:
        """Utilities (agents x statements); failed scores are -inf."""
        agents = [int(a) for a in agents]
        todo = [(a, s) for a in agents for s in statements if (a, s.id) not in self._disc]
        if todo:
            model = self.config.chat_model
            reqs = []
            for a, s in todo:
                reqs.extend(disc_requests(self.descriptions[a], s.payload, model))
            resps = self.client.chat_many(reqs)
            coeff = self.config.specificity_coefficient
            for k, (a, s) in enumerate(todo):
                try:
                    val = disc_from_responses(resps[2 * k], resps[2 * k + 1], coeff)
                except ScoringError as exc:
                    self.failures.append(f"disc agent {a} statement {s.id}: {exc}")
                    val = float("-inf")
                self._disc[(a, s.id)] = val
        out = np.empty((len(agents), len(statements)), dtype=object)
        for r, a in enumerate(agents):
            for c, s in enumerate(statements):
                out[r, c] = self._disc[(a, s.id)]
        return out

    def approvals(self, agents, statements, level) -> np.ndarray:
        vals = self.disc_matrix(agents, statements)
        return np.frompyfunc(lambda v: v >= level, 1, 1)(vals).astype(bool).reshape(vals.shape)


def prose_gen_query(agents, level, cost_cap: int, state: ProseRunState, rng) -> Optional[Statement]:
    """Run every scheduled generator, bank the results, and return the best
    supported statement of cost at most ``cost_cap`` among the new and banked
    ones (ties to the lower id). None when nothing qualifies."""
    if cost_cap < 1:
        raise ValueError("cost cap must be at least 1")
    agents = np.asarray(agents, dtype=np.int64)
    cfg = state.config
    for kind, emb in cfg.generator_schedule:
        group = propose_group(kind, agents, level, cost_cap, state, rng, emb or "text")
        if len(group) == 0:
            continue
        budget = None if state.unit_cost else cost_cap
        try:
            text = consensus_statement([state.descriptions[i] for i in group], budget, state.client,
                                       cfg.chat_model, state.next_sample(), cfg.generation_temperature)
        except GenerationError as exc:
            state.failures.append(f"generation ({kind}): {exc}")
            continue
        state.add_text(text)

    min_len = 0 if level == cfg.levels[-1] else cfg.min_length
    cands = [s for s in state.bank
             if s.cost >= max(1, min_len) and (state.unit_cost or s.cost <= cost_cap)]
    if not cands:
        return None
    appr = state.approvals(agents, cands, level)
    counts = appr.sum(axis=0)
    return cands[int(np.argmax(counts))]


class ProseQueries(QuerySuite):
    """Query suite backed by a chat model, for :func:`genslate.process.run_process`."""

    def __init__(self, state: ProseRunState):
        self.state = state

    def disc(self, agent, statement):
        return self.state.disc_matrix([agent], [statement])[0, 0]

    def disc_many(self, agents, statements):
        return self.state.disc_matrix(agents, statements)

    def gen(self, agents, level, cost_cap, rng):
        return prose_gen_query(agents, level, cost_cap, self.state, rng)

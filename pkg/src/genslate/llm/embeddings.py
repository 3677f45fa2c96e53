"""Text and rating embeddings of agents."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np

from .client import LlmClient, LlmRequest
from .prompts import render, template, user_list
from .scoring import ScoringError, first_int

log = logging.getLogger(__name__)

RATING_MIN, RATING_MAX = 1, 7


@dataclass
class EmbeddingState:
    text: np.ndarray  # n x d
    rating: np.ndarray  # n x k, entries in 1..7
    brief_statements: list

    def get(self, kind: str) -> np.ndarray:
        if kind == "text":
            return self.text
        if kind == "rating":
            return self.rating
        raise ValueError(f"unknown embedding {kind!r}")


def parse_bullets(text: str) -> list:
    out = []
    for line in (text or "").splitlines():
        m = re.match(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$", line)
        if m:
            out.append(m.group(1))
    return out


def brief_statements(descriptions, client: LlmClient, model: str, cap: int = 120, rounds: int = 10) -> list:
    """Ask repeatedly for brief statements covering all raised opinions,
    until the model answers DONE, adds nothing new, or ``cap`` is hit."""
    found, seen = [], set()
    users = user_list(descriptions)
    for r in range(rounds):
        existing = "\n".join(f"- {s}" for s in found) or "(none yet)"
        req = LlmRequest(model=model, system=template("brief_statements_system"),
                         user=render("brief_statements_user", users, existing),
                         temperature=0.0, purpose="brief_statements", sample=r)
        resp = client.chat(req)
        new = [s for s in parse_bullets(resp.text) if s.lower() not in seen]
        for s in new:
            seen.add(s.lower())
            found.append(s)
        if not new or resp.text.strip().upper().startswith("DONE") or len(found) >= cap:
            break
    return found[:cap]


def rating_request(description: str, statement: str, model: str) -> LlmRequest:
    return LlmRequest(model=model, system=template("rating_system"),
                      user=render("rating_user", statement, description),
                      temperature=0.0, max_tokens=1, purpose="rating")


def rating_matrix(descriptions, statements, client: LlmClient, model: str) -> np.ndarray:
    reqs = [rating_request(d, s, model) for d in descriptions for s in statements]
    resps = client.chat_many(reqs)
    vals = np.empty(len(reqs))
    for k, r in enumerate(resps):
        v = first_int(r.text, RATING_MIN, RATING_MAX)
        if v is None:
            log.warning("unparseable rating %r, using neutral 4", r.text)
            v = 4
        vals[k] = v
    return vals.reshape(len(descriptions), len(statements))


def build_embeddings(descriptions, client: LlmClient, chat_model: str, embed_model: str, rng,
                     num_statements: int = 50, cap: int = 120) -> EmbeddingState:
    if any(not str(d).strip() for d in descriptions):
        raise ValueError("every agent needs a nonempty description")
    rng = np.random.default_rng(rng)
    text = client.embed(list(descriptions), embed_model)
    pool = brief_statements(descriptions, client, chat_model, cap)
    if not pool:
        raise ScoringError("no brief statements were generated")
    if len(pool) > num_statements:
        idx = np.sort(rng.choice(len(pool), size=num_statements, replace=False))
        chosen = [pool[i] for i in idx]
    else:
        chosen = list(pool)
    ratings = rating_matrix(descriptions, chosen, client, chat_model)
    return EmbeddingState(np.asarray(text, dtype=float), ratings, chosen)

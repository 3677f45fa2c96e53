"""Discriminative scores from chat responses."""

from __future__ import annotations

import json
import math
import re
from fractions import Fraction
from typing import Optional

from ..core import GenslateError, as_utility
from .client import LlmClient, LlmRequest
from .prompts import render, template

DIGITS = tuple(str(d) for d in range(1, 7))


class ScoringError(GenslateError):
    pass


def digit_expectation(top_logprobs, lo: int = 1, hi: int = 6) -> Optional[Fraction]:
    """Probability-weighted mean over digit tokens lo..hi, renormalised.

    Returns None when no digit token is among the alternatives.

    >>> import math
    >>> float(digit_expectation([("5", math.log(.5)), ("6", math.log(.5))]))
    5.5
    """
    mass = {}
    for tok, lp in top_logprobs:
        t = tok.strip()
        if t.isdigit() and lo <= int(t) <= hi:
            mass[int(t)] = mass.get(int(t), 0.0) + math.exp(lp)
    total = sum(mass.values())
    if total <= 0:
        return None
    return as_utility(sum(d * p for d, p in mass.items()) / total)


def first_int(text: str, lo: int, hi: int) -> Optional[int]:
    m = re.search(r"\d+", text or "")
    if not m:
        return None
    v = int(m.group())
    return v if lo <= v <= hi else None


def response_score(resp, lo=1, hi=6) -> Fraction:
    val = digit_expectation(resp.top_logprobs, lo, hi) if resp.top_logprobs else None
    if val is None:
        parsed = first_int(resp.text, lo, hi)
        if parsed is None:
            raise ScoringError(f"no score in response {resp.text!r}")
        val = Fraction(parsed)
    return val


def combine(agreement, specificity, coefficient=1) -> Fraction:
    """agreement - coefficient * (6 - specificity) / 5, exactly.

    >>> combine(4, 1, 1)
    Fraction(3, 1)
    """
    a, s, c = as_utility(agreement), as_utility(specificity), as_utility(coefficient)
    return a - c * (6 - s) / 5


def disc_requests(description: str, statement: str, model: str) -> tuple:
    common = dict(model=model, temperature=0.0, max_tokens=1, logprobs=True, top_logprobs=20)
    return (
        LlmRequest(system=template("agreement_system"),
                   user=render("agreement_user", statement, description), purpose="agreement", **common),
        LlmRequest(system=template("specificity_system"),
                   user=render("specificity_user", statement, description), purpose="specificity", **common),
    )


def disc_from_responses(agreement_resp, specificity_resp, coefficient=1) -> Fraction:
    return combine(response_score(agreement_resp), response_score(specificity_resp), coefficient)


def disc_utility(description: str, statement: str, client: LlmClient, model: str, coefficient=1) -> Fraction:
    """Agreement/specificity utility of one agent for one statement text."""
    a, s = client.chat_many(disc_requests(description, statement, model))
    return disc_from_responses(a, s, coefficient)


def cot_request(description: str, statement: str, model: str, sample: int = 0) -> LlmRequest:
    return LlmRequest(model=model, system=template("cot_system"),
                      user=render("cot_user", description, statement),
                      temperature=0.0, json_mode=True, purpose="cot", sample=sample)


def parse_cot(text: str) -> int:
    try:
        data = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ScoringError(f"evaluator reply is not JSON: {exc}") from exc
    if not isinstance(data, dict) or "score" not in data:
        raise ScoringError("evaluator reply has no score field")
    raw = data["score"]
    try:
        val = Fraction(str(raw).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ScoringError(f"score {raw!r} is not a number") from exc
    if val.denominator != 1 or not 1 <= val <= 6:
        raise ScoringError(f"score {raw!r} outside 1..6")
    return int(val)


def cot_utility(description: str, statement: str, client: LlmClient, model: str) -> int:
    """Chain-of-thought evaluator score; one re-ask on unparseable JSON."""
    resp = client.chat(cot_request(description, statement, model))
    try:
        return parse_cot(resp.text)
    except ScoringError as exc:
        if "outside" in str(exc):
            raise
    resp = client.chat(cot_request(description, statement, model, sample=1))
    return parse_cot(resp.text)


def cot_matrix(descriptions, statements, client: LlmClient, model: str) -> list:
    """Evaluator scores, rows agents and columns statement texts.

    First attempts go out as one batch; unparseable replies are re-asked
    one pair at a time.
    """
    pairs = [(i, t) for i in range(len(descriptions)) for t in statements]
    resps = client.chat_many([cot_request(descriptions[i], t, model) for i, t in pairs])
    out = [[None] * len(statements) for _ in descriptions]
    for k, ((i, t), r) in enumerate(zip(pairs, resps)):
        try:
            v = parse_cot(r.text)
        except ScoringError as exc:
            if "outside" in str(exc):
                raise
            v = parse_cot(client.chat(cot_request(descriptions[i], t, model, sample=1)).text)
        out[i][k % len(statements)] = v
    return out

"""Deterministic offline backend with planted opinion blocks.

Each agent belongs to one block and its description lists that block's
keywords. Replies depend only on keyword overlap, so outcomes can be worked
out by hand:

* agreement: 6 when every keyword of the statement is one of the user's,
  1 otherwise (also 1 for a statement without keywords)
* specificity: 1 + round(5 * covered / |user keywords|)
* consensus: the first ``budget`` keywords of the group's largest block
* rating: 7 when the brief statement's keyword is the user's, else 1
* evaluator score: specificity when agreement is 6, else 1
"""

from __future__ import annotations

import json
import math
import re
import zlib
from collections import Counter

import numpy as np

from .client import LlmRequest, LlmResponse
from .prompts import unrender

DIM = 32


def planted_descriptions(blocks, prefix: str = "My priorities are") -> list:
    """One description per agent: ``blocks`` is a list of (size, keywords)."""
    return [f"{prefix} {' '.join(words)}." for size, words in blocks for _ in range(size)]


class PlantedOpinionBackend:
    def __init__(self, blocks):
        self.blocks = [(int(s), tuple(w)) for s, w in blocks]
        self.vocab = {w: b for b, (_, ws) in enumerate(self.blocks) for w in ws}
        self.requests = 0

    # -- helpers
    def keywords(self, text: str) -> list:
        return [w for w in re.findall(r"[A-Za-z0-9_]+", text or "") if w in self.vocab]

    def block_of(self, description: str):
        ks = self.keywords(description)
        return self.vocab[ks[0]] if ks else None

    def scores(self, statement: str, description: str) -> tuple:
        W, V = set(self.keywords(statement)), set(self.keywords(description))
        agree = 6 if W and V and W <= V else 1
        spec = 1 + round(5 * len(W & V) / len(V)) if V else 1
        return agree, spec

    @staticmethod
    def _digit(d: int) -> LlmResponse:
        return LlmResponse(str(d), ((str(d), 0.0),))

    # -- backend protocol
    def complete(self, req: LlmRequest) -> LlmResponse:
        self.requests += 1
        p = req.purpose
        if p in ("agreement", "specificity"):
            statement, user = unrender(f"{p}_user", req.user)
            agree, spec = self.scores(statement, user)
            return self._digit(agree if p == "agreement" else spec)
        if p == "cot":
            user, statement = unrender("cot_user", req.user)
            agree, spec = self.scores(statement, user)
            return LlmResponse(json.dumps({"step1": "", "step2": "", "step3": "", "step4": "",
                                           "score": spec if agree == 6 else 1}))
        if p == "consensus":
            (users,) = unrender("consensus_user", req.user)
            m = re.search(r"at most (\d+) words", req.system)
            budget = int(m.group(1)) if m else None
            blocks = Counter(self.block_of(d) for d in re.split(r"\n\n(?=User \d+: )", users))
            blocks.pop(None, None)
            if not blocks:
                return LlmResponse("<opinion></opinion>")
            top = min(blocks, key=lambda b: (-blocks[b], b))
            words = self.blocks[top][1]
            return LlmResponse(f"<opinion>{' '.join(words[:budget] if budget else words)}</opinion>")
        if p == "brief_statements":
            if req.sample > 0:
                return LlmResponse("DONE")
            return LlmResponse("\n".join(f"- {w}" for w in self.vocab))
        if p == "rating":
            statement, user = unrender("rating_user", req.user)
            W, V = set(self.keywords(statement)), set(self.keywords(user))
            return self._digit(7 if W and W <= V else 1)
        if p == "brand_filter":
            return LlmResponse("NO")
        if p in ("zero_shot", "contextless_zero_shot"):
            lines = [" ".join(ws) for _, ws in self.blocks]
            if p == "contextless_zero_shot":
                lines = lines[:1]
            return LlmResponse("\n".join(f"- {t}" for t in lines))
        raise ValueError(f"mock backend cannot answer purpose {p!r}")

    def embed(self, request) -> list:
        out = []
        for text in request.texts:
            v = np.zeros(DIM)
            for w in re.findall(r"[A-Za-z0-9_]+", text.lower()):
                v[zlib.crc32(w.encode()) % DIM] += 1.0
            norm = math.sqrt(float(v @ v)) or 1.0
            out.append(list(v / norm))
        return out

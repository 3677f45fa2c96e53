"""Loading agent populations from review tables and prepared agent files."""

from __future__ import annotations

import csv
import html
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core import GenslateError, Instance
from .client import LlmClient, LlmRequest
from .generation import word_count
from .prompts import render, template

log = logging.getLogger(__name__)

DRUG_BUDGET = 160
POLIS_BUDGET = 164
SAMPLING = {
    "uniform": {r: 8 for r in range(1, 11)},
    "imbalanced": {1: 20, 2: 10, 5: 20, 9: 10, 10: 20},
}


class DatasetError(GenslateError):
    pass


@dataclass
class Dataset:
    name: str
    topic: str
    descriptions: list
    budget: int
    ratings: Optional[list] = None

    @property
    def n(self) -> int:
        return len(self.descriptions)

    def instance(self, levels) -> Instance:
        return Instance.build(self.n, self.budget, levels, self.descriptions)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for k, d in enumerate(self.descriptions):
                rec = {"id": k, "description": d}
                if self.ratings is not None:
                    rec["rating"] = self.ratings[k]
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def clean_review(text: str) -> str:
    text = html.unescape(text or "").strip()
    # the public dump wraps some reviews in two layers of quotes
    while len(text) >= 2 and text[0] == text[-1] == '"':
        text = text[1:-1].strip()
    return " ".join(text.split())


def read_reviews(path) -> list:
    """Rows of a tab- or comma-separated review table as dicts."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        head = fh.readline()
        fh.seek(0)
        delim = "\t" if head.count("\t") >= head.count(",") else ","
        return list(csv.DictReader(fh, delimiter=delim))


def is_brand_specific(drug: str, review: str, client: LlmClient, model: str) -> bool:
    req = LlmRequest(model=model, system=template("brand_filter_system"),
                     user=render("brand_filter_user", drug, review), temperature=0.0,
                     max_tokens=3, purpose="brand_filter")
    return client.chat(req).text.strip().upper().startswith("Y")


def length_window(texts, lo_pct: float, hi_pct: float) -> list:
    lengths = np.array([word_count(t) for t in texts])
    lo, hi = np.percentile(lengths, [lo_pct, hi_pct])
    return [k for k, L in enumerate(lengths) if lo <= L <= hi]


def load_drug_reviews(path, drug: str, scheme: str = "uniform", percentiles=(50, 75), seed=0,
                      client: Optional[LlmClient] = None, model: str = "gpt-4o",
                      match_field: str = "drugName", topic: Optional[str] = None,
                      budget: int = DRUG_BUDGET) -> Dataset:
    """Stratified sample of reviews for one drug.

    Rows are matched on ``match_field`` (case-insensitive). When a client is
    given, reviews about a specific brand are dropped first. Then only
    reviews whose word count lies between the given percentiles are kept,
    and ``SAMPLING[scheme]`` reviews are drawn per rating.
    """
    if scheme not in SAMPLING:
        raise DatasetError(f"unknown sampling scheme {scheme!r}")
    rows = [r for r in read_reviews(path) if (r.get(match_field) or "").strip().lower() == drug.lower()]
    if not rows:
        raise DatasetError(f"no reviews with {match_field} = {drug!r}")
    texts = [clean_review(r["review"]) for r in rows]
    ratings = [int(float(r["rating"])) for r in rows]
    keep = list(range(len(rows)))
    if client is not None:
        keep = [k for k in keep if not is_brand_specific(drug, texts[k], client, model)]
    window = length_window([texts[k] for k in keep], *percentiles)
    keep = [keep[k] for k in window]

    rng = np.random.default_rng(seed)
    descs, rs = [], []
    for rating, count in SAMPLING[scheme].items():
        pool = [k for k in keep if ratings[k] == rating]
        if len(pool) < count:
            raise DatasetError(f"rating {rating} stratum has {len(pool)} reviews, need {count}")
        for k in rng.choice(pool, size=count, replace=False):
            descs.append(texts[int(k)])
            rs.append(rating)
    return Dataset(f"{drug} ({scheme})", topic or drug, descs, budget, rs)


def load_agent_file(path, budget: int = POLIS_BUDGET, topic: str = "") -> Dataset:
    """Prepared agents, one JSON object ``{id, description}`` per line."""
    recs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    recs.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    if not recs:
        raise DatasetError(f"{path} holds no agents")
    recs.sort(key=lambda r: r["id"])
    descs = [str(r["description"]) for r in recs]
    if any(not d.strip() for d in descs):
        raise DatasetError("every agent needs a nonempty description")
    ratings = [r["rating"] for r in recs] if all("rating" in r for r in recs) else None
    return Dataset(Path(path).stem, topic, descs, budget, ratings)


def ingest_dataset(kind: str, path, **params) -> Dataset:
    if kind == "drug_review":
        return load_drug_reviews(path, **params)
    if kind == "polis":
        return load_agent_file(path, **params)
    raise DatasetError(f"unknown dataset kind {kind!r}")

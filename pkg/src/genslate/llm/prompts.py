"""Prompt templates shipped as package resources.

Templates are filled by plain placeholder substitution (several contain
literal braces, so ``str.format`` is not an option).
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources

PLACEHOLDERS = {
    "agreement_user": ("<insert statement>", "<insert user information>"),
    "specificity_user": ("<insert statement>", "<insert user information>"),
    "consensus_system": ("<word budget>",),
    "consensus_user": ("<list of user information for all agents given as input to generative query>",),
    "cot_user": ("<insert user information>", "<statement>"),
    "slate_system": ("{topic}", "{word_budget}"),
    "zero_shot_user": ("{user_opinions_list_str}",),
    "rating_user": ("{statement}", "{user}"),
    "brief_statements_user": ("{users}", "{existing}"),
    "brand_filter_user": ("{drug}", "{review}"),
}


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return resources.files(__package__).joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, *values) -> str:
    text = template(name)
    keys = PLACEHOLDERS.get(name, ())
    if len(values) != len(keys):
        raise ValueError(f"template {name} takes {len(keys)} values, got {len(values)}")
    for key, val in zip(keys, values):
        text = text.replace(key, str(val))
    return text


def prompt_version() -> str:
    """Short digest over every template, for run manifests."""
    h = hashlib.sha256()
    for f in sorted(resources.files(__package__).joinpath("prompts").iterdir(), key=lambda p: p.name):
        if f.name.endswith(".txt"):
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()[:12]


def user_list(descriptions) -> str:
    return "\n\n".join(f"User {k + 1}: {d}" for k, d in enumerate(descriptions))


def unrender(name: str, text: str) -> tuple:
    """Recover the values substituted into template ``name``.

    Inverse of :func:`render`, for backends and tests that need to read a
    rendered prompt back. Raises ValueError when ``text`` does not match.
    """
    import re

    tpl = template(name)
    keys = PLACEHOLDERS.get(name, ())
    if not keys:
        return ()
    positions = sorted((tpl.index(k), k) for k in keys)
    pattern, last = "", 0
    for pos, key in positions:
        pattern += re.escape(tpl[last:pos]) + "(.*?)"
        last = pos + len(key)
    pattern += re.escape(tpl[last:])
    m = re.fullmatch(pattern, text, flags=re.S)
    if not m:
        raise ValueError(f"text does not match template {name}")
    found = dict(zip((k for _, k in positions), m.groups()))
    return tuple(found[k] for k in keys)

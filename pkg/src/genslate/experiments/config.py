"""Run configuration files, run directories and manifests."""

from __future__ import annotations

import hashlib
import json
import platform
import time
from pathlib import Path
from typing import Optional

import yaml

from ..core import ConfigError

DEFAULTS = {
    "env": {"num_issues": 5, "opinion_count": 5, "n": 60, "B": 15},
    "sweep": {"num_instances": 100, "base_seed": 0, "error_levels": [0, 1, 2, 3], "modes": ["uniform"],
              "variants": ["uniform", "fast", "complex"]},
    "llm": {"base_url": "https://api.openai.com/v1", "chat_model": "gpt-4o",
            "embed_model": "text-embedding-3-large", "cache": "llm_cache.jsonl", "mode": "record",
            "max_workers": 4, "rate_limit": 0.0},
    "prose": {"preset": "drug", "seed": 0},
    "datasets": {},
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: Optional[str] = None) -> dict:
    """YAML or JSON config merged over the defaults (``None`` = defaults)."""
    if path is None:
        return _merge(DEFAULTS, {})
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    return _merge(DEFAULTS, data)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def versions() -> dict:
    import numpy
    import scipy
    import sklearn

    from .. import __version__
    from ..llm.prompts import prompt_version

    return {"genslate": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__, "prompts": prompt_version()}


def prepare_run_dir(out: str, command: str, config: dict, seeds: dict, arguments: Optional[dict] = None) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config_hash": config_hash(config), "config": config, "seeds": seeds, "arguments": arguments or {},
                "versions": versions(), "created": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                                        encoding="utf-8")
    return path

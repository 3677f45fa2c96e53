"""Chat and embedding clients with an append-only response cache.

Modes:

* ``live``   - call the backend, never touch the cache
* ``record`` - serve cache hits, call the backend on misses and append
* ``replay`` - cache only; a miss raises :class:`ReplayMissError`
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from ..core import GenslateError

log = logging.getLogger(__name__)

MODES = ("live", "record", "replay")
API_KEY_ENV = "GENSLATE_API_KEY"


class ReplayMissError(GenslateError, KeyError):
    def __init__(self, key: str, purpose: str = ""):
        super().__init__(f"no cached response for key {key} ({purpose or 'unknown purpose'})")
        self.key = key


class TransportError(GenslateError):
    pass


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class LlmRequest:
    model: str
    system: str
    user: str
    temperature: Optional[float] = 0.0
    max_tokens: Optional[int] = None
    logprobs: bool = False
    top_logprobs: int = 0
    json_mode: bool = False
    # what the request is for; routes mock backends and labels cache misses
    purpose: str = ""
    # distinguishes deliberate repeat samples of the same prompt
    sample: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def key(self) -> str:
        return hashlib.sha256(_canonical({"kind": "chat", **self.to_json()}).encode()).hexdigest()


@dataclass(frozen=True)
class LlmResponse:
    text: str
    # top-k alternatives for the first generated token: ((token, logprob), ...)
    top_logprobs: tuple = ()

    def to_json(self) -> dict:
        return {"text": self.text, "top_logprobs": [list(p) for p in self.top_logprobs]}

    @classmethod
    def from_json(cls, d: dict) -> "LlmResponse":
        return cls(d["text"], tuple((str(t), float(lp)) for t, lp in d.get("top_logprobs", [])))


@dataclass(frozen=True)
class EmbedRequest:
    model: str
    texts: tuple

    @property
    def key(self) -> str:
        return hashlib.sha256(_canonical({"kind": "embed", "model": self.model,
                                          "texts": list(self.texts)}).encode()).hexdigest()


class Backend(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...

    def embed(self, request: EmbedRequest) -> list: ...


class ResponseCache:
    """JSON-lines file of ``{key, kind, request, response}`` records.

    Safe for concurrent use from threads of one process. Later records for
    an existing key are ignored on load, so the file stays append-only.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        log.warning("skipping corrupt cache line %d in %s", lineno, self.path)
                        continue
                    self._data.setdefault(rec["key"], rec["response"])

    def __contains__(self, key) -> bool:
        return key in self._data

    def __len__(self):
        return len(self._data)

    def get(self, key):
        return self._data.get(key)

    def put(self, key: str, kind: str, request, response) -> None:
        with self._lock:
            if key in self._data:
                return
            self._data[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(_canonical({"key": key, "kind": kind, "request": request, "response": response}) + "\n")


class TokenBucket:
    """Simple blocking rate limiter (``rate`` tokens per second)."""

    def __init__(self, rate: float, burst: int = 1):
        self.rate = float(rate)
        self.capacity = max(1, burst)
        self.tokens = float(self.capacity)
        self.stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            time.sleep(wait)


class LlmClient:
    def __init__(self, backend: Optional[Backend] = None, cache: Optional[ResponseCache] = None,
                 mode: str = "record", max_workers: int = 4, rate_limit: float = 0.0):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode != "live" and cache is None:
            raise ValueError(f"{mode} mode needs a cache")
        if mode != "replay" and backend is None:
            raise ValueError(f"{mode} mode needs a backend")
        self.backend = backend
        self.cache = cache
        self.mode = mode
        self.max_workers = max(1, max_workers)
        self.limiter = TokenBucket(rate_limit, burst=self.max_workers) if rate_limit else None
        self.calls = 0

    def _call(self, fn, req):
        if self.limiter:
            self.limiter.acquire()
        self.calls += 1
        return fn(req)

    def chat(self, request: LlmRequest) -> LlmResponse:
        key = request.key
        if self.mode != "live":
            hit = self.cache.get(key)
            if hit is not None:
                return LlmResponse.from_json(hit)
            if self.mode == "replay":
                raise ReplayMissError(key, request.purpose)
        resp = self._call(self.backend.complete, request)
        if self.mode == "record":
            self.cache.put(key, "chat", request.to_json(), resp.to_json())
        return resp

    def chat_many(self, requests: Sequence[LlmRequest]) -> list:
        if self.max_workers == 1 or len(requests) <= 1:
            return [self.chat(r) for r in requests]
        with ThreadPoolExecutor(self.max_workers) as pool:
            return list(pool.map(self.chat, requests))

    def embed(self, texts: Sequence[str], model: str) -> np.ndarray:
        req = EmbedRequest(model, tuple(texts))
        key = req.key
        if self.mode != "live":
            hit = self.cache.get(key)
            if hit is not None:
                return np.asarray(hit, dtype=float)
            if self.mode == "replay":
                raise ReplayMissError(key, "embedding")
        vecs = self._call(self.backend.embed, req)
        if self.mode == "record":
            self.cache.put(key, "embed", {"model": model, "texts": list(texts)}, [list(map(float, v)) for v in vecs])
        return np.asarray(vecs, dtype=float)


class OpenAICompatibleBackend:
    """Backend for servers speaking the chat-completions / embeddings JSON shape."""

    def __init__(self, base_url: str, api_key: Optional[str] = None, timeout: float = 60.0,
                 max_retries: int = 3, backoff: float = 1.0):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.max_retries = max_retries
        self.backoff = backoff
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers)
        self._errors = (httpx.TransportError, httpx.HTTPStatusError)

    def _post(self, path: str, payload: dict) -> dict:
        last = None
        for attempt in range(self.max_retries):
            try:
                r = self._http.post(f"{self.base_url}{path}", json=payload)
                r.raise_for_status()
                return r.json()
            except self._errors as exc:
                last = exc
                log.warning("request to %s failed (attempt %d/%d): %s", path, attempt + 1, self.max_retries, exc)
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * 2 ** attempt)
        raise TransportError(f"{path} failed after {self.max_retries} attempts: {last}")

    def complete(self, request: LlmRequest) -> LlmResponse:
        payload = {
            "model": request.model,
            "messages": [{"role": "system", "content": request.system},
                         {"role": "user", "content": request.user}],
        }
        if request.temperature is not None:
            payload["temperature"] = request.temperature
        if request.max_tokens:
            payload["max_tokens"] = request.max_tokens
        if request.logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = request.top_logprobs
        if request.json_mode:
            payload["response_format"] = {"type": "json_object"}
        data = self._post("/chat/completions", payload)
        choice = data["choices"][0]
        text = choice["message"]["content"] or ""
        tops = ()
        content = (choice.get("logprobs") or {}).get("content") or []
        if content:
            tops = tuple((t["token"], float(t["logprob"])) for t in content[0].get("top_logprobs", []))
        return LlmResponse(text, tops)

    def embed(self, request: EmbedRequest) -> list:
        data = self._post("/embeddings", {"model": request.model, "input": list(request.texts)})
        rows = sorted(data["data"], key=lambda d: d["index"])
        return [r["embedding"] for r in rows]

"""Backend-agnostic chat-completion client.

Three interchangeable backends: a live OpenAI-compatible HTTP backend, a
deterministic scripted mock for tests, and a journal-replay backend that
re-serves recorded responses so a whole run can be reproduced bit for bit
without network access.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field

import httpx

VALID_ROLES = ("system", "user", "assistant")
DEFAULT_API_KEY_ENV = "BADGE_API_KEY"
GENERATION_TEMPERATURE = 0.7
EVALUATION_TEMPERATURE = 0.0


class LlmError(Exception):
    pass


class AuthError(LlmError):
    pass


class RateLimited(LlmError):
    pass


class RequestTimeout(LlmError):
    pass


class MalformedResponse(LlmError):
    pass


class TransportError(LlmError):
    pass


#: Error classes worth another attempt; auth and parse failures are final.
RETRYABLE = (RateLimited, RequestTimeout, TransportError)


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = 1024
    request_tag: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        for role, _ in self.messages:
            if role not in VALID_ROLES:
                raise ValueError(f"unknown role {role!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def last_user_content(self) -> str:
        for role, content in reversed(self.messages):
            if role == "user":
                return content
        return self.messages[-1][1]


@dataclass(frozen=True)
class ChatResponse:
    content: str
    model_id: str
    usage: tuple[int, int] = (0, 0)  # (prompt_tokens, completion_tokens)
    latency_ms: int = 0


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_base_ms: int = 250

    def __post_init__(self):
        if not 0 <= self.max_retries <= 8:
            raise ValueError("max_retries must be in [0, 8]")
        if self.timeout_s <= 0 or self.backoff_base_ms <= 0:
            raise ValueError("timeout_s and backoff_base_ms must be positive")


def prompt_fingerprint(req: ChatRequest) -> str:
    """Stable digest of (model, messages); the mock-script and journal key."""
    h = hashlib.sha256()
    h.update(req.model_id.encode("utf-8"))
    for role, content in req.messages:
        h.update(b"\x00" + role.encode("utf-8") + b"\x01" + content.encode("utf-8"))
    return h.hexdigest()[:16]


class MockBackend:
    """Scripted offline backend.

    Script keys, checked in order: exact fingerprints (see
    prompt_fingerprint), then "contains:<substring>" matchers against the
    concatenated prompt text in insertion order, then "default".
    Unscripted prompts fall back to a deterministic echo of the last 40
    payload characters. Values are a response string, an LlmError to
    raise, or a list of those consumed one per call (cycling).
    """

    def __init__(self, script: dict | None = None):
        self.script = dict(script or {})
        self.calls: list[ChatRequest] = []
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()

    def _lookup(self, req: ChatRequest):
        fp = prompt_fingerprint(req)
        if fp in self.script:
            return fp, self.script[fp]
        text = "\n".join(content for _, content in req.messages)
        for key, value in self.script.items():
            if key.startswith("contains:") and key[len("contains:"):] in text:
                return key, value
        if "default" in self.script:
            return "default", self.script["default"]
        return None, None

    def send(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls.append(req)
            key, value = self._lookup(req)
            if isinstance(value, list):
                i = self._cursors.get(key, 0)
                self._cursors[key] = i + 1
                value = value[i % len(value)]
        if value is None:
            tail = req.last_user_content()[-40:]
            value = tail
        if isinstance(value, LlmError):
            raise value
        if isinstance(value, type) and issubclass(value, LlmError):
            raise value("scripted failure")
        return ChatResponse(content=value, model_id=req.model_id, usage=(0, 0), latency_ms=0)


class HttpBackend:
    """OpenAI-compatible chat-completion endpoint over HTTP JSON."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg

    def send(self, req: ChatRequest) -> ChatResponse:
        api_key = os.environ.get(self.cfg.api_key_env)
        if not api_key:
            raise AuthError(f"environment variable {self.cfg.api_key_env} is not set")
        payload = {
            "model": req.model_id,
            "messages": [{"role": role, "content": content} for role, content in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        started = time.monotonic()
        try:
            resp = httpx.post(
                self.cfg.endpoint_url,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.cfg.timeout_s,
            )
        except httpx.TimeoutException as e:
            raise RequestTimeout(str(e)) from e
        except httpx.HTTPError as e:
            raise TransportError(str(e)) from e
        latency_ms = int((time.monotonic() - started) * 1000)

        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code == 429:
            raise RateLimited(resp.text[:200])
        if resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise MalformedResponse(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            doc = resp.json()
            content = doc["choices"][0]["message"]["content"]
            usage = doc.get("usage", {})
            prompt_tokens = int(usage.get("prompt_tokens", 0))
            completion_tokens = int(usage.get("completion_tokens", 0))
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise MalformedResponse(f"unexpected response shape: {e}") from e
        if content is None:
            raise MalformedResponse("response carried no message content")
        return ChatResponse(
            content=content,
            model_id=doc.get("model", req.model_id),
            usage=(prompt_tokens, completion_tokens),
            latency_ms=latency_ms,
        )


class JournalWriter:
    """Append-only JSON-lines log of every request/response pair."""

    def __init__(self, path):
        self.path = str(path)
        self._lock = threading.Lock()

    def record(self, req: ChatRequest, response: ChatResponse | None, error: LlmError | None = None) -> str:
        fp = prompt_fingerprint(req)
        entry = {
            "fingerprint": fp,
            "tag": req.request_tag,
            "request": {
                "model_id": req.model_id,
                "messages": [list(m) for m in req.messages],
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
            },
        }
        if response is not None:
            entry["response"] = {
                "content": response.content,
                "model_id": response.model_id,
                "usage": list(response.usage),
                "latency_ms": response.latency_ms,
            }
        if error is not None:
            entry["error"] = {"type": type(error).__name__, "message": str(error)}
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        return fp


class ReplayBackend:
    """Serve recorded responses by prompt fingerprint; no network."""

    def __init__(self, journal_path):
        self.responses: dict[str, ChatResponse] = {}
        with open(journal_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                if "response" not in entry:
                    continue
                r = entry["response"]
                self.responses[entry["fingerprint"]] = ChatResponse(
                    content=r["content"],
                    model_id=r["model_id"],
                    usage=tuple(r.get("usage", (0, 0))),
                    latency_ms=r.get("latency_ms", 0),
                )

    def send(self, req: ChatRequest) -> ChatResponse:
        fp = prompt_fingerprint(req)
        if fp not in self.responses:
            raise TransportError(f"fingerprint {fp} not present in the journal")
        return self.responses[fp]


class RateLimiter:
    """Token bucket capped at requests_per_minute; acquire() blocks."""

    def __init__(self, requests_per_minute: int, clock=time.monotonic, sleep=time.sleep):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self.rate = requests_per_minute / 60.0
        self.capacity = float(requests_per_minute)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def complete(
    req: ChatRequest,
    backend,
    cfg: BackendConfig | None = None,
    *,
    journal: JournalWriter | None = None,
    sleep=time.sleep,
    rng: random.Random | None = None,
) -> ChatResponse:
    """Issue one completion with exponential-backoff retries.

    Retries only RateLimited / RequestTimeout / TransportError, sleeping
    a full-jitter draw from [0, base * 2^attempt] between attempts, at
    most cfg.max_retries retries (so max_retries + 1 attempts total).
    """
    cfg = cfg or BackendConfig()
    rng = rng or random.Random()
    attempt = 0
    while True:
        try:
            response = backend.send(req)
        except RETRYABLE as err:
            if attempt >= cfg.max_retries:
                if journal:
                    journal.record(req, None, error=err)
                raise
            delay_s = (cfg.backoff_base_ms * (2 ** attempt)) / 1000.0
            sleep(rng.uniform(0.0, delay_s))
            attempt += 1
        except LlmError as err:
            if journal:
                journal.record(req, None, error=err)
            raise
        else:
            if journal:
                journal.record(req, response)
            return response


@dataclass
class ChatClient:
    """Shareable client tying a backend to retry policy, journaling and
    rate limiting. Safe for concurrent use."""

    backend: object
    cfg: BackendConfig = field(default_factory=BackendConfig)
    journal: JournalWriter | None = None
    rate_limiter: RateLimiter | None = None
    sleep: object = time.sleep
    rng: random.Random | None = None

    def complete(self, req: ChatRequest) -> ChatResponse:
        if self.rate_limiter is not None:
            self.rate_limiter.acquire()
        return complete(req, self.backend, self.cfg, journal=self.journal, sleep=self.sleep, rng=self.rng)

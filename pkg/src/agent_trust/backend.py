"""Completion backends: live HTTPS, exact-match replay, and scripted answers."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator, Mapping, Protocol

import requests

from .errors import StateError, TrustHarnessError

logger = logging.getLogger(__name__)

API_KEY_ENV = "MI_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/completions"
DEFAULT_MODEL = "text-davinci-003"
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 16
DEFAULT_REQUESTS_PER_MINUTE = 60
DEFAULT_MAX_ATTEMPTS = 5


class BackendError(TrustHarnessError):
    pass


class TransportError(BackendError):
    """The service could not be reached after all retry attempts."""


class RequestError(BackendError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class CredentialError(BackendError):
    pass


class ArchiveMiss(BackendError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no archived completion for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class StorageError(BackendError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    model_name: str
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def fingerprint(self) -> str:
        canonical = json.dumps(
            [self.model_name, self.prompt, float(self.temperature), int(self.max_output_tokens)],
            ensure_ascii=False,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_ms: int
    backend_id: str
    retrieved_at: str | None


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Backend(Protocol):
    backend_id: str

    def complete(self, request: CompletionRequest) -> CompletionResult: ...


# ---------------------------------------------------------------------------
# Replay archive
# ---------------------------------------------------------------------------


class ReplayArchive:
    """Append-only fingerprint -> completion store, optionally file-backed."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise StorageError(f"{self.path}:{lineno}: {exc}") from None
                    self._entries[entry["fingerprint"]] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, fingerprint: str) -> bool:
        return fingerprint in self._entries

    def __iter__(self) -> Iterator[dict]:
        with self._lock:
            return iter(list(self._entries.values()))

    def lookup(self, request: CompletionRequest) -> dict:
        fp = request.fingerprint()
        with self._lock:
            try:
                return self._entries[fp]
            except KeyError:
                raise ArchiveMiss(fp) from None

    def record(self, request: CompletionRequest, result: CompletionResult) -> "ReplayArchive":
        fp = request.fingerprint()
        entry = {
            "fingerprint": fp,
            "model_name": request.model_name,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
            "text": result.text,
            "retrieved_at": result.retrieved_at,
        }
        with self._lock:
            if fp in self._entries:
                raise StateError(f"fingerprint {fp} is already archived")
            if self.path is not None:
                try:
                    with self.path.open("a", encoding="utf-8") as fh:
                        fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
                except OSError as exc:
                    raise StorageError(str(exc)) from exc
            self._entries[fp] = entry
        return self


def record(request: CompletionRequest, result: CompletionResult, archive: ReplayArchive) -> ReplayArchive:
    return archive.record(request, result)


class ReplayBackend:
    backend_id = "replay"

    def __init__(self, archive: ReplayArchive):
        self.archive = archive

    def complete(self, request: CompletionRequest) -> CompletionResult:
        entry = self.archive.lookup(request)
        return CompletionResult(entry["text"], 0, self.backend_id, entry.get("retrieved_at"))


class ScriptedBackend:
    """Answers from a prompt -> text map. Timestamps are left empty so runs are byte-stable."""

    backend_id = "scripted"

    def __init__(self, responses: Mapping[str, str]):
        self.responses = dict(responses)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        try:
            text = self.responses[request.prompt]
        except KeyError:
            raise ArchiveMiss(request.fingerprint()) from None
        return CompletionResult(text, 0, self.backend_id, None)


# ---------------------------------------------------------------------------
# Throttling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatePolicy:
    requests: int
    interval_s: float = 60.0
    burst: int = 1

    def __post_init__(self) -> None:
        if self.requests <= 0 or self.interval_s <= 0 or self.burst < 1:
            raise ValueError("rate policy needs positive requests, interval and burst")

    @property
    def refill_per_s(self) -> float:
        return self.requests / self.interval_s


class TokenBucket:
    """``throttle(now)`` returns 0.0 and consumes a token, or the seconds to wait."""

    def __init__(self, policy: RatePolicy, now: float | None = None):
        self.policy = policy
        self._tokens = float(policy.burst)
        self._stamp = time.monotonic() if now is None else now
        self._lock = threading.Lock()

    def throttle(self, now: float) -> float:
        with self._lock:
            elapsed = max(0.0, now - self._stamp)
            self._tokens = min(float(self.policy.burst), self._tokens + elapsed * self.policy.refill_per_s)
            self._stamp = max(self._stamp, now)
            if self._tokens >= 1.0 - 1e-9:
                self._tokens -= 1.0
                return 0.0
            return (1.0 - self._tokens) / self.policy.refill_per_s

    @property
    def tokens(self) -> float:
        with self._lock:
            return self._tokens


def throttle(bucket: TokenBucket, now: float) -> float:
    return bucket.throttle(now)


# ---------------------------------------------------------------------------
# Live HTTP client
# ---------------------------------------------------------------------------


class LiveBackend:
    backend_id = "live"

    def __init__(
        self,
        endpoint_url: str = DEFAULT_ENDPOINT,
        *,
        requests_per_minute: float = DEFAULT_REQUESTS_PER_MINUTE,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base_s: float = 1.0,
        backoff_cap_s: float = 30.0,
        timeout_s: float = 60.0,
        archive: ReplayArchive | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        rng: random.Random | None = None,
    ):
        api_key = os.environ.get(API_KEY_ENV)
        if not api_key:
            raise CredentialError(f"set {API_KEY_ENV} to use the live backend")
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint_url = endpoint_url
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self.timeout_s = timeout_s
        self.archive = archive
        self._session = session or requests.Session()
        self._headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        self._sleep = sleep
        self._clock = clock
        self._rng = rng or random.Random()
        self.bucket = TokenBucket(RatePolicy(max(1, round(requests_per_minute)), 60.0), now=clock())
        self.last_attempts = 0

    def _wait_for_slot(self) -> None:
        while (wait := self.bucket.throttle(self._clock())) > 0:
            self._sleep(wait)

    def _backoff(self, attempt: int) -> float:
        # Full jitter over an exponentially growing, capped window.
        return self._rng.uniform(0, min(self.backoff_cap_s, self.backoff_base_s * 2 ** (attempt - 1)))

    def complete(self, request: CompletionRequest) -> CompletionResult:
        body = {
            "model": request.model_name,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            self.last_attempts = attempt
            self._wait_for_slot()
            started = time.perf_counter()
            try:
                resp = self._session.post(
                    self.endpoint_url, json=body, headers=self._headers, timeout=self.timeout_s
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                logger.warning("attempt %d/%d failed: %s", attempt, self.max_attempts, exc)
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = RequestError(resp.status_code, resp.text)
                    logger.warning("attempt %d/%d got HTTP %d", attempt, self.max_attempts, resp.status_code)
                elif resp.status_code >= 400:
                    raise RequestError(resp.status_code, resp.text)
                else:
                    latency = int((time.perf_counter() - started) * 1000)
                    try:
                        text = resp.json()["choices"][0]["text"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise BackendError(f"unexpected response body: {resp.text[:200]}") from exc
                    logger.info("completed in %d attempt(s)", attempt)
                    result = CompletionResult(text, latency, self.backend_id, utc_now())
                    if self.archive is not None:
                        self.archive.record(request, result)
                    return result
            if attempt < self.max_attempts:
                self._sleep(self._backoff(attempt))
        raise TransportError(f"gave up after {self.max_attempts} attempts: {last_error}")

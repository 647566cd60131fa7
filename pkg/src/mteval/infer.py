"""HTTP client for an external completion endpoint, with a model fallback chain.

Wire format: POST ``{"model", "prompt", "max_tokens"}`` to the base URL and
read ``{"text"}`` back.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from .errors import DataError, TransportError
from .prompts import PromptRecord, load_config

logger = logging.getLogger(__name__)


class Timeout(TransportError):
    pass


class HttpError(TransportError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ExhaustedRetries(TransportError):
    def __init__(self, message: str, last_error: Exception | None = None):
        super().__init__(message)
        self.last_error = last_error


class AllEndpointsFailed(TransportError):
    def __init__(self, message: str, attempts: list[tuple[str, str | None, str | None]]):
        super().__init__(message)
        # (model_id, raw response or None, error message or None)
        self.attempts = attempts


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_id: str
    auth_env: str | None = None
    timeout: float = 60.0
    max_in_flight: int = 4
    retries: int = 2
    backoff: float = 0.5
    max_tokens: int = 2048

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    def headers(self) -> dict[str, str]:
        if not self.auth_env:
            return {}
        token = os.environ.get(self.auth_env)
        if token is None:
            raise TransportError(f"environment variable {self.auth_env} is not set")
        return {"Authorization": f"Bearer {token}"}


@dataclass(frozen=True)
class FallbackChain:
    endpoints: tuple[EndpointConfig, ...]

    def __post_init__(self):
        if not self.endpoints:
            raise ValueError("fallback chain is empty")
        ids = [e.model_id for e in self.endpoints]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate model ids in fallback chain: {ids}")

    @classmethod
    def from_file(cls, path: str | Path) -> FallbackChain:
        """Read ``[[endpoint]]`` tables (TOML) or an ``endpoint`` list (JSON)."""
        data = load_config(path)
        entries = data.get("endpoint") or data.get("endpoints") or []
        return cls(tuple(EndpointConfig(**e) for e in entries))


def _should_retry(status: int) -> bool:
    return status >= 500 or status == 429


class Client:
    """Completion client. ``transport`` is passed through to httpx (tests use a mock)."""

    def __init__(self, transport: httpx.BaseTransport | None = None, sleep: Callable[[float], None] = time.sleep):
        self._http = httpx.Client(transport=transport)
        self._sleep = sleep
        self._limits: dict[str, threading.Semaphore] = {}
        self._lock = threading.Lock()

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _slot(self, cfg: EndpointConfig) -> threading.Semaphore:
        with self._lock:
            if cfg.model_id not in self._limits:
                self._limits[cfg.model_id] = threading.BoundedSemaphore(cfg.max_in_flight)
            return self._limits[cfg.model_id]

    def _once(self, prompt: str, cfg: EndpointConfig) -> str:
        payload = {"model": cfg.model_id, "prompt": prompt, "max_tokens": cfg.max_tokens}
        try:
            with self._slot(cfg):
                resp = self._http.post(cfg.base_url, json=payload, headers=cfg.headers(), timeout=cfg.timeout)
        except httpx.TimeoutException as e:
            raise Timeout(f"{cfg.model_id}: request timed out ({e})") from None
        except httpx.TransportError as e:
            raise TransportError(f"{cfg.model_id}: {e}") from None
        if resp.status_code != 200:
            raise HttpError(f"{cfg.model_id}: HTTP {resp.status_code}", resp.status_code)
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError, TypeError):
            raise HttpError(f"{cfg.model_id}: response body lacks a 'text' field", resp.status_code) from None
        if not isinstance(text, str):
            raise HttpError(f"{cfg.model_id}: 'text' is not a string", resp.status_code)
        return text

    def complete(self, prompt: PromptRecord | str, cfg: EndpointConfig) -> str:
        """Send one prompt; retry transient failures with exponential backoff."""
        text = prompt.text if isinstance(prompt, PromptRecord) else prompt
        last: Exception | None = None
        for attempt in range(cfg.retries + 1):
            if attempt:
                self._sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                return self._once(text, cfg)
            except HttpError as e:
                if e.status is not None and not _should_retry(e.status):
                    raise
                last = e
            except TransportError as e:
                last = e
            logger.info("attempt %d/%d on %s failed: %s", attempt + 1, cfg.retries + 1, cfg.model_id, last)
        raise ExhaustedRetries(f"{cfg.model_id}: giving up after {cfg.retries + 1} attempts: {last}", last)

    def complete_with_fallback(
        self,
        prompt: PromptRecord | str,
        chain: FallbackChain,
        validator: Callable[[str], Any],
        resamples: int = 0,
    ) -> tuple[str, str]:
        """First response that passes ``validator``, and the model that produced it.

        ``validator`` may return False or raise to reject a response. With
        ``resamples > 0`` a model is asked again that many times before the
        next model is tried.
        """
        attempts: list[tuple[str, str | None, str | None]] = []
        for cfg in chain.endpoints:
            for _ in range(resamples + 1):
                try:
                    raw = self.complete(prompt, cfg)
                except TransportError as e:
                    attempts.append((cfg.model_id, None, str(e)))
                    break
                try:
                    ok = validator(raw) is not False
                    err = None if ok else "rejected by validator"
                except (DataError, ValueError) as e:
                    ok, err = False, str(e)
                if ok:
                    return raw, cfg.model_id
                attempts.append((cfg.model_id, raw, err))
                logger.info("response from %s failed validation: %s", cfg.model_id, err)
        raise AllEndpointsFailed(f"all {len(chain.endpoints)} endpoint(s) failed", attempts)

    def run_batch(
        self,
        prompts: Sequence[PromptRecord],
        chain: FallbackChain,
        validator: Callable[[str], Any],
        resamples: int = 0,
    ) -> list[tuple[str, str] | AllEndpointsFailed]:
        """Complete many prompts concurrently; results come back in input order."""
        workers = max(e.max_in_flight for e in chain.endpoints)

        def job(p):
            try:
                return self.complete_with_fallback(p, chain, validator, resamples)
            except AllEndpointsFailed as e:
                return e

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, prompts))


def validate_score(text: str) -> float:
    """Validator for the score task: the completion must be a number."""
    return float(text.strip())

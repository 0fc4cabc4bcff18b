"""Small JSON-over-HTTP client shared by the remote planner and remote critic."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import httpx

log = logging.getLogger(__name__)


class RemoteError(Exception):
    """Raised when an endpoint stays unreachable after all retries."""


@dataclass(frozen=True)
class RemoteConfig:
    timeout_s: float = 30.0
    retries: int = 2
    backoff_s: float = 0.5
    max_in_flight: int = 4

    @classmethod
    def load(cls, path: str | Path | None) -> "RemoteConfig":
        if path is None:
            return cls()
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {k: raw[k] for k in ("timeout_s", "retries", "backoff_s", "max_in_flight") if k in raw}
        return cls(**known)


def endpoint_from_env(url_var: str, token_var: str) -> tuple[str, Optional[str]]:
    url = os.environ.get(url_var)
    if not url:
        raise RemoteError(f"{url_var} is not set")
    return url, os.environ.get(token_var)


class JsonClient:
    """POSTs JSON with a timeout, bounded retries and a cap on concurrent requests."""

    def __init__(self, url: str, token: str | None = None, config: RemoteConfig | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.url = url
        self.config = config or RemoteConfig()
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=self.config.timeout_s, headers=headers, transport=transport)
        self._slots = threading.BoundedSemaphore(self.config.max_in_flight)

    def post(self, payload: Mapping[str, Any]) -> Any:
        last: Exception | None = None
        for attempt in range(self.config.retries + 1):
            try:
                with self._slots:
                    resp = self._client.post(self.url, json=payload)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise httpx.HTTPStatusError(f"server returned {resp.status_code}", request=resp.request,
                                                response=resp)
                resp.raise_for_status()
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError, ValueError) as exc:
                last = exc
                retryable = not isinstance(exc, httpx.HTTPStatusError) or exc.response.status_code >= 500 \
                    or exc.response.status_code == 429
                log.warning("POST %s failed (attempt %d): %s", self.url, attempt + 1, exc)
                if not retryable:
                    break
                if attempt < self.config.retries and self.config.backoff_s > 0:
                    time.sleep(self.config.backoff_s * (2 ** attempt))
        raise RemoteError(f"{self.url} unavailable: {last}")

    def close(self) -> None:
        self._client.close()

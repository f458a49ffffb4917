"""Minimal client for OpenAI-compatible chat-completion endpoints."""

from __future__ import annotations

import logging
import os
import time

import requests

log = logging.getLogger(__name__)

API_KEY_ENV = "POLARPIPE_API_KEY"
TRANSIENT_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class RemoteUnavailable(RuntimeError):
    """The endpoint could not be reached or kept failing."""


class ChatClient:
    """POST ``{endpoint}/chat/completions`` with a system and a user message.

    Transient failures (connection errors, timeouts, 429 and 5xx) are
    retried with exponential backoff; ``max_retries`` counts the extra
    attempts after the first.
    """

    def __init__(self, endpoint: str, model: str, *, api_key: str | None = None,
                 timeout: float = 30.0, max_retries: int = 3, temperature: float | None = 0.0,
                 backoff: float = 0.5, session: requests.Session | None = None):
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_retries = max_retries
        self.temperature = temperature
        self.backoff = backoff
        self.session = session or requests.Session()

    def payload(self, system: str, user: str) -> dict:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        if self.temperature is not None:
            body["temperature"] = self.temperature
        return body

    def complete(self, system: str, user: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = self.payload(system, user)
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.url, json=body, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.debug("attempt %d failed: %s", attempt + 1, last_error)
                continue
            if resp.status_code in TRANSIENT_STATUS:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise RemoteUnavailable(f"{self.url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise RemoteUnavailable(f"{self.url} returned an unexpected body: {resp.text[:200]}") from None
        raise RemoteUnavailable(f"{self.url} failed after {self.max_retries + 1} attempts ({last_error})")

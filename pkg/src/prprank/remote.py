"""
Generic completion endpoint client used by the remote comparator.

Every request asks for exactly one token at temperature zero. Transport
failures (connection errors, timeouts, 5xx responses) are retried a bounded
number of times; a response that parses but is not a valid label is never
retried.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import httpx

from prprank.base import ComparatorError, ComparatorTimeoutError, ComparatorTransportError
from prprank.utils import get_path, setup_logger

_logger = setup_logger(__name__)

ENDPOINT_ENV = "PRPRANK_ENDPOINT"
API_KEY_ENV = "PRPRANK_API_KEY"


@dataclass
class RemoteConfig:
    """Settings for the HTTP completion adapter."""

    endpoint: str = field(
        default="http://localhost:8000/v1/completions",
        metadata={"description": "Completion endpoint URL (overridable via PRPRANK_ENDPOINT)"},
    )
    headers: Dict[str, str] = field(
        default_factory=dict,
        metadata={"description": "Extra request headers (PRPRANK_API_KEY adds a bearer token)"},
    )
    response_field: str = field(
        default="choices.0.text",
        metadata={"description": "Dotted path to the generated text in the response JSON"},
    )
    usage_field: Optional[str] = field(
        default="usage.completion_tokens",
        metadata={"description": "Dotted path to the output token count, if the backend reports it"},
    )
    timeout_s: float = field(
        default=30.0, metadata={"description": "Per-request timeout in seconds"}
    )
    max_retries: int = field(
        default=2, metadata={"description": "Retries for transport errors only"}
    )
    max_tokens: int = field(
        default=1, metadata={"description": "Generated tokens per comparison"}
    )
    model_name: Optional[str] = field(
        default=None,
        metadata={"description": "Backend model name, sent as 'model' and reported as metadata"},
    )
    precision: Optional[str] = field(
        default=None,
        metadata={"description": "Opaque precision flag such as bfloat16, reported only"},
    )

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def with_env_overrides(self, environ: Optional[Dict[str, str]] = None) -> "RemoteConfig":
        environ = os.environ if environ is None else environ
        endpoint = environ.get(ENDPOINT_ENV) or self.endpoint
        headers = dict(self.headers)
        if environ.get(API_KEY_ENV):
            headers["Authorization"] = f"Bearer {environ[API_KEY_ENV]}"
        return RemoteConfig(**{**self.__dict__, "endpoint": endpoint, "headers": headers})


@dataclass(frozen=True)
class Completion:
    text: str
    output_tokens: int
    latency_seconds: float
    attempts: int = 1


class CompletionClient:
    """Thread-safe client for a single-token completion endpoint."""

    def __init__(
        self,
        config: RemoteConfig,
        *,
        client: Optional[httpx.Client] = None,
        logger: Optional[logging.Logger] = _logger,
    ):
        self.config = config
        self.logger = logger
        self._owns_client = client is None
        self._client = client or httpx.Client(timeout=config.timeout_s)

    def close(self) -> None:
        if self._owns_client:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def build_payload(self, prompt: str) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
            "temperature": 0.0,
        }
        if self.config.model_name:
            payload["model"] = self.config.model_name
        return payload

    def complete(self, prompt: str) -> Completion:
        """Send one prompt and return the generated text."""
        payload = self.build_payload(prompt)
        attempts = 1 + self.config.max_retries
        last_error: Optional[Exception] = None
        for attempt in range(1, attempts + 1):
            start = time.perf_counter()
            try:
                response = self._client.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self.config.headers,
                    timeout=self.config.timeout_s,
                )
                if response.status_code >= 500:
                    raise httpx.HTTPStatusError(
                        f"server error {response.status_code}",
                        request=response.request,
                        response=response,
                    )
            except (httpx.TransportError, httpx.HTTPStatusError) as e:
                last_error = e
                self.logger.debug(f"Attempt {attempt}/{attempts} against {self.config.endpoint} failed: {e}")
                continue
            latency = time.perf_counter() - start

            if response.status_code >= 400:
                raise ComparatorError(
                    f"backend rejected request with status {response.status_code}: {response.text[:200]}"
                )
            return self._parse(response, latency, attempt)

        message = f"backend unreachable after {attempts} attempts: {last_error}"
        if isinstance(last_error, httpx.TimeoutException):
            raise ComparatorTimeoutError(message, attempts) from last_error
        raise ComparatorTransportError(message, attempts) from last_error

    def _parse(self, response: httpx.Response, latency: float, attempt: int) -> Completion:
        try:
            body = response.json()
        except ValueError as e:
            raise ComparatorError(f"backend returned non-JSON body: {response.text[:200]}") from e
        try:
            text = get_path(body, self.config.response_field)
        except KeyError as e:
            raise ComparatorError(
                f"response has no field {self.config.response_field!r}"
            ) from e
        output_tokens = 1
        if self.config.usage_field:
            try:
                output_tokens = int(get_path(body, self.config.usage_field))
            except (KeyError, TypeError, ValueError):
                output_tokens = 1
        return Completion(
            text=str(text),
            output_tokens=max(1, output_tokens),
            latency_seconds=latency,
            attempts=attempt,
        )

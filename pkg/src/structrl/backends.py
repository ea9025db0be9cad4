"""Generation backends: a file-driven deterministic mock and an HTTP client.

The mock resolves responses from a fixture directory keyed by a digest of
(seed, prompt), falling back to substring rules, so scripted rollouts are
hand-writable and reproducible byte-for-byte. The HTTP backend speaks a
plain completions-style JSON contract.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import requests

from .errors import BackendError
from .grpo import TokenLogProbs


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 1.0
    max_tokens: int = 1024
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Generation:
    text: str
    logprobs: TokenLogProbs | None


class GenerationBackend(Protocol):
    def generate(self, prompt: str, sampling: SamplingParams) -> Generation: ...


def prompt_digest(prompt: str, seed: int) -> str:
    """Fixture key: sha256 over the seed line followed by the prompt bytes."""
    h = hashlib.sha256()
    h.update(f"{seed}\n".encode("utf-8"))
    h.update(prompt.encode("utf-8"))
    return h.hexdigest()


def _synthetic_logprobs(digest: str, text: str) -> TokenLogProbs:
    """Deterministic per-token log-prob triple derived from the fixture key."""
    n = max(1, len(text.split()))
    rng = np.random.default_rng(int(digest[:16], 16))
    policy = -rng.uniform(0.05, 2.0, n)
    reference = np.minimum(policy + rng.normal(0.0, 0.05, n), -1e-6)
    behavior = np.minimum(policy + rng.normal(0.0, 0.02, n), -1e-6)
    return TokenLogProbs(
        policy=tuple(float(x) for x in policy),
        reference=tuple(float(x) for x in reference),
        behavior=tuple(float(x) for x in behavior),
    )


class MockBackend:
    """Deterministic backend reading responses from a fixture directory.

    Resolution order for a call with digest d = prompt_digest(prompt, seed):
      1. ``<fixtures>/<d>.txt`` verbatim;
      2. first entry of ``<fixtures>/rules.json`` (a JSON array of
         ``{"contains": ..., "response": ...}``) whose substring appears in
         the prompt;
      3. BackendError.
    Log-probs are synthesized deterministically from the digest.
    """

    def __init__(self, fixtures_dir: str | Path) -> None:
        self.fixtures_dir = Path(fixtures_dir)
        self._rules: list[dict] | None = None

    def _load_rules(self) -> list[dict]:
        if self._rules is None:
            rules_path = self.fixtures_dir / "rules.json"
            if rules_path.exists():
                self._rules = json.loads(rules_path.read_text("utf-8"))
            else:
                self._rules = []
        return self._rules

    def generate(self, prompt: str, sampling: SamplingParams) -> Generation:
        digest = prompt_digest(prompt, sampling.seed)
        fixture = self.fixtures_dir / f"{digest}.txt"
        if fixture.exists():
            text = fixture.read_text("utf-8")
        else:
            for rule in self._load_rules():
                if rule["contains"] in prompt:
                    text = rule["response"]
                    break
            else:
                raise BackendError(
                    f"no fixture {digest}.txt and no matching rule in {self.fixtures_dir}"
                )
        return Generation(text, _synthetic_logprobs(digest, text))


ENDPOINT_ENV = "STRUCTRL_ENDPOINT"
TOKEN_ENV = "STRUCTRL_API_TOKEN"


class HTTPBackend:
    """Completions-style HTTP client.

    POSTs ``{model, prompt, temperature, max_tokens, n, logprobs, seed}`` to
    the endpoint and reads ``choices[0]``: ``text`` (or ``message.content``)
    plus optional ``logprobs.token_logprobs``. The service reports one
    log-prob vector; it stands in for all three policy roles, which makes
    ratios 1 and KL 0 until a trainer supplies real per-policy scores.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str = "default",
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ) -> None:
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise BackendError(f"no endpoint given and {ENDPOINT_ENV} is unset")
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def generate(self, prompt: str, sampling: SamplingParams) -> Generation:
        body = {
            "model": self.model,
            "prompt": prompt,
            "temperature": sampling.temperature,
            "max_tokens": sampling.max_tokens,
            "n": 1,
            "logprobs": True,
            "seed": sampling.seed,
        }
        try:
            resp = self.session.post(
                self.endpoint, json=body, headers=self._headers(), timeout=self.timeout
            )
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:
            raise BackendError(f"generation request failed: {exc}") from exc
        except ValueError as exc:
            raise BackendError(f"non-JSON response from {self.endpoint}") from exc
        try:
            choice = payload["choices"][0]
            text = choice["text"] if "text" in choice else choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response shape: {payload!r:.200}") from exc
        logprobs = None
        token_lps = (choice.get("logprobs") or {}).get("token_logprobs")
        if token_lps:
            vec = tuple(float(x) for x in token_lps)
            logprobs = TokenLogProbs(policy=vec, reference=vec, behavior=vec)
        return Generation(text, logprobs)


def make_backend(
    kind: str,
    fixtures: str | Path | None = None,
    endpoint: str | None = None,
    model: str = "default",
) -> GenerationBackend:
    if kind == "mock":
        if fixtures is None:
            raise BackendError("mock backend needs a fixtures directory")
        return MockBackend(fixtures)
    if kind == "http":
        return HTTPBackend(endpoint=endpoint, model=model)
    raise BackendError(f"unknown backend kind {kind!r}")

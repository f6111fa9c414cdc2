"""Uniform access to language-model services, plus deterministic mocks.

Three operations cover everything the search needs: sampled completion,
token-logprob scoring, and sentence embedding.  Real services speak
OpenAI-compatible HTTP; the ``mock://`` scheme selects an offline
backend that is a pure function of (seed, input), which keeps the full
pipeline reproducible bit-for-bit without network access.

Logprobs cross this boundary in natural log exactly as the wire carries
them; conversion to bits happens downstream in the value model.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import time
from dataclasses import dataclass
from typing import Optional, Sequence
from urllib.parse import parse_qs, urlparse

import requests

LN2 = math.log(2.0)

ROLES = ("policy_base", "policy_trained", "simulator", "scorer", "embedder", "judge")
GENERATION_ROLES = ("policy_base", "policy_trained", "simulator", "judge")

# Role-specific sampling defaults, applied when temperature is omitted.
DEFAULT_TEMPERATURES = {
    "policy_base": 0.7,
    "policy_trained": 0.7,
    "simulator": 0.0,
    "scorer": 0.0,
    "embedder": 0.0,
    "judge": 0.0,
}

# Base delay for exponential backoff between retries; tests shrink this.
BACKOFF_BASE_SECONDS = 0.5


class BackendError(Exception):
    """Base class for gateway failures."""


class TransportError(BackendError):
    """Request could not be completed after all retry attempts."""


class CapabilityError(BackendError):
    """The backend lacks a required feature (e.g. logprob support)."""


class MalformedResponseError(BackendError):
    """The backend answered, but not in the expected shape."""


@dataclass(frozen=True)
class BackendConfig:
    """Where and how to reach one model role.

    ``api_key_env`` names the environment variable holding the bearer
    token; the key itself never appears in config files.
    """

    endpoint: str
    model: str
    role: str
    temperature: Optional[float] = None
    max_tokens: int = 512
    timeout: float = 60.0
    retries: int = 3
    api_key_env: str = "PLOTSEARCH_API_KEY"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.temperature is None:
            object.__setattr__(self, "temperature", DEFAULT_TEMPERATURES[self.role])
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.role == "simulator" and self.temperature != 0.0:
            raise ValueError("simulator role requires temperature 0.0")
        if self.retries < 1:
            raise ValueError("retries must be at least 1")


@dataclass(frozen=True)
class TokenLogprob:
    token: str
    logprob: float  # natural log, always <= 0

    def __post_init__(self):
        if self.logprob > 0:
            raise ValueError(f"logprob must be <= 0, got {self.logprob}")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple

    @property
    def dimension(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# HTTP adapter (OpenAI-compatible)


class HttpBackend:
    """OpenAI-compatible client for one configured role.

    Completion uses ``/chat/completions``; token scoring uses the legacy
    ``/completions`` echo+logprobs form, the common way local servers
    expose logprobs of a *given* text; embeddings use ``/embeddings``.
    Failed requests retry with exponential backoff.
    """

    def __init__(self, cfg: BackendConfig, session: Optional[requests.Session] = None):
        self.cfg = cfg
        self.session = session or requests.Session()

    # -- plumbing --

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, body: dict) -> dict:
        url = self.cfg.endpoint.rstrip("/") + path
        last_error = None
        for attempt in range(self.cfg.retries):
            if attempt > 0:
                time.sleep(BACKOFF_BASE_SECONDS * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(
                    url, json=body, headers=self._headers(), timeout=self.cfg.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_error = BackendError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponseError(f"non-JSON response from {url}") from exc
        raise TransportError(
            f"{url} unreachable after {self.cfg.retries} attempts: {last_error}"
        )

    # -- operations --

    def complete(self, prompt: str, n: int = 1) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.cfg.role not in GENERATION_ROLES:
            raise ValueError(f"role {self.cfg.role!r} is not a generation role")
        body = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
            "n": n,
        }
        doc = self._post("/chat/completions", body)
        try:
            texts = [c["message"]["content"] for c in doc["choices"]]
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError("chat completion missing choices") from exc
        if len(texts) != n:
            raise MalformedResponseError(f"asked for {n} choices, got {len(texts)}")
        return texts

    def score_tokens(self, text: str) -> list[TokenLogprob]:
        if self.cfg.role != "scorer":
            raise ValueError("score_tokens requires the scorer role")
        if not text:
            raise ValueError("empty text")
        body = {
            "model": self.cfg.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        doc = self._post("/completions", body)
        try:
            lp = doc["choices"][0]["logprobs"]
            tokens, logprobs = lp["tokens"], lp["token_logprobs"]
        except (KeyError, TypeError, IndexError) as exc:
            raise CapabilityError("backend did not return logprobs") from exc
        out = []
        for token, logprob in zip(tokens, logprobs):
            # Some backends report no conditional probability for the very
            # first token; record it as 0.0 (probability one).
            out.append(TokenLogprob(token=token, logprob=min(logprob or 0.0, 0.0)))
        return out

    def embed(self, sentences: Sequence[str]) -> list[EmbeddingVector]:
        if self.cfg.role != "embedder":
            raise ValueError("embed requires the embedder role")
        if not sentences:
            raise ValueError("sentence list must be non-empty")
        doc = self._post("/embeddings", {"model": self.cfg.model, "input": list(sentences)})
        try:
            vectors = [EmbeddingVector(tuple(d["embedding"])) for d in doc["data"]]
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError("embedding response missing data") from exc
        if len(vectors) != len(sentences):
            raise MalformedResponseError("embedding count mismatch")
        dims = {v.dimension for v in vectors}
        if len(dims) != 1:
            raise MalformedResponseError(f"mixed embedding dimensions {sorted(dims)}")
        return vectors


# ---------------------------------------------------------------------------
# Deterministic mock


def _hash_u64(*parts) -> int:
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(joined.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _unit(*parts) -> float:
    """Deterministic uniform draw in [0, 1) from the hashed parts."""
    return _hash_u64(*parts) / 2.0**64


_SUBJECTS = (
    "the drifting archivist", "a rival cartographer", "the lighthouse keeper",
    "an exiled composer", "the tide-reader", "a counterfeit saint",
    "the night ferry crew", "an unlicensed historian",
)
_MOVES = (
    "uncovers a sealed ledger", "breaks a long-kept promise", "forges an uneasy alliance",
    "loses the only map", "intercepts a coded warning", "stages a public confession",
    "abandons the safehouse", "bargains with an old enemy",
)
_TWISTS = (
    "which rewrites the town's founding story", "just as the storm season turns",
    "while the harbor watch closes in", "at the cost of a friendship",
    "revealing the patron's true name", "and the debt comes due early",
    "though the witness saw everything", "before the archive burns",
)

# Mock token normalization: trailing whitespace is dropped on reconstruction.
MOCK_TOKEN_NORMALIZATION = "rstrip"


def mock_tokenize(text: str) -> list[str]:
    """Whitespace-attached word tokens; joining them right-strips the input."""
    return re.findall(r"\s*\S+", text)


class MockBackend:
    """Offline stand-in selected by ``mock://`` endpoints.

    The endpoint query string configures it, e.g.
    ``mock://scorer?seed=7&p=0.25``.  Every output is a pure function of
    (seed, input), so repeated calls are bit-identical.

    Scorer modes: with ``p=<float>`` every token gets logprob ln(p); with
    a ``token_table`` passed at construction, tokens are looked up there;
    otherwise each line of the text draws a persistent surprisal register
    from its own hash and the story scores around the mean of those draws,
    plus bounded per-token jitter.  Stories sharing a prefix therefore
    score similarly but never identically, which gives tree branches a
    heritable, reproducible quality gradient.

    Judge mode emits a nine-dimension rating JSON after a prose preamble;
    ``malform_mod=<k>`` makes the hash-selected 1/k of prompts come back
    without JSON, for exercising the caller's retry/skip path.
    """

    def __init__(self, cfg: BackendConfig, token_table: Optional[dict] = None):
        self.cfg = cfg
        parsed = urlparse(cfg.endpoint)
        if parsed.scheme != "mock":
            raise ValueError(f"MockBackend needs a mock:// endpoint, got {cfg.endpoint!r}")
        params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        self.seed = int(params.get("seed", "0"))
        self.constant_p = float(params["p"]) if "p" in params else None
        self.dim = int(params.get("dim", "64"))
        self.malform_mod = int(params.get("malform_mod", "0"))
        self.token_table = dict(token_table) if token_table else None

    # -- operations --

    def complete(self, prompt: str, n: int = 1) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.cfg.role not in GENERATION_ROLES:
            raise ValueError(f"role {self.cfg.role!r} is not a generation role")
        role = self.cfg.role
        if role == "simulator":
            return [self._simulate(prompt) for _ in range(n)]
        if role == "judge":
            return [self._judge(prompt) for _ in range(n)]
        # Policy roles: temperature 0 pins every sample to the same draw.
        indices = [0] * n if self.cfg.temperature == 0.0 else range(n)
        return [self._action(prompt, i) for i in indices]

    def _action(self, prompt: str, index: int) -> str:
        h = _hash_u64(self.seed, self.cfg.role, "action", prompt, index)
        subject = _SUBJECTS[h % len(_SUBJECTS)]
        move = _MOVES[(h >> 8) % len(_MOVES)]
        twist = _TWISTS[(h >> 16) % len(_TWISTS)]
        return f"Next, {subject} {move}, {twist}."

    def _simulate(self, prompt: str) -> str:
        match = re.search(r"exactly (\d+)", prompt)
        count = int(match.group(1)) if match else 4
        lines = []
        for i in range(count):
            h = _hash_u64(self.seed, "bullet", prompt, i)
            subject = _SUBJECTS[h % len(_SUBJECTS)]
            move = _MOVES[(h >> 8) % len(_MOVES)]
            lines.append(f"- {subject.capitalize()} {move}.")
        return "\n".join(lines)

    def _judge(self, prompt: str) -> str:
        from .rubric import RUBRIC_DIMENSIONS

        h = _hash_u64(self.seed, "judge", prompt)
        if self.malform_mod and h % self.malform_mod == 0:
            return "The story resists numerical summary; I decline to rate it."
        scores = {
            dim: 1 + (_hash_u64(self.seed, "judge", prompt, dim) % 10)
            for dim in RUBRIC_DIMENSIONS
        }
        return "Considering the outline as a whole:\n" + json.dumps(scores, sort_keys=True)

    def score_tokens(self, text: str) -> list[TokenLogprob]:
        if self.cfg.role != "scorer":
            raise ValueError("score_tokens requires the scorer role")
        if not text:
            raise ValueError("empty text")
        tokens = mock_tokenize(text)
        if self.constant_p is not None:
            logprob = math.log(self.constant_p)
            return [TokenLogprob(t, logprob) for t in tokens]
        if self.token_table is not None:
            return [TokenLogprob(t, self.token_table[t]) for t in tokens]
        # Register mode: each line contributes a hash draw and the story's
        # surprisal center in [2.5, 7.5] bits is their mean, so siblings
        # differing in one line land near, but not on, each other; tokens
        # jitter around the center by up to +/-1.5 bits.
        lines = text.splitlines() or [text]
        draws = [_unit(self.seed, "register", line) for line in lines]
        center = 2.5 + 5.0 * (sum(draws) / len(draws))
        out = []
        for i, token in enumerate(tokens):
            jitter = 3.0 * _unit(self.seed, "tok", token, i) - 1.5
            surprisal_bits = max(center + jitter, 0.05)
            out.append(TokenLogprob(token, -surprisal_bits * LN2))
        return out

    def embed(self, sentences: Sequence[str]) -> list[EmbeddingVector]:
        if self.cfg.role != "embedder":
            raise ValueError("embed requires the embedder role")
        if not sentences:
            raise ValueError("sentence list must be non-empty")
        out = []
        for sentence in sentences:
            raw = [2.0 * _unit(self.seed, "emb", sentence, i) - 1.0 for i in range(self.dim)]
            norm = sum(x * x for x in raw) ** 0.5
            out.append(EmbeddingVector(tuple(x / norm for x in raw)))
        return out


# ---------------------------------------------------------------------------
# Factory, spec-shaped operations, configuration file


def make_backend(cfg: BackendConfig, **kwargs):
    """Build the right client for a config: mock:// or HTTP."""
    if urlparse(cfg.endpoint).scheme == "mock":
        return MockBackend(cfg, **kwargs)
    return HttpBackend(cfg, **kwargs)


def complete(cfg: BackendConfig, prompt: str, n: int = 1) -> list[str]:
    return make_backend(cfg).complete(prompt, n)


def score_tokens(cfg: BackendConfig, text: str) -> list[TokenLogprob]:
    return make_backend(cfg).score_tokens(text)


def embed(cfg: BackendConfig, sentences: Sequence[str]) -> list[EmbeddingVector]:
    return make_backend(cfg).embed(sentences)


def load_backend_configs(path: str) -> dict[str, BackendConfig]:
    """Read a JSON config file mapping roles to backend settings.

    Shape: ``{"backends": {"<role>": {"endpoint": ..., "model": ...,
    "temperature"?, "max_tokens"?, "timeout"?, "retries"?,
    "api_key_env"?}}}``.  Roles absent from the file are simply absent
    from the result; callers decide which roles they require.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    backends = {}
    for role, raw in doc.get("backends", {}).items():
        backends[role] = BackendConfig(role=role, **raw)
    return backends


def mock_suite(seed: int = 0) -> dict[str, BackendConfig]:
    """A full set of mock backend configs sharing one seed."""
    return {
        role: BackendConfig(
            endpoint=f"mock://{role}?seed={seed}", model=f"mock-{role}", role=role
        )
        for role in ROLES
    }

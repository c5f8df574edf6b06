"""Operating-context text pipeline.

Raw context (timestamp, weather, terrain, load) is bucketed into a handful of
categorical levels, rendered into a fixed English prompt and embedded with a
pluggable text encoder.  The default encoder is a feature-hashing bag of
tokens, so nothing has to be downloaded; ``HttpEmbedder`` talks to an external
encoder service instead.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Protocol

import numpy as np

log = logging.getLogger(__name__)

TERRAINS = ("plain", "plateau", "coastal", "mountain", "unknown")
LOAD_LEVELS = ("low", "moderate", "high")
_HIGHLAND = {"plateau", "mountain"}
_LOWLAND = {"plain", "coastal"}


class ValidationError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class TransportError(RuntimeError):
    def __init__(self, message: str, retries_exhausted: bool = False):
        super().__init__(message)
        self.retries_exhausted = retries_exhausted


@dataclass(frozen=True)
class ContextRecord:
    timestamp_utc: datetime
    ambient_temp_c: Optional[float] = None
    humidity_pct: Optional[float] = None
    terrain: Optional[str] = None
    airport_elevation_m: Optional[float] = None
    is_holiday: Optional[bool] = None
    load_level: Optional[str] = None

    def __post_init__(self):
        if self.humidity_pct is not None and not 0.0 <= self.humidity_pct <= 100.0:
            raise ValidationError(f"humidity_pct out of [0, 100]: {self.humidity_pct}")
        if self.terrain is not None and self.terrain not in TERRAINS:
            raise ValidationError(f"unknown terrain label {self.terrain!r}")
        if self.load_level is not None and self.load_level not in LOAD_LEVELS:
            raise ValidationError(f"unknown load level {self.load_level!r}")


@dataclass(frozen=True)
class DiscretizationRules:
    temp_low_c: float = 10.0
    temp_high_c: float = 28.0
    humidity_low_pct: float = 30.0
    humidity_high_pct: float = 70.0
    highland_cutoff_m: float = 1500.0


@dataclass(frozen=True)
class DiscretizedContext:
    weekend: str
    holiday: str
    temp_level: str
    humidity_level: str
    terrain_level: str
    load_level: str


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _bucket(value: Optional[float], low: float, high: float) -> str:
    if value is None or not math.isfinite(value):
        return "unknown"
    if value < low:
        return "low"
    if value >= high:
        return "high"
    return "moderate"


def discretize_context(raw: ContextRecord, rules: DiscretizationRules = DiscretizationRules()) -> DiscretizedContext:
    """Map a raw record to categorical levels; anything missing becomes ``unknown``."""
    ts = _as_utc(raw.timestamp_utc)
    weekend = "yes" if ts.weekday() >= 5 else "no"
    if raw.is_holiday is None:
        holiday = "unknown"
    else:
        holiday = "yes" if raw.is_holiday else "no"

    if raw.terrain in _HIGHLAND:
        terrain = "highland"
    elif raw.terrain in _LOWLAND:
        terrain = "lowland"
    elif raw.airport_elevation_m is not None and math.isfinite(raw.airport_elevation_m):
        terrain = "highland" if raw.airport_elevation_m >= rules.highland_cutoff_m else "lowland"
    else:
        terrain = "unknown"

    return DiscretizedContext(
        weekend=weekend,
        holiday=holiday,
        temp_level=_bucket(raw.ambient_temp_c, rules.temp_low_c, rules.temp_high_c),
        humidity_level=_bucket(raw.humidity_pct, rules.humidity_low_pct, rules.humidity_high_pct),
        terrain_level=terrain,
        load_level=raw.load_level or "unknown",
    )


# Each level is rendered as a single factor-bound tag (e.g. ``temperature_high``)
# so a bag-of-tokens encoder still knows which factor a level belongs to.
_FACTORS = (
    ("Weekend", "weekend", "weekend"),
    ("Public holiday", "holiday", "holiday"),
    ("Ambient temperature", "temperature", "temp_level"),
    ("Humidity", "humidity", "humidity_level"),
    ("Terrain", "terrain", "terrain_level"),
    ("Operational load", "load", "load_level"),
)


def context_labels(ctx: DiscretizedContext) -> dict[str, str]:
    return {title: f"{tag}_{getattr(ctx, attr)}" for title, tag, attr in _FACTORS}


def _template_v1(ctx: DiscretizedContext) -> str:
    lines = [
        "You receive coarse operating-context labels for one aircraft departure.",
        "Context labels:",
    ]
    lines += [f"- {title}: {label}" for title, label in context_labels(ctx).items()]
    lines += [
        "Task: in one short sentence, explain how these operating conditions may shape "
        "bleed-air pressure regulation during the takeoff phase.",
        "Constraints: do not state any diagnosis, do not attribute faults to any component, "
        "and do not give maintenance recommendations. Labels ending in a not-available "
        "marker carry no information.",
        "Answer format: repeat the labels, then the sentence.",
    ]
    return "\n".join(lines)


def _template_compact(ctx: DiscretizedContext) -> str:
    return "; ".join(context_labels(ctx).values())


PROMPT_TEMPLATES = {
    "context-v1": _template_v1,
    "context-compact": _template_compact,
}
DEFAULT_TEMPLATE = "context-v1"


def build_prompt(ctx: DiscretizedContext, template_id: str = DEFAULT_TEMPLATE) -> str:
    try:
        render = PROMPT_TEMPLATES[template_id]
    except KeyError:
        raise ConfigError(
            f"unknown prompt template {template_id!r}; choose from {sorted(PROMPT_TEMPLATES)}"
        ) from None
    return render(ctx)


# ------------------------------------------------------------------ embedders

@dataclass(frozen=True)
class TextEmbedding:
    vector: np.ndarray
    token_count: int


class TextEmbedder(Protocol):
    dim: int

    def embed(self, text: str) -> TextEmbedding: ...


_TOKEN_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    """Lower-cased word tokens; whitespace and punctuation separate tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class HashingEmbedder:
    """Signed feature hashing of tokens, mean-pooled and L2-normalised."""

    dim: int = 256
    salt: str = "aura"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.salt}:{token}".encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "little")
        vec = np.zeros(self.dim)
        vec[h % self.dim] = 1.0 if (h >> 63) & 1 == 0 else -1.0
        return vec

    def pooled(self, tokens: list[str]) -> np.ndarray:
        return np.mean([self.token_vector(t) for t in tokens], axis=0)

    def embed(self, text: str) -> TextEmbedding:
        hit = self._cache.get(text)
        if hit is not None:
            return hit
        tokens = tokenize(text)
        if not tokens:
            raise ValidationError(f"text has no tokens: {text!r}")
        pooled = self.pooled(tokens)
        norm = np.linalg.norm(pooled)
        # every token lands on exactly one bucket, so a zero mean needs cancelling signs
        vec = pooled / norm if norm > 0 else pooled
        out = TextEmbedding(vector=vec, token_count=len(tokens))
        self._cache[text] = out
        return out


@dataclass
class HttpEmbedder:
    """Client for an external encoder: POST {"text": ...} -> {"vectors": [[...], ...]}."""

    url: str
    dim: int
    timeout_ms: int = 5000
    retries: int = 2
    backoff_s: float = 0.05

    def embed(self, text: str) -> TextEmbedding:
        body = json.dumps({"text": text}).encode("utf-8")
        last = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(
                self.url, data=body, method="POST",
                headers={"Content-Type": "application/json; charset=utf-8"},
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout_ms / 1000.0) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                break
            except urllib.error.HTTPError as exc:
                last = f"HTTP {exc.code} from {self.url}"
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                last = f"request to {self.url} failed: {exc}"
            log.warning("embedder attempt %d/%d: %s", attempt + 1, self.retries + 1, last)
            if attempt < self.retries:
                time.sleep(self.backoff_s * (attempt + 1))
        else:
            raise TransportError(last, retries_exhausted=True)

        vectors = np.asarray(payload.get("vectors", []), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise TransportError(f"malformed embedding response from {self.url}")
        if vectors.shape[1] != self.dim:
            raise ValidationError(f"embedder returned width {vectors.shape[1]}, expected {self.dim}")
        return TextEmbedding(vector=vectors.mean(axis=0), token_count=vectors.shape[0])


def embed_text(text: str, embedder: TextEmbedder) -> TextEmbedding:
    if not text or not text.strip():
        raise ValidationError("cannot embed empty text")
    return embedder.embed(text)


def make_embedder(kind: str = "hash", dim: int = 256, url: str = "", timeout_ms: int = 5000,
                  retries: int = 2) -> TextEmbedder:
    if kind == "hash":
        return HashingEmbedder(dim=dim)
    if kind == "http":
        if not url:
            raise ConfigError("embedder.url is required for the http embedder")
        return HttpEmbedder(url=url, dim=dim, timeout_ms=timeout_ms, retries=retries)
    raise ConfigError(f"unknown embedder kind {kind!r}")

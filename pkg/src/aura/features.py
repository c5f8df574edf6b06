"""Turn ``SampleRecord`` lists into normalised, embedded numpy batches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .context import (
    DEFAULT_TEMPLATE,
    DiscretizationRules,
    TextEmbedder,
    build_prompt,
    discretize_context,
    embed_text,
)
from .data import ExoStats, SampleRecord, normalize


@dataclass
class Batch:
    endo: np.ndarray        # (B, T) normalised history
    target: np.ndarray      # (B, S) normalised target
    exo_hist: np.ndarray    # (B, T, D_ex)
    exo_fut: np.ndarray     # (B, S, D_ex)
    attr: np.ndarray        # (B, E) attribute-text embedding (zeros when no text)
    geo: np.ndarray         # (B, 3) raw lat/lon/alt
    text: np.ndarray        # (B, E) context-prompt embedding
    mean: np.ndarray        # (B,) per-window endogenous mean
    std: np.ndarray         # (B,) per-window endogenous std
    ids: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.endo.shape[0]

    def subset(self, idx) -> "Batch":
        idx = np.asarray(idx)
        idx = np.flatnonzero(idx) if idx.dtype == bool else idx.astype(np.intp)
        return Batch(
            self.endo[idx], self.target[idx], self.exo_hist[idx], self.exo_fut[idx], self.attr[idx],
            self.geo[idx], self.text[idx], self.mean[idx], self.std[idx],
            [self.ids[i] for i in idx], [self.labels[i] for i in idx],
        )

    def denormalize(self, pred: np.ndarray) -> np.ndarray:
        return pred * self.std[:, None] + self.mean[:, None]

    def raw_target(self) -> np.ndarray:
        return self.denormalize(self.target)


def context_prompt(sample: SampleRecord, template_id: str = DEFAULT_TEMPLATE,
                   rules: DiscretizationRules = DiscretizationRules()) -> str:
    return build_prompt(discretize_context(sample.context, rules), template_id)


def make_batch(samples: Sequence[SampleRecord], exo_stats: Optional[ExoStats], embedder: TextEmbedder,
               template_id: str = DEFAULT_TEMPLATE,
               rules: DiscretizationRules = DiscretizationRules()) -> Batch:
    if not samples:
        raise ValueError("cannot build an empty batch")
    normed, stats = zip(*(normalize(s, exo_stats) for s in samples))
    E = embedder.dim
    cache: dict[str, np.ndarray] = {}

    def vec(text: str) -> np.ndarray:
        if not text.strip():
            return np.zeros(E)
        if text not in cache:
            cache[text] = embed_text(text, embedder).vector
        return cache[text]

    return Batch(
        endo=np.stack([s.endo_hist for s in normed]),
        target=np.stack([s.endo_target for s in normed]),
        exo_hist=np.stack([s.exo_hist for s in normed]),
        exo_fut=np.stack([s.exo_fut for s in normed]),
        attr=np.stack([vec(s.attr_text) for s in samples]),
        geo=np.stack([s.geo for s in samples]),
        text=np.stack([vec(context_prompt(s, template_id, rules)) for s in samples]),
        mean=np.array([st.mean for st in stats]),
        std=np.array([st.std for st in stats]),
        ids=[s.sample_id for s in samples],
        labels=[s.label for s in samples],
    )

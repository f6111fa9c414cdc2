"""Synthetic labeled corpora with planted class structure.

Real labeled story corpora are external inputs; these generators build
feature-level stand-ins for tests and benchmarks.  Each synthetic story
group draws a persistent surprisal center (good stories near the
default optimal surprisal, bad stories well above it) and emits one
record per completion level through the real feature-computation path,
so the whole downstream pipeline is exercised unchanged.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..backends import EmbeddingVector
from .features import CuriosityConfig, compute_features
from .pipeline import FeatureRecord

COMPLETION_LEVELS = (0.5, 0.625, 0.75, 0.875, 1.0)


def tuning_corpus(
    n_groups: int = 100,
    seed: int = 0,
    good_center: float = 4.0,
    chaotic_center: float = 8.0,
    boring_center: float = 1.5,
    center_sd: float = 0.3,
    token_sd: float = 0.8,
    n_tokens: int = 120,
) -> list[FeatureRecord]:
    """Corpus for curiosity tuning: good near the optimum, bad on both sides.

    Good stories run near ``good_center`` bits; bad stories split between
    a too-predictable mode and a too-chaotic one.  A one-sided bad class
    would leave every low bump center a perfect separator (the argmax
    ties); flanking the optimum from both sides makes bump centers near
    ``good_center`` the unique best separators, which is the structure
    the tuning heatmap is meant to recover.
    """
    rng = np.random.default_rng(seed)
    records = []
    for g in range(n_groups):
        label = "good" if g % 2 == 0 else "bad"
        if label == "good":
            center = rng.normal(good_center, center_sd)
        elif g % 4 == 1:
            center = rng.normal(chaotic_center, center_sd)
        else:
            center = rng.normal(boring_center, center_sd)
        series = np.clip(rng.normal(center, token_sd, n_tokens), 0.0, None)
        records.append(
            FeatureRecord(
                features=compute_features(series, None),
                label=label,
                group=f"story-{g:04d}",
                series=series,
            )
        )
    return records


def planted_corpus(
    n_groups: int = 100,
    seed: int = 0,
    good_center: float = 4.0,
    bad_center: float = 8.0,
    center_sd: float = 0.3,
    token_sd: float = 0.8,
    full_tokens: int = 200,
    embedding_dim: int = 16,
    levels: Sequence[float] = COMPLETION_LEVELS,
    cfg: CuriosityConfig = CuriosityConfig(),
) -> list[FeatureRecord]:
    """Balanced two-class corpus of n_groups stories x completion levels.

    Good stories run their surprisal near ``good_center`` bits and keep
    sentences thematically tight (low embedding dispersion); bad stories
    sit near ``bad_center`` with loose embeddings.  Labels alternate by
    group index so any prefix of groups stays balanced.
    """
    rng = np.random.default_rng(seed)
    records = []
    for g in range(n_groups):
        label = "good" if g % 2 == 0 else "bad"
        center = rng.normal(good_center if label == "good" else bad_center, center_sd)
        base = rng.normal(size=embedding_dim)
        dispersion = 0.3 if label == "good" else 0.9
        for level in levels:
            n_tokens = max(int(round(level * full_tokens)), 8)
            series = np.clip(rng.normal(center, token_sd, n_tokens), 0.0, None)
            n_sentences = max(int(round(level * 16)), 2)
            vectors = []
            for _ in range(n_sentences):
                raw = base + dispersion * rng.normal(size=embedding_dim)
                vectors.append(EmbeddingVector(tuple(raw / np.linalg.norm(raw))))
            features = compute_features(series, vectors, cfg, completion=level)
            records.append(
                FeatureRecord(
                    features=features,
                    label=label,
                    group=f"story-{g:04d}",
                    series=series,
                )
            )
    return records

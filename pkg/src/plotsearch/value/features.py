"""Surprisal-based story features.

Surprisal arrives as natural-log token logprobs and is converted to bits
here.  Interest follows a Gaussian bump around an optimal surprisal
level; averaging it over tokens gives the curiosity index.  Coherence is
the mean pairwise cosine similarity of sentence embeddings.  The full
vector has 14 named features; slots that cannot be computed for a given
story are explicit ``None`` (imputed downstream), never silent zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .. import kernels
from ..backends import BackendError, EmbeddingVector, TokenLogprob

# Ordered feature slots; array layout everywhere follows this order.
FEATURE_NAMES = (
    "curiosity_index",
    "coherence_score",
    "peak_frequency",
    "peak_mean_height",
    "peak_interval_std",
    "gradient_window_mean",
    "gradient_window_var",
    "surprisal_mean",
    "surprisal_std",
    "surprisal_max",
    "interest_band_fraction",
    "coherence_std",
    "surprisal_first_half_mean",
    "surprisal_second_half_mean",
)

# Peak/gradient defaults: 5-token averaging window, 1-bit prominence.
DYNAMICS_WINDOW = 5
PEAK_PROMINENCE = 1.0


@dataclass(frozen=True)
class CuriosityConfig:
    """Parameters of the interest bump: optimal surprisal and spread, in bits."""

    optimal_surprisal: float = 4.0
    spread: float = 0.6

    def __post_init__(self):
        if self.spread <= 0:
            raise ValueError("spread must be positive")


@dataclass(frozen=True)
class FeatureVector:
    """The 14 story features plus completion fraction as side metadata.

    A ``None`` slot means "could not be computed for this story" and is
    filled by the model's imputer at prediction time.
    """

    curiosity_index: Optional[float] = None
    coherence_score: Optional[float] = None
    peak_frequency: Optional[float] = None
    peak_mean_height: Optional[float] = None
    peak_interval_std: Optional[float] = None
    gradient_window_mean: Optional[float] = None
    gradient_window_var: Optional[float] = None
    surprisal_mean: Optional[float] = None
    surprisal_std: Optional[float] = None
    surprisal_max: Optional[float] = None
    interest_band_fraction: Optional[float] = None
    coherence_std: Optional[float] = None
    surprisal_first_half_mean: Optional[float] = None
    surprisal_second_half_mean: Optional[float] = None
    completion_fraction: Optional[float] = None

    def __post_init__(self):
        for name, low, high in (
            ("curiosity_index", 0.0, 1.0),
            ("coherence_score", -1.0, 1.0),
            ("peak_frequency", 0.0, 1.0),
            ("interest_band_fraction", 0.0, 1.0),
            ("completion_fraction", 0.0, 1.0),
        ):
            value = getattr(self, name)
            if value is not None and not low <= value <= high:
                raise ValueError(f"{name}={value} outside [{low}, {high}]")

    def as_array(self) -> np.ndarray:
        """14-vector in FEATURE_NAMES order, NaN for missing slots."""
        return np.array(
            [math.nan if getattr(self, n) is None else getattr(self, n) for n in FEATURE_NAMES],
            dtype=np.float64,
        )

    def as_dict(self) -> dict:
        out = {n: getattr(self, n) for n in FEATURE_NAMES}
        out["completion_fraction"] = self.completion_fraction
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureVector":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in known})


# ---------------------------------------------------------------------------
# Elementary quantities


def surprisal_series(logprobs: Sequence[TokenLogprob]) -> np.ndarray:
    """Per-token surprisal in bits: natural-log logprobs divided by ln 2."""
    if not logprobs:
        raise ValueError("empty logprob list")
    return np.array([-t.logprob / kernels.LN2 for t in logprobs], dtype=np.float64)


def interest(surprisal_bits: float, cfg: CuriosityConfig) -> float:
    """Gaussian interest response, 1.0 exactly at the optimal surprisal."""
    d = surprisal_bits - cfg.optimal_surprisal
    return math.exp(-(d * d) / (2.0 * cfg.spread * cfg.spread))


def curiosity_index(series: Sequence[float], cfg: CuriosityConfig) -> float:
    """Mean interest over all tokens; order-invariant, in (0, 1]."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty surprisal series")
    return float(np.mean(kernels.interest_curve(arr, cfg.optimal_surprisal, cfg.spread)))


def coherence_score(embeddings: Sequence[EmbeddingVector]) -> float:
    """Mean pairwise cosine similarity over all unordered sentence pairs."""
    if len(embeddings) < 2:
        raise ValueError("need at least two sentences")
    matrix = np.array([e.values for e in embeddings], dtype=np.float64)
    mean, _ = kernels.pairwise_cosine_mean_std(matrix)
    return mean


def surprisal_dynamics(
    series: Sequence[float],
    window: int = DYNAMICS_WINDOW,
    prominence: float = PEAK_PROMINENCE,
) -> tuple:
    """Peak and gradient summary of a surprisal series.

    Peaks are local maxima on the raw series exceeding both neighbors by
    at least ``prominence``; their height is the raw surprisal at the
    peak.  Gradients are first differences of the ``window``-averaged
    series.  Returns (peak_frequency, peak_mean_height,
    peak_interval_std, gradient_window_mean, gradient_window_var); a
    slot that needs more structure than the series has (no peaks, fewer
    than two peaks, too few windows) comes back None.
    """
    arr = np.asarray(series, dtype=np.float64)
    if window < 2:
        raise ValueError("window must be >= 2")
    if arr.size < window:
        raise ValueError(f"series of {arr.size} tokens shorter than window {window}")
    return _dynamics(arr, window, prominence)


def _dynamics(arr: np.ndarray, window: int, prominence: float) -> tuple:
    peaks = kernels.peak_indices(arr, prominence)
    peak_frequency = peaks.size / arr.size
    peak_mean_height = float(np.mean(arr[peaks])) if peaks.size > 0 else None
    peak_interval_std = float(np.std(np.diff(peaks))) if peaks.size >= 2 else None
    gradient_mean = gradient_var = None
    if arr.size >= window:
        smoothed = kernels.moving_average(arr, window)
        if smoothed.size >= 2:
            gradients = np.diff(smoothed)
            gradient_mean = float(np.mean(gradients))
            gradient_var = float(np.var(gradients))
    return (peak_frequency, peak_mean_height, peak_interval_std, gradient_mean, gradient_var)


# ---------------------------------------------------------------------------
# Full vector


def compute_features(
    series: Optional[Sequence[float]],
    embeddings: Optional[Sequence[EmbeddingVector]],
    cfg: Optional[CuriosityConfig] = None,
    window: int = DYNAMICS_WINDOW,
    prominence: float = PEAK_PROMINENCE,
    completion: Optional[float] = None,
) -> FeatureVector:
    """Assemble the 14-feature vector from raw measurements.

    Pass ``series=None`` (scorer unavailable) or ``embeddings`` of fewer
    than two sentences (embedder unavailable, single-sentence story) to
    get explicit missing slots in the corresponding features.
    """
    cfg = cfg or CuriosityConfig()
    slots: dict = {name: None for name in FEATURE_NAMES}

    if series is not None:
        arr = np.asarray(series, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("empty surprisal series")
        slots["curiosity_index"] = curiosity_index(arr, cfg)
        slots["surprisal_mean"] = float(np.mean(arr))
        slots["surprisal_std"] = float(np.std(arr))
        slots["surprisal_max"] = float(np.max(arr))
        slots["interest_band_fraction"] = kernels.band_fraction(
            arr, cfg.optimal_surprisal, cfg.spread
        )
        half = math.ceil(arr.size / 2)
        slots["surprisal_first_half_mean"] = float(np.mean(arr[:half]))
        if arr.size > half:
            slots["surprisal_second_half_mean"] = float(np.mean(arr[half:]))
        (
            slots["peak_frequency"],
            slots["peak_mean_height"],
            slots["peak_interval_std"],
            slots["gradient_window_mean"],
            slots["gradient_window_var"],
        ) = _dynamics(arr, window, prominence)

    if embeddings is not None and len(embeddings) >= 2:
        matrix = np.array([e.values for e in embeddings], dtype=np.float64)
        mean, std = kernels.pairwise_cosine_mean_std(matrix)
        slots["coherence_score"] = mean
        slots["coherence_std"] = std

    return FeatureVector(completion_fraction=completion, **slots)


def story_text(bullets: Sequence[str]) -> str:
    """The flat outline text sent to the scorer: one dashed line per bullet."""
    return "\n".join(f"- {b}" for b in bullets)


def extract_features(
    bullets: Sequence[str],
    scorer,
    embedder,
    cfg: Optional[CuriosityConfig] = None,
    window: int = DYNAMICS_WINDOW,
    prominence: float = PEAK_PROMINENCE,
    completion: Optional[float] = None,
) -> FeatureVector:
    """Score and embed a bullet outline, then assemble its feature vector.

    A failing backend degrades to missing slots rather than raising, so
    one flaky service cannot sink a whole evaluation wave.
    """
    if not bullets:
        raise ValueError("story has no bullets")
    series = None
    try:
        series = surprisal_series(scorer.score_tokens(story_text(bullets)))
    except BackendError:
        pass
    embeddings = None
    if len(bullets) >= 2:
        try:
            embeddings = embedder.embed(list(bullets))
        except BackendError:
            pass
    return compute_features(
        series, embeddings, cfg, window=window, prominence=prominence, completion=completion
    )

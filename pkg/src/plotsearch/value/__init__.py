"""Step-level story value: features, calibrated classifier, validation."""

from .features import (
    CuriosityConfig,
    FeatureVector,
    FEATURE_NAMES,
    coherence_score,
    compute_features,
    curiosity_index,
    extract_features,
    interest,
    surprisal_dynamics,
    surprisal_series,
)
from .pipeline import (
    LabeledStory,
    FeatureRecord,
    ValueModel,
    fit_pipeline,
    load_corpus,
    predict_value,
    save_corpus,
)
from .validation import cross_validate, tune_curiosity

__all__ = [
    "CuriosityConfig",
    "FeatureVector",
    "FEATURE_NAMES",
    "coherence_score",
    "compute_features",
    "curiosity_index",
    "extract_features",
    "interest",
    "surprisal_dynamics",
    "surprisal_series",
    "LabeledStory",
    "FeatureRecord",
    "ValueModel",
    "fit_pipeline",
    "load_corpus",
    "predict_value",
    "save_corpus",
    "cross_validate",
    "tune_curiosity",
]

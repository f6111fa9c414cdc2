"""Value-model pipeline: imputation, standardization, PCA, calibrated SVC.

Fitting uses scikit-learn's SVC for the max-margin solve; everything
else (imputer, scaler, PCA, Platt-style sigmoid calibration) is done
in-module with numpy, and prediction runs entirely from the serialized
parameters, so a saved model needs no scikit-learn to score stories.

Calibration maps the classifier's decision score to a probability with
a monotone sigmoid fitted on out-of-fold scores from group-aware
splits, then the classifier is refit on the full training set.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from sklearn.svm import SVC

from .features import FEATURE_NAMES, CuriosityConfig, FeatureVector, extract_features

MODEL_SCHEMA_VERSION = 1

LABELS = ("bad", "good")

DEFAULT_HYPERPARAMS = {
    "C": 1.0,
    "kernel": "auto",  # rbf for >= 30 samples, linear below
    "gamma": "scale",
    "n_components": None,  # None: keep components covering 95% variance
    "calibration_folds": 5,
}


@dataclass
class LabeledStory:
    """One training example: a bullet outline with a quality label.

    ``group`` ties together the completion levels of the same story so
    cross-validation never splits a story across train and test.
    """

    bullets: tuple
    label: str
    group: str
    completion: float

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}")
        if not 0.0 < self.completion <= 1.0:
            raise ValueError("completion must lie in (0, 1]")
        self.bullets = tuple(self.bullets)


@dataclass
class FeatureRecord:
    """A feature vector with its label and group, ready for fitting.

    ``series`` optionally retains the raw surprisal series so curiosity
    parameters can be re-tuned without re-scoring the corpus.
    """

    features: FeatureVector
    label: str
    group: str
    series: Optional[np.ndarray] = None

    @property
    def target(self) -> int:
        return 1 if self.label == "good" else 0


def load_corpus(path: str) -> list[LabeledStory]:
    """Read a JSONL corpus of labeled stories."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            out.append(
                LabeledStory(
                    bullets=tuple(doc["bullets"]),
                    label=doc["label"],
                    group=doc["group"],
                    completion=doc["completion"],
                )
            )
    return out


def save_corpus(stories: Sequence[LabeledStory], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for story in stories:
            fh.write(
                json.dumps(
                    {
                        "bullets": list(story.bullets),
                        "label": story.label,
                        "group": story.group,
                        "completion": story.completion,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def extract_corpus_features(
    stories: Sequence[LabeledStory],
    scorer,
    embedder,
    cfg: Optional[CuriosityConfig] = None,
    keep_series: bool = True,
) -> list[FeatureRecord]:
    """Run feature extraction over a labeled corpus."""
    from .features import story_text, surprisal_series

    records = []
    for story in stories:
        features = extract_features(
            story.bullets, scorer, embedder, cfg=cfg, completion=story.completion
        )
        series = None
        if keep_series:
            try:
                series = surprisal_series(scorer.score_tokens(story_text(story.bullets)))
            except Exception:
                series = None
        records.append(
            FeatureRecord(features=features, label=story.label, group=story.group, series=series)
        )
    return records


# ---------------------------------------------------------------------------
# Group-aware fold assignment (shared with cross-validation)


def assign_group_folds(group_labels: dict, n_folds: int, rng) -> dict:
    """Map each group id to a fold, stratified by the group's class.

    Groups of each class are shuffled then dealt round-robin, so fold
    class counts differ by at most one group per class and a group never
    spans folds.
    """
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    assignment = {}
    for cls in sorted(set(group_labels.values())):
        groups = sorted((g for g, c in group_labels.items() if c == cls), key=str)
        order = rng.permutation(len(groups))
        for position, index in enumerate(order):
            assignment[groups[index]] = position % n_folds
    return assignment


# ---------------------------------------------------------------------------
# The fitted model


@dataclass(frozen=True)
class ValueModel:
    """Frozen value-model parameters; prediction is pure numpy.

    The decision path is: impute missing slots with training medians,
    standardize, project through the PCA basis, score with the kernel
    classifier, squash through the calibration sigmoid.
    """

    feature_names: tuple
    imputer_medians: np.ndarray
    scaler_means: np.ndarray
    scaler_scales: np.ndarray
    pca_mean: np.ndarray
    pca_components: np.ndarray  # rows are components
    explained_variance_ratio: np.ndarray
    kernel: str
    intercept: float
    calibration_slope: float
    calibration_bias: float
    support_vectors: Optional[np.ndarray] = None
    dual_coef: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    weights: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "imputer_medians",
            "scaler_means",
            "scaler_scales",
            "pca_mean",
            "pca_components",
            "explained_variance_ratio",
            "support_vectors",
            "dual_coef",
            "weights",
        ):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    # -- prediction --

    def transform(self, features: FeatureVector) -> np.ndarray:
        x = features.as_array()
        missing = np.isnan(x)
        x = np.where(missing, self.imputer_medians, x)
        x = (x - self.scaler_means) / self.scaler_scales
        return (x - self.pca_mean) @ self.pca_components.T

    def decision_score(self, projected: np.ndarray) -> float:
        if self.kernel == "rbf":
            sq = np.sum((self.support_vectors - projected) ** 2, axis=1)
            return float(self.dual_coef @ np.exp(-self.gamma * sq) + self.intercept)
        return float(self.weights @ projected + self.intercept)

    def predict(self, features: FeatureVector) -> float:
        score = self.decision_score(self.transform(features))
        z = self.calibration_slope * score + self.calibration_bias
        p = 1.0 / (1.0 + math.exp(-z))
        return min(max(p, 0.0), 1.0)

    # -- serialization --

    def to_json(self) -> dict:
        def listify(arr):
            return None if arr is None else np.asarray(arr).tolist()

        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "feature_names": list(self.feature_names),
            "imputer_medians": listify(self.imputer_medians),
            "scaler_means": listify(self.scaler_means),
            "scaler_scales": listify(self.scaler_scales),
            "pca_mean": listify(self.pca_mean),
            "pca_components": listify(self.pca_components),
            "explained_variance_ratio": listify(self.explained_variance_ratio),
            "kernel": self.kernel,
            "support_vectors": listify(self.support_vectors),
            "dual_coef": listify(self.dual_coef),
            "gamma": self.gamma,
            "weights": listify(self.weights),
            "intercept": self.intercept,
            "calibration_slope": self.calibration_slope,
            "calibration_bias": self.calibration_bias,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ValueModel":
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema {doc.get('schema_version')!r}")

        def arr(key):
            return None if doc[key] is None else np.array(doc[key], dtype=np.float64)

        return cls(
            feature_names=tuple(doc["feature_names"]),
            imputer_medians=arr("imputer_medians"),
            scaler_means=arr("scaler_means"),
            scaler_scales=arr("scaler_scales"),
            pca_mean=arr("pca_mean"),
            pca_components=arr("pca_components"),
            explained_variance_ratio=arr("explained_variance_ratio"),
            kernel=doc["kernel"],
            support_vectors=arr("support_vectors"),
            dual_coef=arr("dual_coef"),
            gamma=doc["gamma"],
            weights=arr("weights"),
            intercept=doc["intercept"],
            calibration_slope=doc["calibration_slope"],
            calibration_bias=doc["calibration_bias"],
            metadata=doc["metadata"],
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "ValueModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def predict_value(model: ValueModel, features: FeatureVector) -> float:
    """Calibrated probability that the story is good, in [0, 1]."""
    return model.predict(features)


# ---------------------------------------------------------------------------
# Fitting


def _resolve_hyperparams(hyperparams: Optional[dict]) -> dict:
    merged = dict(DEFAULT_HYPERPARAMS)
    for key, value in (hyperparams or {}).items():
        if key not in DEFAULT_HYPERPARAMS:
            raise ValueError(f"unknown hyperparameter {key!r}")
        merged[key] = value
    return merged


def _fit_platt(scores: np.ndarray, targets: np.ndarray) -> tuple[float, float]:
    """Fit p = sigmoid(a*score + b) with a >= 0 by smoothed-target NLL."""
    n_pos = int(np.sum(targets == 1))
    n_neg = int(np.sum(targets == 0))
    t = np.where(targets == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def nll(params):
        a, b = params
        z = a * scores + b
        # log(1+e^z) computed stably on both tails
        log1p_exp = np.where(z > 0, z + np.log1p(np.exp(-z)), np.log1p(np.exp(z)))
        return float(np.sum(log1p_exp - t * z))

    result = minimize(
        nll, x0=np.array([1.0, 0.0]), method="L-BFGS-B", bounds=[(0.0, None), (None, None)]
    )
    a, b = result.x
    return float(a), float(b)


def fit_pipeline(
    records: Sequence[FeatureRecord],
    hyperparams: Optional[dict] = None,
    seed=0,
) -> ValueModel:
    """Fit the full value pipeline on labeled feature records.

    Requires both classes and at least two groups per class (the
    calibration split is group-aware).  The returned model is frozen.
    """
    params = _resolve_hyperparams(hyperparams)
    if not records:
        raise ValueError("empty corpus")
    y = np.array([r.target for r in records], dtype=np.int64)
    groups = [r.group for r in records]
    if len(set(y)) < 2:
        raise ValueError("both classes must be present")
    for cls in (0, 1):
        cls_groups = {g for g, t in zip(groups, y) if t == cls}
        if len(cls_groups) < 2:
            raise ValueError("need at least two groups per class for calibration")

    X = np.vstack([r.features.as_array() for r in records])

    # Imputation: per-feature training median; an all-missing feature
    # has no informative median, so it imputes to zero.
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="All-NaN slice encountered")
        medians = np.nanmedian(X, axis=0)
    medians = np.where(np.isnan(medians), 0.0, medians)
    X_imp = np.where(np.isnan(X), medians, X)

    # Standardization with a zero-variance guard.
    means = X_imp.mean(axis=0)
    stds = X_imp.std(axis=0)
    scales = np.where(stds == 0.0, 1.0, stds)
    X_std = (X_imp - means) / scales

    # PCA by SVD, with deterministic component signs.
    pca_mean = X_std.mean(axis=0)
    centered = X_std - pca_mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    variances = singular**2 / len(records)
    total = float(variances.sum())
    if total <= 0.0:
        raise ValueError("degenerate corpus: no feature variance")
    ratio = variances / total
    n_components = params["n_components"]
    if n_components is None:
        n_components = int(np.searchsorted(np.cumsum(ratio), 0.95) + 1)
    n_components = max(1, min(int(n_components), vt.shape[0]))
    components = vt[:n_components].copy()
    for row in components:
        anchor = np.argmax(np.abs(row))
        if row[anchor] < 0:
            row *= -1.0
    Z = centered @ components.T

    kernel = params["kernel"]
    if kernel == "auto":
        kernel = "rbf" if len(records) >= 30 else "linear"
    if kernel not in ("rbf", "linear"):
        raise ValueError(f"unsupported kernel {kernel!r}")
    gamma = params["gamma"]
    if gamma == "scale":
        z_var = float(Z.var())
        gamma = 1.0 / (n_components * z_var) if z_var > 0 else 1.0

    def make_clf():
        if kernel == "rbf":
            return SVC(C=params["C"], kernel="rbf", gamma=gamma)
        return SVC(C=params["C"], kernel="linear")

    # Out-of-fold decision scores for calibration.
    rng = np.random.default_rng(seed)
    group_labels = {g: int(t) for g, t in zip(groups, y)}
    n_folds = min(int(params["calibration_folds"]), len(set(groups)))
    assignment = assign_group_folds(group_labels, max(n_folds, 2), rng)
    fold_ids = np.array([assignment[g] for g in groups])
    oof_scores, oof_targets = [], []
    for fold in range(max(n_folds, 2)):
        train_mask = fold_ids != fold
        if train_mask.all() or not train_mask.any():
            continue
        if len(set(y[train_mask])) < 2:
            continue
        clf = make_clf()
        clf.fit(Z[train_mask], y[train_mask])
        oof_scores.append(clf.decision_function(Z[~train_mask]))
        oof_targets.append(y[~train_mask])

    final = make_clf()
    final.fit(Z, y)
    if oof_scores:
        slope, bias = _fit_platt(np.concatenate(oof_scores), np.concatenate(oof_targets))
    else:  # pragma: no cover - needs every fold to degenerate
        slope, bias = _fit_platt(final.decision_function(Z), y)

    if kernel == "rbf":
        support_vectors = np.asarray(final.support_vectors_, dtype=np.float64)
        dual_coef = np.asarray(final.dual_coef_[0], dtype=np.float64)
        weights = None
    else:
        support_vectors = None
        dual_coef = None
        weights = np.asarray(final.coef_[0], dtype=np.float64)

    return ValueModel(
        feature_names=FEATURE_NAMES,
        imputer_medians=medians,
        scaler_means=means,
        scaler_scales=scales,
        pca_mean=pca_mean,
        pca_components=components,
        explained_variance_ratio=ratio[:n_components].copy(),
        kernel=kernel,
        support_vectors=support_vectors,
        dual_coef=dual_coef,
        gamma=gamma if kernel == "rbf" else None,
        weights=weights,
        intercept=float(final.intercept_[0]),
        calibration_slope=slope,
        calibration_bias=bias,
        metadata={
            "n_samples": len(records),
            "n_groups": len(set(groups)),
            "classes": list(LABELS),
            "C": params["C"],
            "n_components": n_components,
            "explained_variance_ratio_all": ratio.tolist(),
            "seed": seed if isinstance(seed, int) else list(seed),
        },
    )

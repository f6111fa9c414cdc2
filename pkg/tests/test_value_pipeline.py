"""Pipeline fitting, prediction, and serialization."""

import numpy as np
import pytest

from plotsearch.value.features import FEATURE_NAMES, FeatureVector
from plotsearch.value.pipeline import (
    FeatureRecord,
    LabeledStory,
    ValueModel,
    assign_group_folds,
    fit_pipeline,
    load_corpus,
    predict_value,
    save_corpus,
)
from plotsearch.value.synthetic import planted_corpus


@pytest.fixture(scope="module")
def corpus():
    return planted_corpus(n_groups=24, seed=7)


@pytest.fixture(scope="module")
def model(corpus):
    return fit_pipeline(corpus, seed=3)


# -- corpus types -------------------------------------------------------


def test_labeled_story_validation():
    with pytest.raises(ValueError):
        LabeledStory(bullets=("a",), label="great", group="g", completion=0.5)
    with pytest.raises(ValueError):
        LabeledStory(bullets=("a",), label="good", group="g", completion=0.0)


def test_corpus_jsonl_round_trip(tmp_path):
    stories = [
        LabeledStory(bullets=("one", "two"), label="good", group="g1", completion=0.5),
        LabeledStory(bullets=("three",), label="bad", group="g2", completion=1.0),
    ]
    path = tmp_path / "corpus.jsonl"
    save_corpus(stories, str(path))
    assert load_corpus(str(path)) == stories


def test_planted_corpus_shape(corpus):
    assert len(corpus) == 24 * 5
    labels = {r.label for r in corpus}
    assert labels == {"good", "bad"}
    goods = sum(1 for r in corpus if r.label == "good")
    assert goods == len(corpus) // 2
    assert all(r.series is not None for r in corpus)
    assert len({r.group for r in corpus}) == 24


# -- fold assignment ----------------------------------------------------


def test_assign_group_folds_stratified_and_complete():
    group_labels = {f"g{i}": i % 2 for i in range(20)}
    rng = np.random.default_rng(0)
    assignment = assign_group_folds(group_labels, 5, rng)
    assert set(assignment) == set(group_labels)
    for fold in range(5):
        members = [g for g, f in assignment.items() if f == fold]
        positives = sum(group_labels[g] for g in members)
        assert len(members) == 4 and positives == 2


def test_assign_group_folds_deterministic():
    group_labels = {f"g{i}": i % 2 for i in range(11)}
    a = assign_group_folds(group_labels, 4, np.random.default_rng(42))
    b = assign_group_folds(group_labels, 4, np.random.default_rng(42))
    assert a == b


# -- fitting ------------------------------------------------------------


def test_fit_requires_both_classes(corpus):
    goods = [r for r in corpus if r.label == "good"]
    with pytest.raises(ValueError, match="both classes"):
        fit_pipeline(goods)


def test_fit_requires_two_groups_per_class(corpus):
    one_group_per_class = [r for r in corpus if r.group in ("story-0000", "story-0001")]
    with pytest.raises(ValueError, match="two groups per class"):
        fit_pipeline(one_group_per_class)


def test_fit_rejects_unknown_hyperparameter(corpus):
    with pytest.raises(ValueError, match="unknown hyperparameter"):
        fit_pipeline(corpus, {"c": 1.0})


def test_training_separation(corpus, model):
    predictions = {"good": [], "bad": []}
    for record in corpus:
        predictions[record.label].append(model.predict(record.features))
    assert np.mean(predictions["good"]) > 0.8
    assert np.mean(predictions["bad"]) < 0.2


def test_confident_good_exemplar_scores_high(corpus, model):
    full_goods = [
        r
        for r in corpus
        if r.label == "good" and r.features.completion_fraction == 1.0
    ]
    values = [model.predict(r.features) for r in full_goods]
    assert max(values) > 0.9


def test_predictions_in_unit_interval(corpus, model):
    for record in corpus[::7]:
        v = predict_value(model, record.features)
        assert 0.0 <= v <= 1.0


def test_predict_is_pure(model, corpus):
    fv = corpus[0].features
    assert model.predict(fv) == model.predict(fv)


def test_predict_all_missing_vector(model):
    v = model.predict(FeatureVector())
    assert 0.0 <= v <= 1.0


def test_pipeline_deterministic(corpus):
    a = fit_pipeline(corpus, seed=11)
    b = fit_pipeline(corpus, seed=11)
    assert a.to_json() == b.to_json()


def test_single_axis_variance_pca():
    records = []
    for i in range(40):
        fv = FeatureVector(
            curiosity_index=i / 40.0,
            coherence_score=0.5,
            surprisal_mean=4.0,
            surprisal_std=1.0,
            surprisal_max=6.0,
        )
        records.append(
            FeatureRecord(features=fv, label="good" if i < 20 else "bad", group=f"g{i}")
        )
    model = fit_pipeline(records, {"n_components": 1})
    assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-9)


def test_pca_components_orthonormal(model):
    C = model.pca_components
    gram = C @ C.T
    assert np.allclose(gram, np.eye(C.shape[0]), atol=1e-8)
    ratios = model.metadata["explained_variance_ratio_all"]
    assert all(a >= b - 1e-12 for a, b in zip(ratios, ratios[1:]))


def test_model_frozen(model):
    with pytest.raises(ValueError):
        model.pca_components[0, 0] = 9.9


def test_decision_scores_match_sklearn_refit(corpus, model):
    """The serialized rbf evaluation reproduces the library decision function."""
    from sklearn.svm import SVC

    Z = np.vstack([model.transform(r.features) for r in corpus])
    y = np.array([r.target for r in corpus])
    clf = SVC(C=model.metadata["C"], kernel="rbf", gamma=model.gamma)
    clf.fit(Z, y)
    theirs = clf.decision_function(Z[::11])
    ours = np.array([model.decision_score(z) for z in Z[::11]])
    assert np.allclose(ours, theirs, atol=1e-9)


# -- serialization ------------------------------------------------------


def test_model_json_round_trip(corpus, model, tmp_path):
    doc = model.to_json()
    assert doc["schema_version"] == 1
    clone = ValueModel.from_json(doc)
    for record in corpus[::13]:
        assert clone.predict(record.features) == model.predict(record.features)

    path = tmp_path / "model.json"
    model.save(str(path))
    loaded = ValueModel.load(str(path))
    assert loaded.to_json() == doc


def test_model_rejects_unknown_schema(model):
    doc = model.to_json()
    doc["schema_version"] = 99
    with pytest.raises(ValueError, match="schema"):
        ValueModel.from_json(doc)


def test_linear_kernel_small_corpus():
    records = planted_corpus(n_groups=4, seed=1)[:20]
    model = fit_pipeline(records)
    assert model.kernel == "linear"
    assert model.weights is not None and model.support_vectors is None
    for record in records:
        assert 0.0 <= model.predict(record.features) <= 1.0

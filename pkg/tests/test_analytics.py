"""Scaling fits, gain timing, V-Q agreement, judging, effect sizes."""

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plotsearch.analytics import (
    FIT_MODEL_NOTE,
    EffectReport,
    cles_from_d,
    effect_stats,
    iterations_to_gain,
    loglinear_fit,
    pf_days,
    rubric_rate,
    speedup_ratio,
    v_q_correlation,
    wilcoxon_signed_rank,
)
from plotsearch.rubric import RUBRIC_DIMENSIONS, RubricParseError
from plotsearch.tree import PlotAction, SearchTree, StoryConfig


# -- log-linear fit ------------------------------------------------------


def test_exact_line_recovers_parameters():
    points = [(k, 0.5 + 0.02 * math.log(k)) for k in (1, 2, 4, 8, 16, 32)]
    fit = loglinear_fit(points)
    assert fit.slope == pytest.approx(0.02, abs=1e-9)
    assert fit.intercept == pytest.approx(0.5, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-9)
    assert fit.p_positive_slope < 1e-6
    assert fit.groups == ()
    assert fit.n_points == 6


def test_constant_series_has_zero_slope():
    fit = loglinear_fit([(k, 0.7) for k in (1, 2, 4, 8)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.p_positive_slope == pytest.approx(1.0)


def test_noisy_planted_slope_recovered_within_ten_percent():
    rng = np.random.default_rng(42)
    groups = []
    for g in range(6):
        offset = rng.normal(0.5, 0.05)
        ks = [2, 4, 8, 16, 32]
        groups.append(
            [(k, offset + 0.02 * math.log(k) + rng.normal(0.0, 0.002)) for k in ks]
        )
    fit = loglinear_fit(groups)
    assert fit.n_points == 30
    assert fit.slope == pytest.approx(0.02, rel=0.10)
    assert len(fit.groups) == 6
    for group in fit.groups:
        assert group.slope == pytest.approx(0.02, rel=0.35)
    assert fit.p_positive_slope < 0.01


def test_grouped_fit_labels_and_note():
    groups = [
        [(1, 0.4), (2, 0.45), (4, 0.5)],
        [(1, 0.5), (2, 0.56), (4, 0.6)],
    ]
    fit = loglinear_fit(groups, labels=["round0", "round1"])
    assert [g.label for g in fit.groups] == ["round0", "round1"]
    doc = fit.to_dict()
    assert doc["model_note"] == FIT_MODEL_NOTE
    assert len(doc["groups"]) == 2
    with pytest.raises(ValueError):
        loglinear_fit(groups, labels=["only-one"])


@pytest.mark.parametrize(
    "series",
    [
        [],
        [(1, 0.5), (2, 0.6)],
        [(0.5, 0.1), (2, 0.2), (4, 0.3)],
        [(2, 0.1), (2, 0.2), (2, 0.3)],
        [(1, 0.1), (2, float("nan")), (4, 0.3)],
    ],
)
def test_fit_rejects_bad_series(series):
    with pytest.raises(ValueError):
        loglinear_fit(series)


def test_pf_days_frozen_constant():
    # One nominal day at 35 TFLOP/s and 30% utilization.
    assert pf_days(86400.0) == pytest.approx(0.0105, abs=1e-12)
    assert pf_days(0.0) == 0.0
    with pytest.raises(ValueError):
        pf_days(-1.0)


# -- iterations to gain --------------------------------------------------


STAIRCASE = (
    [(k, 0.5) for k in range(8, 20)]
    + [(k, 0.55) for k in range(20, 30)]
    + [(k, 0.62) for k in range(30, 40)]
)


def test_gain_reached_at_documented_iteration():
    assert iterations_to_gain(STAIRCASE, 0.10) == 20
    assert iterations_to_gain(STAIRCASE, 0.20) == 30


def test_gain_never_reached_returns_none():
    capped = [(8, 0.5), (16, 0.53), (32, 0.54)]
    assert iterations_to_gain(capped, 0.10) is None


def test_missing_baseline_raises():
    with pytest.raises(ValueError):
        iterations_to_gain([(9, 0.5), (20, 0.6)], 0.10)


@given(st.integers(0, 10_000))
def test_gain_requirement_is_monotone(seed):
    rng = np.random.default_rng(seed)
    values = np.cumsum(rng.uniform(0.0, 0.02, size=40)) + 0.3
    series = list(zip(range(1, 41), values))
    k10 = iterations_to_gain(series, 0.10, baseline_k=8)
    k20 = iterations_to_gain(series, 0.20, baseline_k=8)
    inf = float("inf")
    assert (k20 if k20 is not None else inf) >= (k10 if k10 is not None else inf)


def test_speedup_ratio_hand_computed():
    slow = [(8, 0.50)] + [(k, 0.50 + 0.002 * (k - 8)) for k in range(9, 60)]
    fast = [(8, 0.50)] + [(k, 0.50 + 0.004 * (k - 8)) for k in range(9, 60)]
    # 10% gain: target 0.55, slow crosses at k=33, fast at k=21 (by hand).
    assert iterations_to_gain(slow, 0.10) == 33
    assert iterations_to_gain(fast, 0.10) == 21
    assert speedup_ratio(slow, fast, 0.10) == pytest.approx(33 / 21)
    assert speedup_ratio(slow, [(8, 0.5), (9, 0.5), (10, 0.5)], 0.10) is None


# -- V-Q agreement -------------------------------------------------------


def story_cfg():
    return StoryConfig(total_bullets=4, bullets_per_step=1, max_depth=4)


def test_single_visit_edges_correlate_perfectly():
    tree = SearchTree(story_cfg())
    root = tree.add_root()
    from plotsearch.engine import backpropagate

    for i, v in enumerate((0.2, 0.5, 0.8)):
        child = tree.add_child(root, PlotAction(text=f"c{i}"), [f"c{i}."])
        backpropagate(tree, child, v)
    assert v_q_correlation(tree) == pytest.approx(1.0)


def test_anticorrelated_table_hits_minus_one():
    tree = SearchTree(story_cfg())
    root = tree.add_root()
    for i, v in enumerate((0.2, 0.5, 0.8)):
        child = tree.add_child(root, PlotAction(text=f"c{i}"), [f"c{i}."])
        tree.nodes[child].evaluated_value = v
        rec = tree.edges[(root, f"c{i}")]
        rec.stats.visits = 1
        rec.stats.total_value = 1.0 - v
    assert v_q_correlation(tree) == pytest.approx(-1.0)


def test_vq_needs_two_pairs_and_variance():
    tree = SearchTree(story_cfg())
    root = tree.add_root()
    from plotsearch.engine import backpropagate

    child = tree.add_child(root, PlotAction(text="only"), ["only."])
    backpropagate(tree, child, 0.6)
    with pytest.raises(ValueError):
        v_q_correlation(tree)
    # Same value twice: enough pairs, but zero variance.
    other = tree.add_child(root, PlotAction(text="twin"), ["twin."])
    backpropagate(tree, other, 0.6)
    with pytest.raises(ValueError):
        v_q_correlation(tree)


def test_mock_run_vq_agreement_is_strong():
    import sys, pathlib

    sys.path.insert(0, str(pathlib.Path(__file__).parent))
    from test_engine import depth_reward_evaluator, mock_backends, small_mock_config
    from plotsearch.engine import run_search

    tree, _ = run_search(
        ["A lost expedition."], small_mock_config(), mock_backends(3), depth_reward_evaluator
    )
    r = v_q_correlation(tree)
    assert r >= 0.8
    # Direct recomputation from the raw tree.
    vs, qs = [], []
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        edge = tree.parent_edge(nid)
        if node.evaluated_value is None or edge is None or edge.stats.visits == 0:
            continue
        vs.append(node.evaluated_value)
        qs.append(edge.stats.total_value / edge.stats.visits)
    assert r == pytest.approx(float(np.corrcoef(vs, qs)[0, 1]), abs=1e-12)


# -- rubric judging ------------------------------------------------------


def rating_json(score=7, **overrides):
    doc = {dim: score for dim in RUBRIC_DIMENSIONS}
    doc.update(overrides)
    return "Notes on each axis first.\n" + json.dumps(doc)


class ScriptedJudge:
    """Pops canned responses; records how many completions were asked."""

    def __init__(self, responses):
        self.queue = list(responses)
        self.calls = []

    def complete(self, prompt, n=1):
        self.calls.append(n)
        out, self.queue = self.queue[:n], self.queue[n:]
        return out


def test_uniform_sevens_average_to_seven():
    judge = ScriptedJudge([rating_json(7)])
    report = rubric_rate(judge, "A story.", repeats=1)
    assert report.overall == pytest.approx(7.0)
    assert set(report.per_dimension) == set(RUBRIC_DIMENSIONS)
    assert report.misses == 0
    assert report.to_dict()["requested"] == 1


def test_malformed_then_retry_recovers():
    missing = {d: 5 for d in RUBRIC_DIMENSIONS if d != "Pacing"}
    judge = ScriptedJudge(["prose\n" + json.dumps(missing), rating_json(5)])
    report = rubric_rate(judge, "A story.", repeats=1, retries=1)
    assert report.misses == 0
    assert report.overall == pytest.approx(5.0)
    assert judge.calls == [1, 1]


def test_out_of_range_score_is_rejected_then_skipped():
    # Initial batch of two: an 11 and a 4; the 11's retry draws another 11.
    judge = ScriptedJudge([rating_json(11), rating_json(4), rating_json(11)])
    report = rubric_rate(judge, "A story.", repeats=2, retries=1)
    assert report.misses == 1
    assert len(report.ratings) == 1
    assert report.overall == pytest.approx(4.0)


def test_zero_retries_skips_immediately():
    judge = ScriptedJudge(["no json here", rating_json(6)])
    report = rubric_rate(judge, "A story.", repeats=2, retries=0)
    assert report.misses == 1
    assert report.overall == pytest.approx(6.0)


def test_all_malformed_raises():
    judge = ScriptedJudge(["nope", "still no", "never"])
    with pytest.raises(RubricParseError):
        rubric_rate(judge, "A story.", repeats=1, retries=2)


def test_mixed_repeats_average_dimension_wise():
    judge = ScriptedJudge([rating_json(4), rating_json(8, Pacing=2)])
    report = rubric_rate(judge, "A story.", repeats=2)
    assert report.per_dimension["Pacing"] == pytest.approx(3.0)
    assert report.per_dimension["Theme"] == pytest.approx(6.0)


def test_repeats_validation():
    with pytest.raises(ValueError):
        rubric_rate(ScriptedJudge([]), "A story.", repeats=0)


def test_mock_judge_end_to_end():
    from plotsearch.backends import BackendConfig, make_backend

    judge = make_backend(
        BackendConfig(role="judge", endpoint="mock://judge?seed=5", model="m")
    )
    report = rubric_rate(judge, "Bullet one.\nBullet two.", repeats=3)
    assert 1.0 <= report.overall <= 10.0
    assert report.misses == 0


# -- effect sizes --------------------------------------------------------


def test_identical_arms_are_null():
    report = effect_stats([3.0, 4.0, 5.0], [3.0, 4.0, 5.0])
    assert report.cohens_d == 0.0
    assert report.cles == 0.5
    assert report.wilcoxon_p == 1.0
    assert report.wilcoxon_method == "all-zero"
    assert report.note is None


def test_cles_frozen_paper_value():
    assert cles_from_d(0.57) == pytest.approx(0.657, abs=0.005)
    assert cles_from_d(0.0) == pytest.approx(0.5, abs=1e-12)


@given(st.floats(-3, 3), st.floats(0, 3))
def test_cles_monotone_in_d(d, bump):
    assert cles_from_d(d + bump) >= cles_from_d(d)
    assert 0.0 <= cles_from_d(d) <= 1.0


def test_constant_shift_leaves_d_undefined():
    report = effect_stats([1.0, 2.0, 3.0, 4.0], [3.0, 4.0, 5.0, 6.0])
    assert report.cohens_d is None
    assert report.cles is None
    assert "undefined" in report.note
    # The rank test still runs: every diff positive and tied.
    assert report.wilcoxon_statistic == 0.0
    assert report.wilcoxon_p == pytest.approx(2 / 2**4)


def test_effect_stats_validation():
    with pytest.raises(ValueError):
        effect_stats([1.0], [2.0])
    with pytest.raises(ValueError):
        effect_stats([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        effect_stats([1.0, float("inf")], [0.0, 0.0])


def test_small_table_matches_hand_ranks():
    # diffs: 1.2, -0.4, 0.8, 2.0, -0.1, 0.6 -> |d| ranks:
    # 0.1->1, 0.4->2, 0.6->3, 0.8->4, 1.2->5, 2.0->6
    # W+ = 3+4+5+6 = 18, W- = 1+2 = 3.
    a = [0.0] * 6
    b = [1.2, -0.4, 0.8, 2.0, -0.1, 0.6]
    report = effect_stats(a, b)
    assert report.wilcoxon_statistic == 3.0
    assert report.wilcoxon_method == "exact"


def oracle_wilcoxon(diffs):
    """Two-sided exact p by full sign-pattern enumeration."""
    nonzero = [d for d in diffs if d != 0.0]
    if not nonzero:
        return 0.0, 1.0
    mags = sorted(abs(d) for d in nonzero)
    rank_of = {}
    i = 0
    while i < len(mags):
        j = i
        while j + 1 < len(mags) and mags[j + 1] == mags[i]:
            j += 1
        for idx in range(i, j + 1):
            rank_of.setdefault(mags[i], (i + j) / 2 + 1)
        i = j + 1
    ranks = [rank_of[abs(d)] for d in nonzero]
    total = sum(ranks)
    w_plus = sum(r for d, r in zip(nonzero, ranks) if d > 0)
    observed = min(w_plus, total - w_plus)
    hi = total - observed
    eps = 1e-9
    tail = 0
    for signs in itertools.product((0, 1), repeat=len(ranks)):
        w = sum(r for s, r in zip(signs, ranks) if s)
        if w <= observed + eps or w >= hi - eps:
            tail += 1
    return observed, min(1.0, tail / 2 ** len(ranks))


@pytest.mark.parametrize("seed", range(40))
def test_exact_wilcoxon_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 11))
    if seed % 3 == 0:
        diffs = rng.integers(-4, 5, size=n).astype(float)  # ties and zeros
    else:
        diffs = rng.normal(0.3, 1.0, size=n)
    stat_oracle, p_oracle = oracle_wilcoxon(list(diffs))
    stat, p, method = wilcoxon_signed_rank(list(diffs))
    if np.all(diffs == 0.0):
        assert method == "all-zero" and p == 1.0
    else:
        assert method == "exact"
        assert stat == pytest.approx(stat_oracle, abs=1e-9)
        assert p == pytest.approx(p_oracle, abs=1e-12)


def test_normal_approximation_used_above_cutoff():
    rng = np.random.default_rng(7)
    diffs = rng.normal(0.4, 1.0, size=40)
    stat, p, method = wilcoxon_signed_rank(list(diffs))
    assert method == "normal"
    assert 0.0 < p < 1.0
    # Independent transcription of the approximation.
    nz = diffs[diffs != 0]
    mags = np.abs(nz)
    order = np.argsort(mags, kind="stable")
    ranks = np.empty(len(nz))
    i = 0
    while i < len(nz):
        j = i
        while j + 1 < len(nz) and mags[order[j + 1]] == mags[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    w_plus = ranks[nz > 0].sum()
    n = len(nz)
    mu = n * (n + 1) / 4
    var = n * (n + 1) * (2 * n + 1) / 24
    _, t_counts = np.unique(ranks, return_counts=True)
    var -= ((t_counts**3 - t_counts) / 48).sum()
    z = (w_plus - mu - 0.5 * np.sign(w_plus - mu)) / math.sqrt(var)
    from scipy.stats import norm

    assert p == pytest.approx(2 * norm.sf(abs(z)), abs=1e-12)
    assert stat == pytest.approx(min(w_plus, 2 * mu - w_plus), abs=1e-9)


def test_effect_report_shape_for_cli():
    rng = np.random.default_rng(1)
    a = rng.normal(5.0, 1.0, size=12)
    b = a + rng.normal(0.5, 0.4, size=12)
    doc = effect_stats(a, b).to_dict()
    assert set(doc) == {
        "n",
        "mean_a",
        "sd_a",
        "mean_b",
        "sd_b",
        "cohens_d",
        "cles",
        "wilcoxon_statistic",
        "wilcoxon_p",
        "wilcoxon_method",
        "note",
    }
    assert doc["n"] == 12
    assert doc["cohens_d"] > 0

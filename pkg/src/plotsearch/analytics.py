"""Measurement toolkit for finished searches.

Covers the downstream numbers a search campaign is judged by: log-linear
scaling fits of best-value-so-far against iteration count, iterations
needed to clear a relative gain, agreement between direct state values
and backed-up edge means, repeated rubric judging through a backend, and
paired effect-size statistics.

The scaling fit deliberately simplifies: per-experiment ordinary least
squares plus one pooled fit, no random-effects estimation.  Every
emitting surface repeats that caveat (``FIT_MODEL_NOTE``) so the numbers
are not mistaken for a mixed-effects analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm as _norm
from scipy.stats import t as _t

from .rubric import RUBRIC_DIMENSIONS, RubricParseError, build_rating_prompt, parse_rating
from .tree import SearchTree

FIT_MODEL_NOTE = (
    "per-experiment OLS + pooled OLS on (ln k, V_max); "
    "no random-effects estimation"
)

# Optional compute-cost column: nominal accelerator throughput times an
# assumed utilization, expressed in petaflop/s-days.
PF_DAYS_THROUGHPUT_FLOPS = 35e12
PF_DAYS_UTILIZATION = 0.30


# ---------------------------------------------------------------------------
# Log-linear scaling fit


@dataclass(frozen=True)
class GroupFit:
    label: str
    intercept: float
    slope: float
    r_squared: float
    n_points: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "intercept": self.intercept,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class FitResult:
    """Pooled fit plus optional per-experiment fits.

    ``p_positive_slope`` is the one-sided t-test p-value for slope > 0
    on the pooled regression.
    """

    intercept: float
    slope: float
    slope_se: float
    r_squared: float
    p_positive_slope: float
    n_points: int
    groups: tuple[GroupFit, ...] = ()
    model_note: str = FIT_MODEL_NOTE

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "slope": self.slope,
            "slope_se": self.slope_se,
            "r_squared": self.r_squared,
            "p_positive_slope": self.p_positive_slope,
            "n_points": self.n_points,
            "groups": [g.to_dict() for g in self.groups],
            "model_note": self.model_note,
        }


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Slope, intercept, R^2, and slope SE of y on x."""
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    sxy = float(((x - xm) * (y - ym)).sum())
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ssr = float((resid**2).sum())
    sst = float(((y - ym) ** 2).sum())
    if sst <= 0.0:
        r2 = 1.0 if ssr <= 1e-18 else 0.0
    else:
        r2 = 1.0 - ssr / sst
    if n > 2:
        se = math.sqrt((ssr / (n - 2)) / sxx)
    else:
        se = float("nan")
    return slope, intercept, r2, se


def _check_experiment(points: Sequence[tuple[float, float]], label: str) -> None:
    if len(points) < 3:
        raise ValueError(f"{label}: need at least 3 points, got {len(points)}")
    ks = [k for k, _ in points]
    if any(k < 1 for k in ks):
        raise ValueError(f"{label}: iteration counts must be >= 1")
    if len(set(ks)) < 3:
        raise ValueError(f"{label}: need at least 3 distinct iteration counts")
    if any(not math.isfinite(v) for _, v in points):
        raise ValueError(f"{label}: non-finite value")


def loglinear_fit(series, labels: Optional[Sequence[str]] = None) -> FitResult:
    """Fit best-value-so-far against the log of the iteration count.

    ``series`` is either one flat list of (k, v_max) points or a list of
    such lists, one per experiment.  Grouped input yields per-experiment
    fits alongside the pooled one; each experiment needs at least three
    points with distinct k >= 1.
    """
    if not series:
        raise ValueError("empty series")
    grouped = not (
        isinstance(series[0], (tuple, list))
        and len(series[0]) == 2
        and isinstance(series[0][0], (int, float, np.integer, np.floating))
    )
    experiments = [list(map(tuple, exp)) for exp in series] if grouped else [list(map(tuple, series))]
    if labels is not None and len(labels) != len(experiments):
        raise ValueError("labels length must match experiment count")

    group_fits = []
    for i, exp in enumerate(experiments):
        label = labels[i] if labels is not None else f"exp{i}"
        _check_experiment(exp, label)
        x = np.log([k for k, _ in exp])
        y = np.array([v for _, v in exp], dtype=float)
        slope, intercept, r2, _ = _ols(x, y)
        group_fits.append(GroupFit(label, intercept, slope, r2, len(exp)))

    pooled = [pt for exp in experiments for pt in exp]
    x = np.log([k for k, _ in pooled])
    y = np.array([v for _, v in pooled], dtype=float)
    slope, intercept, r2, se = _ols(x, y)
    if se == 0.0:
        p_pos = 0.0 if slope > 0 else 1.0
    elif math.isnan(se):
        p_pos = float("nan")
    else:
        p_pos = float(_t.sf(slope / se, df=len(pooled) - 2))
    return FitResult(
        intercept=intercept,
        slope=slope,
        slope_se=se,
        r_squared=r2,
        p_positive_slope=p_pos,
        n_points=len(pooled),
        groups=tuple(group_fits) if grouped else (),
    )


def pf_days(
    wall_seconds: float,
    throughput_flops: float = PF_DAYS_THROUGHPUT_FLOPS,
    utilization: float = PF_DAYS_UTILIZATION,
) -> float:
    """Nominal compute cost of a run in petaflop/s-days."""
    if wall_seconds < 0:
        raise ValueError("wall_seconds must be >= 0")
    return wall_seconds * throughput_flops * utilization / (1e15 * 86400.0)


# ---------------------------------------------------------------------------
# Iterations to reach a relative gain


def iterations_to_gain(
    series: Sequence[tuple[float, float]], gain: float, baseline_k: int = 8
) -> Optional[int]:
    """Smallest k whose value reaches (1 + gain) times the baseline.

    The trajectory is sorted by k; the baseline iteration must be
    present exactly.  Returns None when the target is never reached.
    """
    if not math.isfinite(gain):
        raise ValueError("gain must be finite")
    points = sorted((int(k), float(v)) for k, v in series)
    baseline = [v for k, v in points if k == baseline_k]
    if not baseline:
        raise ValueError(f"baseline k={baseline_k} absent from trajectory")
    target = (1.0 + gain) * baseline[0]
    for k, v in points:
        if v >= target:
            return k
    return None


def speedup_ratio(
    slow_series: Sequence[tuple[float, float]],
    fast_series: Sequence[tuple[float, float]],
    gain: float,
    baseline_k: int = 8,
) -> Optional[float]:
    """How many times fewer iterations the second trajectory needs.

    Each trajectory is measured against its own baseline.  None when
    either never reaches the target.
    """
    k_slow = iterations_to_gain(slow_series, gain, baseline_k)
    k_fast = iterations_to_gain(fast_series, gain, baseline_k)
    if k_slow is None or k_fast is None:
        return None
    return k_slow / k_fast


# ---------------------------------------------------------------------------
# Agreement between direct values and backed-up edge means


def v_q_correlation(tree: SearchTree) -> float:
    """Pearson r between evaluated child values and incoming-edge means.

    Pairs one (V, Q) sample per evaluated non-root node whose incoming
    edge has been visited.  Needs at least two pairs and nonzero
    variance on both coordinates.
    """
    vs, qs = [], []
    for nid in sorted(tree.nodes):
        value = tree.nodes[nid].evaluated_value
        edge = tree.parent_edge(nid)
        if value is None or edge is None or edge.stats.visits == 0:
            continue
        vs.append(value)
        qs.append(edge.stats.mean_value)
    if len(vs) < 2:
        raise ValueError(f"need >= 2 evaluated expansions, found {len(vs)}")
    v = np.asarray(vs)
    q = np.asarray(qs)
    if float(v.std()) == 0.0 or float(q.std()) == 0.0:
        raise ValueError("zero variance in V or Q; correlation undefined")
    return float(np.corrcoef(v, q)[0, 1])


# ---------------------------------------------------------------------------
# Repeated rubric judging


@dataclass(frozen=True)
class RubricReport:
    ratings: tuple[dict, ...]
    per_dimension: dict
    overall: float
    requested: int
    misses: int

    def to_dict(self) -> dict:
        return {
            "ratings": list(self.ratings),
            "per_dimension": dict(self.per_dimension),
            "overall": self.overall,
            "requested": self.requested,
            "misses": self.misses,
        }


def rubric_rate(judge, story_text: str, repeats: int = 1, retries: int = 1) -> RubricReport:
    """Rate one story ``repeats`` times through a judge backend.

    Each malformed response is retried up to ``retries`` times with a
    fresh single completion, then skipped; skips are tallied as misses.
    Raises RubricParseError only when every repeat stays malformed.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if retries < 0:
        raise ValueError("retries must be >= 0")
    prompt = build_rating_prompt(story_text)
    ratings = []
    misses = 0
    for response in judge.complete(prompt, repeats):
        rating = None
        for attempt in range(retries + 1):
            try:
                rating = parse_rating(response)
                break
            except RubricParseError:
                if attempt < retries:
                    response = judge.complete(prompt, 1)[0]
        if rating is None:
            misses += 1
        else:
            ratings.append(rating)
    if not ratings:
        raise RubricParseError(f"all {repeats} repeats malformed")
    per_dim = {
        dim: float(np.mean([r[dim] for r in ratings])) for dim in RUBRIC_DIMENSIONS
    }
    overall = float(np.mean(list(per_dim.values())))
    return RubricReport(
        ratings=tuple(ratings),
        per_dimension=per_dim,
        overall=overall,
        requested=repeats,
        misses=misses,
    )


# ---------------------------------------------------------------------------
# Paired effect sizes


@dataclass(frozen=True)
class EffectReport:
    """Paired comparison of two score arms, differences taken b - a."""

    n: int
    mean_a: float
    sd_a: float
    mean_b: float
    sd_b: float
    cohens_d: Optional[float]
    cles: Optional[float]
    wilcoxon_statistic: float
    wilcoxon_p: float
    wilcoxon_method: str
    note: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_a": self.mean_a,
            "sd_a": self.sd_a,
            "mean_b": self.mean_b,
            "sd_b": self.sd_b,
            "cohens_d": self.cohens_d,
            "cles": self.cles,
            "wilcoxon_statistic": self.wilcoxon_statistic,
            "wilcoxon_p": self.wilcoxon_p,
            "wilcoxon_method": self.wilcoxon_method,
            "note": self.note,
        }


_EXACT_LIMIT = 25


def _signed_ranks(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |diffs| and the sign mask (zeros already dropped)."""
    magnitudes = np.abs(diffs)
    order = np.argsort(magnitudes, kind="stable")
    ranks = np.empty(len(diffs))
    i = 0
    while i < len(diffs):
        j = i
        while j + 1 < len(diffs) and magnitudes[order[j + 1]] == magnitudes[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks, diffs > 0


def _wilcoxon_exact(ranks: np.ndarray, w_plus: float) -> tuple[float, float]:
    """Exact conditional two-sided p for the signed-rank statistic.

    Works on doubled ranks so tied (half-integer) average ranks stay on
    the integer lattice; the distribution is built by subset-sum DP,
    which equals full sign-pattern enumeration.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled:
        for s in range(total - r, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
    w_minus = total / 2.0 - w_plus
    statistic = min(w_plus, w_minus)
    w_lo = int(round(2 * statistic))
    w_hi = total - w_lo
    tail = sum(counts[: w_lo + 1]) + sum(counts[w_hi:])
    p = tail / float(2 ** len(doubled))
    return statistic, min(p, 1.0)


def _wilcoxon_normal(ranks: np.ndarray, w_plus: float) -> tuple[float, float]:
    """Normal approximation with tie correction and continuity correction."""
    n = len(ranks)
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    if var <= 0.0:
        return min(w_plus, 2 * mu - w_plus), 1.0
    delta = w_plus - mu
    z = (delta - 0.5 * np.sign(delta)) / math.sqrt(var) if delta != 0 else 0.0
    p = 2.0 * float(_norm.sf(abs(z)))
    return min(w_plus, 2 * mu - w_plus), min(p, 1.0)


def wilcoxon_signed_rank(diffs: Sequence[float]) -> tuple[float, float, str]:
    """(statistic, two-sided p, method) for paired differences.

    Zero differences are dropped.  Exact conditional distribution up to
    25 nonzero differences, normal approximation beyond.  The statistic
    is the smaller of the positive- and negative-rank sums.
    """
    nonzero = np.asarray([d for d in diffs if d != 0.0], dtype=float)
    if len(nonzero) == 0:
        return 0.0, 1.0, "all-zero"
    ranks, positive = _signed_ranks(nonzero)
    w_plus = float(ranks[positive].sum())
    if len(nonzero) <= _EXACT_LIMIT:
        statistic, p = _wilcoxon_exact(ranks, w_plus)
        return statistic, p, "exact"
    statistic, p = _wilcoxon_normal(ranks, w_plus)
    return statistic, p, "normal"


def cles_from_d(d: float) -> float:
    """Probability a random draw from the higher arm beats the other."""
    return float(_norm.cdf(d / math.sqrt(2.0)))


def effect_stats(arm_a: Sequence[float], arm_b: Sequence[float]) -> EffectReport:
    """Paired comparison of two equal-length score lists (diff = b - a).

    Identical arms report d = 0 and a chance-level CLES; zero diff
    variance around a nonzero mean leaves d undefined and says so in
    the note.
    """
    a = np.asarray(arm_a, dtype=float)
    b = np.asarray(arm_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("arms must be equal-length 1-d sequences")
    if len(a) < 2:
        raise ValueError("need at least 2 pairs")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("scores must be finite")
    diffs = b - a
    sd_diff = float(diffs.std(ddof=1))
    note = None
    if np.all(diffs == 0.0):
        d: Optional[float] = 0.0
        cles: Optional[float] = 0.5
    elif sd_diff == 0.0:
        d = None
        cles = None
        note = "zero diff variance with nonzero mean; d undefined"
    else:
        d = float(diffs.mean()) / sd_diff
        cles = cles_from_d(d)
    statistic, p, method = wilcoxon_signed_rank(diffs)
    return EffectReport(
        n=len(a),
        mean_a=float(a.mean()),
        sd_a=float(a.std(ddof=1)),
        mean_b=float(b.mean()),
        sd_b=float(b.std(ddof=1)),
        cohens_d=d,
        cles=cles,
        wilcoxon_statistic=statistic,
        wilcoxon_p=p,
        wilcoxon_method=method,
        note=note,
    )

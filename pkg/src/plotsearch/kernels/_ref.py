"""Reference numpy implementations of the numeric kernels.

These are the fallback twins of the compiled module ``_fastk``.  Both
implementations must agree to float tolerance; ``tests/test_kernels.py``
checks parity whenever the compiled module is importable.

All functions take and return plain numpy arrays (float64) and never
mutate their inputs.
"""

from __future__ import annotations

import numpy as np

LN2 = float(np.log(2.0))


def interest_curve(surprisal, center, width):
    """Gaussian interest response exp(-(s - center)^2 / (2 width^2))."""
    s = np.asarray(surprisal, dtype=np.float64)
    d = s - center
    return np.exp(-(d * d) / (2.0 * width * width))


def band_fraction(surprisal, center, width):
    """Fraction of values within one width of the center."""
    s = np.asarray(surprisal, dtype=np.float64)
    if s.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(s - center) <= width)) / s.size


def moving_average(series, window):
    """Centered-origin moving average: out[i] = mean(series[i : i + window]).

    Output length is len(series) - window + 1; window must not exceed the
    series length.
    """
    x = np.asarray(series, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    if x.size < window:
        raise ValueError("series shorter than window")
    c = np.cumsum(np.concatenate(([0.0], x)))
    return (c[window:] - c[:-window]) / window


def peak_indices(series, prominence):
    """Indices of local maxima exceeding both neighbors by at least prominence.

    Endpoints have only one neighbor and are never peaks.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 3:
        return np.empty(0, dtype=np.int64)
    mid = x[1:-1]
    keep = (mid - x[:-2] >= prominence) & (mid - x[2:] >= prominence)
    return np.nonzero(keep)[0].astype(np.int64) + 1


def pairwise_cosine_mean_std(vectors):
    """Mean and population std of cosine similarity over all unordered pairs.

    Requires at least two vectors; rows are L2-normalized internally so
    callers may pass raw embeddings.  Cosines are clamped to [-1, 1] and
    snapped to the bound when within 1e-12, so identical rows score an
    exact 1.0.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 2:
        raise ValueError("need at least two vectors")
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm vector")
    u = v / norms[:, None]
    g = u @ u.T
    iu = np.triu_indices(v.shape[0], k=1)
    cos = np.clip(g[iu], -1.0, 1.0)
    cos = np.where(np.abs(cos) >= 1.0 - 1e-12, np.sign(cos), cos)
    return float(np.mean(cos)), float(np.std(cos))


def ucb_scores(q, n_edge, n_parent, c):
    """Vectorized upper-confidence scores Q + c sqrt(ln N(s) / N(s,a)).

    Edges with zero visits get +inf so they always win selection.
    n_parent is clamped to >= 1 before the log.
    """
    qv = np.asarray(q, dtype=np.float64)
    nv = np.asarray(n_edge, dtype=np.float64)
    n_s = max(float(n_parent), 1.0)
    out = np.full(qv.shape, np.inf, dtype=np.float64)
    visited = nv > 0
    out[visited] = qv[visited] + c * np.sqrt(np.log(n_s) / nv[visited])
    return out

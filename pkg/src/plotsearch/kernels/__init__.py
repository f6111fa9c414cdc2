"""Numeric kernels with a compiled fast path and a numpy fallback.

The compiled extension ``_fastk`` is optional: when it fails to import
(no compiler at install time, mismatched platform), the pure numpy twin
``_ref`` serves the same functions.  ``IMPLEMENTATION`` records which one
was picked so benchmarks and bug reports can tell them apart.
"""

from __future__ import annotations

try:
    from . import _fastk as _impl

    IMPLEMENTATION = "compiled"
except ImportError:  # pragma: no cover - depends on the build environment
    from . import _ref as _impl

    IMPLEMENTATION = "numpy"

from ._ref import LN2

interest_curve = _impl.interest_curve
band_fraction = _impl.band_fraction
moving_average = _impl.moving_average
peak_indices = _impl.peak_indices
pairwise_cosine_mean_std = _impl.pairwise_cosine_mean_std
ucb_scores = _impl.ucb_scores

__all__ = [
    "IMPLEMENTATION",
    "LN2",
    "interest_curve",
    "band_fraction",
    "moving_average",
    "peak_indices",
    "pairwise_cosine_mean_std",
    "ucb_scores",
]

"""Paired statistics for episode metric comparisons.

Wilcoxon signed-rank (exact signed-rank distribution for small n, normal
approximation with continuity correction above) and Welch's unequal-variance
t-test, both two-sided.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import stdtr

from .errors import InsufficientDataError

EXACT_MAX_N = 25


def _ranks_with_ties(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks, w_plus):
    """Exact p over all sign assignments via half-rank convolution."""
    scaled = np.rint(2.0 * np.asarray(ranks)).astype(int)
    total = scaled.sum()
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in scaled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[:len(dist) - r]
        dist = 0.5 * (dist + shifted)
    w = int(round(2.0 * w_plus))
    lo = min(w, total - w)
    p = dist[:lo + 1].sum() + dist[total - lo:].sum()
    if lo == total - lo:
        p -= dist[lo]
    return float(min(p, 1.0))


def wilcoxon_signed_rank(a, b):
    """Two-sided paired Wilcoxon test.

    Zero differences are excluded. If every difference is zero the samples
    are indistinguishable and p is defined as 1. n <= 25 uses the exact
    signed-rank distribution; larger n the normal approximation with
    continuity correction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) != len(b) or len(a) < 6:
        raise InsufficientDataError("need paired samples of equal length >= 6")
    d = a - b
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        return {"statistic": 0.0, "p": 1.0, "n_used": 0}
    ranks = _ranks_with_ties(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        p = _exact_two_sided_p(ranks, w_plus)
    else:
        mean = n * (n + 1) / 4.0
        sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0)
        z = (w_plus - mean - 0.5 * math.copysign(1.0, w_plus - mean)) / sd
        p = 2.0 * 0.5 * math.erfc(abs(z) / math.sqrt(2.0))
        p = min(p, 1.0)
    return {"statistic": w_plus, "p": p, "n_used": n}


def welch_t_test(a, b):
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("need at least 2 samples per group")
    na, nb = len(a), len(b)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        return {"statistic": 0.0, "p": 1.0, "dof": float(na + nb - 2)}
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    dof = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * (1.0 - stdtr(dof, abs(t)))
    return {"statistic": float(t), "p": float(p), "dof": float(dof)}


def stats_compare(paired_a, paired_b):
    """Summary comparison of two paired metric samples."""
    a = np.asarray(paired_a, dtype=float)
    b = np.asarray(paired_b, dtype=float)
    wil = wilcoxon_signed_rank(a, b)
    welch = welch_t_test(a, b)
    return {
        "wilcoxon_p": wil["p"],
        "welch_t_p": welch["p"],
        "medians": (float(np.median(a)), float(np.median(b))),
        "means": (float(a.mean()), float(b.mean())),
    }

"""Inter-annotator agreement: Fleiss' kappa and ordinal Krippendorff's alpha."""
from __future__ import annotations

from collections import Counter
from typing import Mapping, Sequence

import numpy as np


class DegenerateAgreement(ValueError):
    """Chance agreement leaves no room for disagreement, so the ratio is undefined."""


def fleiss_kappa(counts: Sequence[Sequence[int]] | np.ndarray) -> float:
    """Fleiss' kappa over an ``N x L`` matrix of per-item category counts.

    Sums are taken over Python integers so the result does not depend on the
    order of rows or columns.
    """
    rows = [[int(v) for v in row] for row in counts]
    if not rows:
        raise ValueError("empty count matrix")
    if any(v < 0 for row in rows for v in row):
        raise ValueError("negative judgment count")
    totals = {sum(row) for row in rows}
    if len(totals) != 1:
        raise ValueError(f"rows have unequal judgment totals: {sorted(totals)}")
    n = totals.pop()
    if n < 2:
        raise ValueError("need at least 2 judgments per item")
    N = len(rows)

    agree = sum(v * (v - 1) for row in rows for v in row)
    p_bar = agree / (N * n * (n - 1))
    col = [sum(col) for col in zip(*rows)]
    p_e = sum(c * c for c in col) / (N * n) ** 2
    if sum(c * c for c in col) == (N * n) ** 2:
        if agree == N * n * (n - 1):
            return 1.0
        raise DegenerateAgreement("all judgments fall in one category")
    return (p_bar - p_e) / (1.0 - p_e)


def _ordinal_delta2(marginals: Mapping[int, float], values: Sequence[int]) -> np.ndarray:
    """Squared ordinal distance between every pair of the sorted ``values``."""
    k = len(values)
    n = np.array([marginals.get(v, 0.0) for v in values])
    cum = np.concatenate([[0.0], np.cumsum(n)])
    d = np.zeros((k, k))
    for a in range(k):
        for b in range(a, k):
            dist = cum[b + 1] - cum[a] - (n[a] + n[b]) / 2.0
            d[a, b] = d[b, a] = dist * dist
    return d


def krippendorff_alpha_ordinal(judgments: Mapping[str, Mapping[str, int]]) -> float:
    """Ordinal Krippendorff's alpha for ``item -> annotator -> rating``.

    Items with fewer than two ratings are not pairable and are ignored.
    """
    units = [list(r.values()) for r in judgments.values() if len(r) >= 2]
    if not units:
        raise ValueError("no pairable values (every item has fewer than 2 ratings)")
    lo = min(min(u) for u in units)
    hi = max(max(u) for u in units)
    values = list(range(lo, hi + 1))
    pos = {v: i for i, v in enumerate(values)}
    k = len(values)

    coincidence = np.zeros((k, k))
    for unit in units:
        m = len(unit)
        c = sorted(Counter(unit).items())
        for a, na in c:
            for b, nb in c:
                pairs = na * (na - 1) if a == b else na * nb
                coincidence[pos[a], pos[b]] += pairs / (m - 1)
    marg = coincidence.sum(axis=1)
    total = marg.sum()
    delta2 = _ordinal_delta2({v: marg[pos[v]] for v in values}, values)

    d_o = float((coincidence * delta2).sum()) / total
    d_e = float((np.outer(marg, marg) * delta2).sum()) / (total * (total - 1))
    if d_e == 0.0:
        if d_o == 0.0:
            return 1.0
        raise DegenerateAgreement("expected disagreement is zero")
    return 1.0 - d_o / d_e


def count_matrix(item_labels: Mapping[str, Sequence[int]], n_labels: int) -> np.ndarray:
    """Per-item category counts from lists of label indices."""
    out = np.zeros((len(item_labels), n_labels), dtype=int)
    for i, item in enumerate(sorted(item_labels)):
        for lab in item_labels[item]:
            out[i, lab] += 1
    return out

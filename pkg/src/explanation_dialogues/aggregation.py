"""EM consolidation of multi-annotator labels under an item-response model.

Each item has a hidden true label drawn uniformly from ``L`` labels.  Annotator
``j`` either copies the true label (probability ``competence[j]``) or emits a
label from its own spam distribution.  EM recovers the posterior over true
labels together with each annotator's competence.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .taxonomy import Dimension


@dataclass(frozen=True)
class AnnotationSet:
    item_id: str
    dimension: Dimension
    judgments: Mapping[str, int]


@dataclass(frozen=True)
class AnnotatorModel:
    competence: dict[str, float]
    spam_distribution: dict[str, np.ndarray]


@dataclass(frozen=True)
class AggregatedLabels:
    posterior: dict[str, np.ndarray]
    hard_label: dict[str, int]
    log_likelihood_trace: list[float]


@dataclass(frozen=True)
class EMConfig:
    seed: int
    restarts: int = 10
    iterations: int = 50
    smoothing: float | None = None  # None -> 0.1 / L

    def smoothing_for(self, n_labels: int) -> float:
        return 0.1 / n_labels if self.smoothing is None else self.smoothing


@dataclass
class _Data:
    items: list[str]
    annotators: list[str]
    item_idx: np.ndarray
    ann_idx: np.ndarray
    label: np.ndarray
    n_labels: int


def _prepare(annotations: Sequence[AnnotationSet], n_labels: int | None) -> _Data:
    if not annotations:
        raise ValueError("no annotation sets given")
    dims = {a.dimension for a in annotations}
    if len(dims) != 1:
        raise ValueError(f"annotation sets span several dimensions: {sorted(d.value for d in dims)}")
    dim = dims.pop()
    L = dim.size if n_labels is None else n_labels
    if L < 2:
        raise ValueError(f"need at least 2 labels, got {L}")

    items = []
    seen = set()
    for a in annotations:
        if a.item_id in seen:
            raise ValueError(f"item {a.item_id!r} given twice")
        seen.add(a.item_id)
        if not a.judgments:
            raise ValueError(f"item {a.item_id!r} has no judgments")
        items.append(a.item_id)
    annotators = sorted({j for a in annotations for j in a.judgments})
    ann_pos = {j: k for k, j in enumerate(annotators)}

    item_idx, ann_idx, labels = [], [], []
    for i, a in enumerate(annotations):
        for annotator in sorted(a.judgments):
            lab = a.judgments[annotator]
            if not 0 <= lab < L:
                raise ValueError(f"item {a.item_id!r}: label index {lab} outside 0..{L - 1}")
            item_idx.append(i)
            ann_idx.append(ann_pos[annotator])
            labels.append(lab)
    return _Data(
        items=items,
        annotators=annotators,
        item_idx=np.asarray(item_idx),
        ann_idx=np.asarray(ann_idx),
        label=np.asarray(labels),
        n_labels=L,
    )


def _e_step(d: _Data, theta: np.ndarray, xi: np.ndarray):
    L = d.n_labels
    th = theta[d.ann_idx]
    spam = (1.0 - th) * xi[d.ann_idx, d.label]
    # P(judgment | true label t), shape (M, L)
    lik = np.repeat(spam[:, None], L, axis=1)
    lik[np.arange(len(d.label)), d.label] += th
    log_joint = np.full((len(d.items), L), -np.log(L))
    np.add.at(log_joint, d.item_idx, np.log(lik))
    norm = logsumexp(log_joint, axis=1)
    posterior = np.exp(log_joint - norm[:, None])
    posterior /= posterior.sum(axis=1, keepdims=True)
    p_copy = posterior[d.item_idx, d.label] * th / (th + spam)
    return posterior, p_copy, float(norm.sum())


def _objective(loglik: float, theta: np.ndarray, xi: np.ndarray, s: float) -> float:
    # log-likelihood plus the log of the pseudo-count prior implied by smoothing
    if s == 0:
        return loglik
    return loglik + s * float(np.log(theta).sum() + np.log1p(-theta).sum() + np.log(xi).sum())


def _m_step(d: _Data, p_copy: np.ndarray, s: float):
    A, L = len(d.annotators), d.n_labels
    copies = np.bincount(d.ann_idx, weights=p_copy, minlength=A)
    totals = np.bincount(d.ann_idx, minlength=A).astype(float)
    theta = (copies + s) / (totals + 2 * s)
    spam_counts = np.zeros((A, L))
    np.add.at(spam_counts, (d.ann_idx, d.label), 1.0 - p_copy)
    xi = spam_counts + s
    xi /= xi.sum(axis=1, keepdims=True)
    # without smoothing a pure copier has no spam mass at all
    empty = ~np.isfinite(xi).all(axis=1)
    xi[empty] = 1.0 / L
    return np.clip(theta, 1e-12, 1 - 1e-12), np.clip(xi, 1e-300, None)


def _run(d: _Data, rng: np.random.Generator, iterations: int, s: float):
    A, L = len(d.annotators), d.n_labels
    theta = rng.uniform(0.3, 0.9, size=A)
    xi = rng.dirichlet(np.ones(L), size=A)
    trace = []
    for _ in range(iterations):
        posterior, p_copy, ll = _e_step(d, theta, xi)
        trace.append(_objective(ll, theta, xi, s))
        theta, xi = _m_step(d, p_copy, s)
    posterior, _, ll = _e_step(d, theta, xi)
    trace.append(_objective(ll, theta, xi, s))
    return theta, xi, posterior, trace


def hard_label(posterior: np.ndarray) -> int:
    """Most probable label; exact ties go to the lowest label index."""
    best = float(np.max(posterior))
    return int(np.flatnonzero(posterior == best)[0])


def aggregate_em(
    annotations: Sequence[AnnotationSet],
    config: EMConfig,
    n_labels: int | None = None,
) -> tuple[AggregatedLabels, AnnotatorModel]:
    """Consolidate judgments of one dimension; best of ``config.restarts`` EM runs.

    ``n_labels`` overrides the label-set size implied by the dimension.
    """
    d = _prepare(annotations, n_labels)
    s = config.smoothing_for(d.n_labels)
    if config.restarts < 1 or config.iterations < 1:
        raise ValueError("restarts and iterations must be >= 1")

    best = None
    for child in np.random.SeedSequence(config.seed).spawn(config.restarts):
        run = _run(d, np.random.default_rng(child), config.iterations, s)
        # strict '>' keeps the lowest restart index on ties
        if best is None or run[3][-1] > best[3][-1]:
            best = run
    theta, xi, posterior, trace = best

    labels = AggregatedLabels(
        posterior={item: posterior[i].copy() for i, item in enumerate(d.items)},
        hard_label={item: hard_label(posterior[i]) for i, item in enumerate(d.items)},
        log_likelihood_trace=trace,
    )
    model = AnnotatorModel(
        competence={a: float(theta[k]) for k, a in enumerate(d.annotators)},
        spam_distribution={a: xi[k].copy() for k, a in enumerate(d.annotators)},
    )
    return labels, model


def majority_vote(annotations: Sequence[AnnotationSet], n_labels: int) -> dict[str, int]:
    """Plurality label per item, ties to the lowest label index."""
    out = {}
    for a in annotations:
        counts = np.bincount(list(a.judgments.values()), minlength=n_labels)
        out[a.item_id] = int(np.argmax(counts))
    return out


def median_label(annotations: Sequence[AnnotationSet]) -> dict[str, int]:
    """Lower median of the judged label indices (ordinal consolidation)."""
    out = {}
    for a in annotations:
        if not a.judgments:
            raise ValueError(f"item {a.item_id!r} has no judgments")
        vals = sorted(a.judgments.values())
        out[a.item_id] = vals[(len(vals) - 1) // 2]
    return out

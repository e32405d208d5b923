"""Linear-chain CRF over sparse turn features.

A label sequence ``y`` of a length-``n`` dialogue scores

    start[y0] + sum_t emit[t, y_t] + sum_t trans[y_{t-1}, y_t] + stop[y_{n-1}]

where ``emit = X @ emission`` and ``X`` is the ``n x F`` feature matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from ..ingest import Dialogue
from ..io import atomic_write_text
from ..taxonomy import Dimension
from .features import FeatureVector, dialogue_features

FORMAT = "explanation-dialogues/crf"
VERSION = 1


class NonFiniteScore(ValueError):
    pass


@dataclass(eq=False)
class CrfModel:
    dimension: Dimension
    labels: tuple[str, ...]
    feature_ids: tuple[int, ...]
    emission: np.ndarray
    transition: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    l2: float = 0.1
    _index: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._index = {f: i for i, f in enumerate(self.feature_ids)}
        L, F = len(self.labels), len(self.feature_ids)
        if self.emission.shape != (F, L) or self.transition.shape != (L, L):
            raise ValueError("weight shapes do not match labels/features")
        if self.start.shape != (L,) or self.stop.shape != (L,):
            raise ValueError("start/stop weights must have one entry per label")

    @classmethod
    def zeros(cls, dimension: Dimension, feature_ids: Sequence[int], l2: float = 0.1,
              labels: Sequence[str] | None = None) -> "CrfModel":
        labels = tuple(dimension.codes if labels is None else labels)
        L, F = len(labels), len(feature_ids)
        return cls(dimension, labels, tuple(feature_ids), np.zeros((F, L)), np.zeros((L, L)),
                   np.zeros(L), np.zeros(L), l2)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    # flat parameter view, used by the optimiser and gradient checks
    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.emission.ravel(), self.transition.ravel(), self.start, self.stop])

    def set_vector(self, vec: np.ndarray) -> None:
        F, L = self.emission.shape
        parts = np.split(np.asarray(vec, dtype=float), np.cumsum([F * L, L * L, L]))
        self.emission = parts[0].reshape(F, L).copy()
        self.transition = parts[1].reshape(L, L).copy()
        self.start = parts[2].copy()
        self.stop = parts[3].copy()

    def encode(self, features: Sequence[FeatureVector]) -> sparse.csr_matrix:
        """Feature matrix of a sequence; features unknown to the model are dropped."""
        rows, cols, vals = [], [], []
        for t, fv in enumerate(features):
            for fid, v in fv.items():
                j = self._index.get(fid)
                if j is not None:
                    rows.append(t)
                    cols.append(j)
                    vals.append(v)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(features), len(self.feature_ids)))

    def emissions(self, X: sparse.csr_matrix) -> np.ndarray:
        E = np.asarray(X @ self.emission)
        if not (np.isfinite(E).all() and np.isfinite(self.transition).all()
                and np.isfinite(self.start).all() and np.isfinite(self.stop).all()):
            raise NonFiniteScore("non-finite CRF score")
        return E

    def predict_labels(self, dialogue: Dialogue) -> list[str]:
        path = viterbi_decode(self, dialogue_features(dialogue))
        return [self.labels[i] for i in path]

    def to_json(self) -> str:
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "dimension": self.dimension.value,
            "labels": list(self.labels),
            "l2": self.l2,
            "features": [f"{f:016x}" for f in self.feature_ids],
            "emission": self.emission.tolist(),
            "transition": self.transition.tolist(),
            "start": self.start.tolist(),
            "stop": self.stop.tolist(),
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "CrfModel":
        doc = json.loads(text)
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise ValueError(f"not a version-{VERSION} CRF model file")
        L = len(doc["labels"])
        return cls(
            dimension=Dimension.parse(doc["dimension"]),
            labels=tuple(doc["labels"]),
            feature_ids=tuple(int(f, 16) for f in doc["features"]),
            emission=np.array(doc["emission"], dtype=float).reshape(-1, L),
            transition=np.array(doc["transition"], dtype=float),
            start=np.array(doc["start"], dtype=float),
            stop=np.array(doc["stop"], dtype=float),
            l2=float(doc["l2"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "CrfModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray:
    # scipy's version carries array-API overhead that dominates these tiny arrays
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out.squeeze() if axis is None else out.squeeze(axis)


def _as_matrix(model: CrfModel, seq) -> sparse.csr_matrix:
    if sparse.issparse(seq):
        return sparse.csr_matrix(seq)
    if len(seq) < 1:
        raise ValueError("empty sequence")
    return model.encode(seq)


def _forward(model: CrfModel, E: np.ndarray) -> tuple[np.ndarray, float]:
    n = E.shape[0]
    alpha = np.empty_like(E)
    alpha[0] = model.start + E[0]
    for t in range(1, n):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + model.transition, axis=0) + E[t]
    return alpha, float(logsumexp(alpha[-1] + model.stop))


def _backward(model: CrfModel, E: np.ndarray) -> np.ndarray:
    n = E.shape[0]
    beta = np.empty_like(E)
    beta[-1] = model.stop
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(model.transition + (E[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def crf_log_partition(model: CrfModel, seq) -> float:
    """log Z of a feature sequence (list of feature vectors or a feature matrix)."""
    X = _as_matrix(model, seq)
    if X.shape[0] < 1:
        raise ValueError("empty sequence")
    return _forward(model, model.emissions(X))[1]


def marginals(model: CrfModel, seq) -> np.ndarray:
    """Per-position label marginals, shape ``(n, L)``."""
    X = _as_matrix(model, seq)
    E = model.emissions(X)
    alpha, logz = _forward(model, E)
    beta = _backward(model, E)
    return np.exp(alpha + beta - logz)


def sequence_score(model: CrfModel, seq, labels: Sequence[int]) -> float:
    E = model.emissions(_as_matrix(model, seq))
    y = np.asarray(labels)
    score = model.start[y[0]] + model.stop[y[-1]] + E[np.arange(len(y)), y].sum()
    score += model.transition[y[:-1], y[1:]].sum()
    return float(score)


@dataclass
class CrfGradient:
    emission: np.ndarray
    transition: np.ndarray
    start: np.ndarray
    stop: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.emission.ravel(), self.transition.ravel(), self.start, self.stop])


def data_nll_and_gradient(model: CrfModel, X: sparse.csr_matrix, gold: Sequence[int]) -> tuple[float, CrfGradient]:
    """Unregularised negative log-likelihood of one sequence and its gradient."""
    y = np.asarray(gold)
    n, L = X.shape[0], model.n_labels
    if len(y) != n:
        raise ValueError(f"{len(y)} gold labels for a sequence of length {n}")
    if n < 1:
        raise ValueError("empty sequence")
    if ((y < 0) | (y >= L)).any():
        raise ValueError("gold label index out of range")
    E = model.emissions(X)
    alpha, logz = _forward(model, E)
    beta = _backward(model, E)
    marg = np.exp(alpha + beta - logz)

    gold_score = model.start[y[0]] + model.stop[y[-1]] + E[np.arange(n), y].sum()
    gold_score += model.transition[y[:-1], y[1:]].sum()

    resid = marg.copy()
    resid[np.arange(n), y] -= 1.0
    g_emit = np.asarray(X.T @ resid)

    g_trans = np.zeros((L, L))
    for t in range(n - 1):
        pair = alpha[t][:, None] + model.transition + (E[t + 1] + beta[t + 1])[None, :] - logz
        g_trans += np.exp(pair)
    np.add.at(g_trans, (y[:-1], y[1:]), -1.0)

    g_start = marg[0].copy()
    g_start[y[0]] -= 1.0
    g_stop = marg[-1].copy()
    g_stop[y[-1]] -= 1.0
    return logz - float(gold_score), CrfGradient(g_emit, g_trans, g_start, g_stop)


def crf_neg_log_likelihood_and_gradient(model: CrfModel, seq, gold: Sequence[int]) -> tuple[float, CrfGradient]:
    """NLL + (l2/2)|w|^2 of one sequence and its gradient."""
    nll, g = data_nll_and_gradient(model, _as_matrix(model, seq), gold)
    lam = model.l2
    w = model.to_vector()
    nll += 0.5 * lam * float(w @ w)
    g.emission += lam * model.emission
    g.transition += lam * model.transition
    g.start += lam * model.start
    g.stop += lam * model.stop
    return nll, g


def viterbi_decode(model: CrfModel, seq) -> list[int]:
    """Highest-scoring label path; among ties the lexicographically smallest.

    Best-suffix scores are computed right to left, then the path is read off
    left to right taking the lowest label index that stays optimal.
    """
    X = _as_matrix(model, seq)
    E = model.emissions(X)
    n = E.shape[0]
    if n < 1:
        raise ValueError("empty sequence")
    suffix = np.empty_like(E)
    suffix[-1] = model.stop
    for t in range(n - 2, -1, -1):
        suffix[t] = np.max(model.transition + (E[t + 1] + suffix[t + 1])[None, :], axis=1)
    path = [int(np.argmax(model.start + E[0] + suffix[0]))]
    for t in range(1, n):
        path.append(int(np.argmax(model.transition[path[-1]] + E[t] + suffix[t])))
    return path

"""Dialogue quality regression with optional interaction-flow features.

Each dialogue becomes a sparse vector of token counts, a few structural
statistics and, depending on the augmentation, n-gram counts over its turn
label sequence.  A ridge-regression ensemble (one member per topic-grouped
fold of the training split) predicts the 1..5 quality score.
"""
from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .folds import topic_folds
from .ingest import EXPLAINEE, Dialogue, tokenize
from .io import atomic_write_text
from .metrics import RegressionErrors, rmse_mae
from .taxonomy import Dimension

FORMAT = "explanation-dialogues/quality-ensemble"
VERSION = 1
SCORE_MIN, SCORE_MAX = 1.0, 5.0


class Augmentation(str, enum.Enum):
    PLAIN = "plain"
    MOVES = "moves"
    ACTS = "acts"
    TOPICS = "topics"
    ALL = "all"

    @property
    def dimensions(self) -> tuple[Dimension, ...]:
        return {
            Augmentation.PLAIN: (),
            Augmentation.MOVES: (Dimension.MOVE,),
            Augmentation.ACTS: (Dimension.ACT,),
            Augmentation.TOPICS: (Dimension.TOPIC,),
            Augmentation.ALL: (Dimension.MOVE, Dimension.ACT, Dimension.TOPIC),
        }[self]

    @classmethod
    def parse(cls, value: "Augmentation | str") -> "Augmentation":
        if isinstance(value, Augmentation):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown augmentation {value!r}") from None


def _as_fraction(p: float | Fraction) -> Fraction:
    frac = p if isinstance(p, Fraction) else Fraction(p).limit_denominator(1_000_000)
    if not 0 < frac <= 1:
        raise ValueError(f"truncation fraction must be in (0, 1], got {p}")
    return frac


def truncation_length(n_turns: int, p: float | Fraction) -> int:
    """Number of leading turns kept: ceil(p * n), at least one."""
    return max(1, math.ceil(_as_fraction(p) * n_turns))


@dataclass(frozen=True)
class QualityFeatureVector:
    text: dict[str, float]
    flow: dict[str, float]
    structural: dict[str, float]

    def items(self) -> Iterable[tuple[str, float]]:
        yield from ((f"w:{k}", v) for k, v in self.text.items())
        yield from ((f"s:{k}", v) for k, v in self.structural.items())
        yield from ((f"f:{k}", v) for k, v in self.flow.items())


def _flow_features(dialogue: Dialogue, turns, dim: Dimension) -> Counter:
    labels = []
    for i, turn in enumerate(turns):
        lab = turn.label(dim.value)
        if lab is None:
            raise ValueError(f"turn {dialogue.dialogue_id}:{i} is missing its {dim.value} label")
        labels.append(lab)
    name = dim.value
    feats: Counter = Counter()
    for turn, lab in zip(turns, labels):
        feats[f"{name}:{turn.speaker_role.lower()}:{lab}"] += 1
    for a, b in zip(labels, labels[1:]):
        feats[f"{name}:{a}→{b}"] += 1
    for a, b, c in zip(labels, labels[1:], labels[2:]):
        feats[f"{name}:{a}→{b}→{c}"] += 1
    return feats


def build_quality_features(
    dialogue: Dialogue,
    augmentation: Augmentation | str = Augmentation.PLAIN,
    p: float | Fraction = 1,
    vocabulary: Iterable[str] | None = None,
) -> QualityFeatureVector:
    """Features of the first ceil(p * n) turns of ``dialogue``.

    ``vocabulary`` restricts the token counts; ``None`` keeps every token.
    """
    aug = Augmentation.parse(augmentation)
    turns = dialogue.turns[: truncation_length(len(dialogue.turns), p)]
    vocab = None if vocabulary is None else set(vocabulary)

    text: Counter = Counter()
    n_tokens = 0
    for turn in turns:
        toks = tokenize(turn.text, lower=True)
        n_tokens += len(toks)
        text.update(t for t in toks if vocab is None or t in vocab)

    flow: Counter = Counter()
    for dim in aug.dimensions:
        flow.update(_flow_features(dialogue, turns, dim))

    structural = {
        "n_turns": float(len(turns)),
        "mean_tokens": n_tokens / len(turns),
        "explainee_frac": sum(t.speaker_role == EXPLAINEE for t in turns) / len(turns),
    }
    return QualityFeatureVector(
        {k: float(v) for k, v in sorted(text.items())},
        {k: float(v) for k, v in sorted(flow.items())},
        structural,
    )


def build_vocabulary(corpus: Iterable[Dialogue], min_freq: int = 5) -> list[str]:
    counts: Counter = Counter()
    for d in corpus:
        for turn in d.turns:
            counts.update(tokenize(turn.text, lower=True))
    return sorted(t for t, c in counts.items() if c >= min_freq)


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Closed-form ridge regression with an unpenalised intercept."""
    if lam <= 0:
        raise ValueError("ridge penalty must be > 0")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    n, f = Xc.shape
    if f <= n:
        w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(f), Xc.T @ yc)
    else:
        w = Xc.T @ np.linalg.solve(Xc @ Xc.T + lam * np.eye(n), yc)
    return w, y_mean - float(x_mean @ w)


@dataclass
class QualityEnsemble:
    augmentation: Augmentation
    l2: float
    vocabulary: list[str]
    feature_names: list[str]
    weights: list[np.ndarray]
    intercepts: list[float]
    _col: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._col = {n: i for i, n in enumerate(self.feature_names)}

    def vectorize(self, dialogue: Dialogue, p: float | Fraction = 1) -> np.ndarray:
        fv = build_quality_features(dialogue, self.augmentation, p, self.vocabulary)
        x = np.zeros(len(self.feature_names))
        for name, v in fv.items():
            j = self._col.get(name)
            if j is not None:
                x[j] = v
        return x

    def member_predictions(self, dialogue: Dialogue, p: float | Fraction = 1) -> np.ndarray:
        x = self.vectorize(dialogue, p)
        return np.array([float(x @ w) + b for w, b in zip(self.weights, self.intercepts)])

    def to_json(self) -> str:
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "augmentation": self.augmentation.value,
            "l2": self.l2,
            "vocabulary": self.vocabulary,
            "features": self.feature_names,
            "members": [
                {"weights": w.tolist(), "intercept": b} for w, b in zip(self.weights, self.intercepts)
            ],
        }
        return json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "QualityEnsemble":
        doc = json.loads(text)
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise ValueError(f"not a version-{VERSION} quality ensemble file")
        return cls(
            augmentation=Augmentation.parse(doc["augmentation"]),
            l2=float(doc["l2"]),
            vocabulary=list(doc["vocabulary"]),
            feature_names=list(doc["features"]),
            weights=[np.array(m["weights"], dtype=float) for m in doc["members"]],
            intercepts=[float(m["intercept"]) for m in doc["members"]],
        )

    @classmethod
    def load(cls, path: str | Path) -> "QualityEnsemble":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _quality(d: Dialogue) -> int:
    if d.quality is None:
        raise ValueError(f"dialogue {d.dialogue_id!r} has no quality score")
    return d.quality


def train_quality(
    train: Sequence[Dialogue],
    augmentation: Augmentation | str,
    l2: float = 1.0,
    seed: int = 0,
    n_folds: int = 10,
    min_freq: int = 5,
) -> QualityEnsemble:
    """Fit one ridge model per held-out fold of a topic-grouped split."""
    aug = Augmentation.parse(augmentation)
    if l2 <= 0:
        raise ValueError("ridge penalty must be > 0")
    data = sorted(train, key=lambda d: d.dialogue_id)
    n_topics = len({d.topic_question for d in data})
    if n_topics < n_folds:
        raise ValueError(f"need at least {n_folds} training topics, got {n_topics}")
    vocabulary = build_vocabulary(data, min_freq)

    vectors = [dict(build_quality_features(d, aug, 1, vocabulary).items()) for d in data]
    names = sorted({k for v in vectors for k in v})
    col = {n: i for i, n in enumerate(names)}
    X = np.zeros((len(data), len(names)))
    for i, v in enumerate(vectors):
        for k, val in v.items():
            X[i, col[k]] = val
    y = np.array([_quality(d) for d in data], dtype=float)

    plan = topic_folds(data, n_folds, seed)
    weights, intercepts = [], []
    for held in plan.folds:
        rows = np.array([d.dialogue_id not in held for d in data])
        w, b = fit_ridge(X[rows], y[rows], l2)
        weights.append(w)
        intercepts.append(b)
    return QualityEnsemble(aug, l2, vocabulary, names, weights, intercepts)


def predict_quality(ensemble: QualityEnsemble, dialogue: Dialogue, p: float | Fraction = 1) -> float:
    """Mean of the raw member predictions, clamped once to [1, 5]."""
    mean = float(np.mean(ensemble.member_predictions(dialogue, p)))
    return min(SCORE_MAX, max(SCORE_MIN, mean))


@dataclass(frozen=True)
class BaselinePredictor:
    constant: float

    @classmethod
    def fit(cls, train: Sequence[Dialogue]) -> "BaselinePredictor":
        if not train:
            raise ValueError("empty training split")
        return cls(math.fsum(_quality(d) for d in train) / len(train))

    def predict(self, dialogue: Dialogue | None = None) -> float:
        return self.constant


def evaluate_quality(predictions: Sequence[float], gold: Sequence[float]) -> RegressionErrors:
    return rmse_mae(predictions, gold)


def evaluate_ensemble(ensemble: QualityEnsemble, corpus: Sequence[Dialogue], p: float | Fraction = 1) -> RegressionErrors:
    data = sorted(corpus, key=lambda d: d.dialogue_id)
    return rmse_mae([predict_quality(ensemble, d, p) for d in data], [_quality(d) for d in data])


DEFAULT_PERCENTAGES = tuple(range(10, 101, 10))


def early_prediction_curve(
    ensemble: QualityEnsemble,
    corpus: Sequence[Dialogue],
    percentages: Sequence[int] = DEFAULT_PERCENTAGES,
) -> list[tuple[int, float]]:
    """RMSE when only the first ceil(pct/100 * n) turns of each dialogue are seen."""
    if not percentages:
        raise ValueError("no percentages given")
    out = []
    for pct in percentages:
        if not 0 < pct <= 100:
            raise ValueError(f"percentage must be in (0, 100], got {pct}")
        out.append((pct, evaluate_ensemble(ensemble, corpus, Fraction(pct, 100)).rmse))
    return out


def with_predicted_labels(dialogue: Dialogue, dimensions: Iterable[Dimension], taggers: Mapping[Any, Any]) -> Dialogue:
    """Replace gold turn labels by tagger output for each of ``dimensions``.

    A tagger is anything with ``predict_labels(dialogue) -> list[str]``; the
    mapping may be keyed by :class:`Dimension` or by its string value.
    """
    for dim in dimensions:
        tagger = taggers.get(dim, taggers.get(dim.value))
        if tagger is None:
            raise ValueError(f"no tagger for dimension {dim.value}")
        dialogue = dialogue.with_labels(dim.value, tagger.predict_labels(dialogue))
    return dialogue


def predict_with_predicted_labels(
    ensemble: QualityEnsemble, dialogue: Dialogue, taggers: Mapping[Any, Any], p: float | Fraction = 1
) -> float:
    tagged = with_predicted_labels(dialogue, ensemble.augmentation.dimensions, taggers)
    return predict_quality(ensemble, tagged, p)

"""Mini-batch training and cross-validated evaluation of the turn tagger."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..folds import FoldPlan
from ..ingest import Dialogue
from ..metrics import ConfusionMatrix, F1Report, macro_f1
from ..taxonomy import Dimension
from .crf import CrfModel, NonFiniteScore, data_nll_and_gradient, viterbi_decode
from .features import dialogue_features

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TaggerHyper:
    seed: int
    l2: float = 0.1
    epochs: int = 30
    learning_rate: float = 0.1
    batch_size: int = 8
    use_transitions: bool = True  # False gives a per-turn (emission-only) classifier
    patience: int = 5

    def __post_init__(self) -> None:
        if self.l2 < 0 or self.learning_rate <= 0:
            raise ValueError("need l2 >= 0 and learning_rate > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")


def _gold(d: Dialogue, dim: Dimension) -> list[int]:
    out = []
    for i, lab in enumerate(d.labels(dim.value)):
        if lab is None:
            raise ValueError(f"turn {d.dialogue_id}:{i} has no {dim.value} label")
        out.append(dim.index(lab))
    return out


def train_tagger(corpus: Sequence[Dialogue], dimension: Dimension | str, hyper: TaggerHyper) -> CrfModel:
    """Minimise summed NLL + (l2/2)|w|^2 by shuffled mini-batch gradient steps.

    The step size at epoch ``e`` (1-based) is ``learning_rate / sqrt(e)``; the
    L2 term is applied as a proximal shrink so large ``l2`` stays stable.
    """
    dim = dimension if isinstance(dimension, Dimension) else Dimension.parse(dimension)
    if not corpus:
        raise ValueError("empty training corpus")
    # canonical order so that results do not depend on file order
    data = sorted(corpus, key=lambda d: d.dialogue_id)
    feats = [dialogue_features(d) for d in data]
    gold = [_gold(d, dim) for d in data]
    vocab = sorted({fid for seq in feats for fv in seq for fid in fv})
    model = CrfModel.zeros(dim, vocab, hyper.l2)
    X = [model.encode(seq) for seq in feats]
    N = len(data)

    F, L = model.emission.shape
    mask = np.ones(F * L + L * L + 2 * L)
    if not hyper.use_transitions:
        mask[F * L:] = 0.0

    rng = np.random.default_rng(hyper.seed)
    w = model.to_vector()
    prev = math.inf
    rising = 0
    for epoch in range(1, hyper.epochs + 1):
        step = hyper.learning_rate / math.sqrt(epoch)
        order = rng.permutation(N)
        try:
            for b in range(0, N, hyper.batch_size):
                batch = order[b:b + hyper.batch_size]
                grad = np.zeros_like(w)
                for i in batch:
                    _, g = data_nll_and_gradient(model, X[i], gold[i])
                    grad += g.to_vector()
                grad /= len(batch)
                shrink = 1.0 + step * hyper.l2 / N
                w = (w - step * grad * mask) / shrink
                model.set_vector(w)
            objective = sum(data_nll_and_gradient(model, X[i], gold[i])[0] for i in range(N))
        except NonFiniteScore as err:
            raise TrainingDiverged(f"weights became non-finite at epoch {epoch}") from err
        objective += 0.5 * hyper.l2 * float(w @ w)
        log.debug("epoch %d: objective %.6f", epoch, objective)
        if not math.isfinite(objective):
            raise TrainingDiverged(f"objective became non-finite at epoch {epoch}")
        rising = rising + 1 if objective > prev else 0
        if rising >= hyper.patience:
            raise TrainingDiverged(
                f"objective rose {rising} epochs in a row (epoch {epoch}: {objective:.4f}); "
                f"lower the learning rate (now {hyper.learning_rate})"
            )
        prev = objective
    return model


def decode_corpus(model: CrfModel, corpus: Sequence[Dialogue]) -> dict[str, list[str]]:
    return {d.dialogue_id: model.predict_labels(d) for d in corpus}


@dataclass(frozen=True)
class TaggerEvaluation:
    confusion: ConfusionMatrix
    f1: F1Report

    @property
    def macro(self) -> float:
        return self.f1.macro


def evaluate_tagger(
    corpus: Sequence[Dialogue], dimension: Dimension | str, folds: FoldPlan, hyper: TaggerHyper
) -> TaggerEvaluation:
    """Train on all-but-one fold, decode the held-out fold, pool the confusion counts."""
    dim = dimension if isinstance(dimension, Dimension) else Dimension.parse(dimension)
    ids = {d.dialogue_id for d in corpus}
    covered = set().union(*folds.folds)
    if covered != ids or sum(len(f) for f in folds.folds) != len(ids):
        raise ValueError("fold plan does not partition the corpus")
    cm = ConfusionMatrix.empty(dim.codes)
    for k in range(folds.k):
        train, test = folds.split(corpus, k)
        if sum(len(d.turns) for d in test) == 0:
            raise ValueError(f"fold {k} has no turns")
        model = train_tagger(train, dim, hyper)
        for d in sorted(test, key=lambda d: d.dialogue_id):
            pred = [dim.codes[i] for i in viterbi_decode(model, dialogue_features(d))]
            cm.add([dim.codes[i] for i in _gold(d, dim)], pred)
        log.info("fold %d/%d done", k + 1, folds.k)
    return TaggerEvaluation(cm, macro_f1(cm))

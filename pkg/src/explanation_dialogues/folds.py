"""Topic-grouped cross-validation folds."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import Dialogue


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[frozenset[str], ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, corpus: Sequence[Dialogue], fold: int) -> tuple[list[Dialogue], list[Dialogue]]:
        held = self.folds[fold]
        train = [d for d in corpus if d.dialogue_id not in held]
        test = [d for d in corpus if d.dialogue_id in held]
        return train, test


def topic_folds(corpus: Sequence[Dialogue], k: int, seed: int) -> FoldPlan:
    """Partition dialogues into ``k`` folds so that no topic spans two folds.

    Topics are shuffled with ``seed`` and then placed, largest first, into the
    fold that currently holds the fewest dialogues.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    by_topic: dict[str, list[str]] = defaultdict(list)
    for d in corpus:
        by_topic[d.topic_question].append(d.dialogue_id)
    topics = sorted(by_topic)
    if len(topics) < k:
        raise ValueError(f"{len(topics)} topics cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(topics))
    shuffled = [topics[i] for i in order]
    # stable sort keeps the shuffled order among equally sized topics
    shuffled.sort(key=lambda t: -len(by_topic[t]))
    folds: list[list[str]] = [[] for _ in range(k)]
    for topic in shuffled:
        target = min(range(k), key=lambda i: (len(folds[i]), i))
        folds[target].extend(by_topic[topic])
    return FoldPlan(tuple(frozenset(f) for f in folds))

"""Attach consolidated annotations to dialogues and split the corpus by topic."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .aggregation import AnnotationSet, EMConfig, aggregate_em, median_label
from .ingest import Dialogue
from .taxonomy import TURN_DIMENSIONS, Dimension

log = logging.getLogger(__name__)

SCOPES = ("train", "test", "all")


def turn_item_id(dialogue_id: str, index: int) -> str:
    """Annotation item id of the ``index``-th (0-based) turn of a dialogue."""
    return f"{dialogue_id}:{index}"


def _dimension_of_code(code: str) -> Dimension:
    for dim in Dimension:
        if code in dim.codes:
            return dim
    raise ValueError(f"unknown label code {code!r}")


def load_annotations(records: Iterable[Mapping[str, Any]]) -> dict[Dimension, list[AnnotationSet]]:
    """Group ``{item_id, dimension, annotator_id, label}`` records into annotation sets."""
    judged: dict[tuple[Dimension, str], dict[str, int]] = defaultdict(dict)
    for rec in records:
        dim = Dimension.parse(str(rec["dimension"]))
        code = str(rec["label"])
        if _dimension_of_code(code) is not dim:
            raise ValueError(f"label {code!r} does not belong to dimension {dim.value}")
        item, annotator = str(rec["item_id"]), str(rec["annotator_id"])
        if annotator in judged[dim, item]:
            raise ValueError(f"annotator {annotator!r} judged {dim.value} of {item!r} twice")
        judged[dim, item][annotator] = dim.index(code)
    out: dict[Dimension, list[AnnotationSet]] = {d: [] for d in Dimension}
    for (dim, item) in sorted(judged, key=lambda k: (k[0].value, k[1])):
        out[dim].append(AnnotationSet(item, dim, dict(sorted(judged[dim, item].items()))))
    return out


@dataclass(frozen=True)
class SplitConfig:
    train: int = 154
    test: int = 50

    def n_test(self, n_topics: int) -> int:
        if self.train < 0 or self.test < 0 or self.train + self.test == 0:
            raise ValueError("split proportions must be non-negative and not both zero")
        k = int(np.floor(n_topics * self.test / (self.train + self.test) + 0.5))
        if n_topics >= 2:
            k = min(max(k, 1 if self.test else 0), n_topics - (1 if self.train else 0))
        return k


@dataclass(frozen=True)
class ConsolidationConfig:
    seed: int
    em: EMConfig | None = None
    quality_method: str = "em"  # or "median"
    split: SplitConfig = field(default_factory=SplitConfig)

    def em_config(self) -> EMConfig:
        return self.em if self.em is not None else EMConfig(seed=self.seed)


def split_topics(topics: Iterable[str], split: SplitConfig, seed: int) -> tuple[list[str], list[str]]:
    """Shuffle the distinct topics with ``seed`` and cut them into train/test."""
    ordered = sorted(set(topics))
    perm = np.random.default_rng(seed).permutation(len(ordered))
    n_test = split.n_test(len(ordered))
    test = sorted(ordered[i] for i in perm[:n_test])
    train = sorted(ordered[i] for i in perm[n_test:])
    return train, test


def _consolidate(sets: Sequence[AnnotationSet], dim: Dimension, cfg: ConsolidationConfig) -> dict[str, int]:
    if dim is Dimension.QUALITY and cfg.quality_method == "median":
        return median_label(sets)
    if cfg.quality_method not in ("em", "median"):
        raise ValueError(f"unknown quality_method {cfg.quality_method!r}")
    labels, model = aggregate_em(sets, cfg.em_config())
    log.info(
        "%s: consolidated %d items, competence %s",
        dim.value, len(sets), {a: round(c, 3) for a, c in model.competence.items()},
    )
    return labels.hard_label


def consolidate_corpus(
    dialogues: Sequence[Dialogue],
    annotations: Mapping[Dimension, Sequence[AnnotationSet]],
    config: ConsolidationConfig,
) -> list[Dialogue]:
    """Label every turn and dialogue from its consolidated annotations and assign splits."""
    hard: dict[Dimension, dict[str, int]] = {}
    for dim in Dimension:
        if dim is Dimension.QUALITY:
            wanted = {d.dialogue_id for d in dialogues}
        else:
            wanted = {turn_item_id(d.dialogue_id, i) for d in dialogues for i in range(len(d.turns))}
        sets = [a for a in annotations.get(dim, ()) if a.item_id in wanted]
        have = {a.item_id for a in sets}
        for d in dialogues:
            if dim is Dimension.QUALITY:
                if d.dialogue_id not in have:
                    raise ValueError(f"dialogue {d.dialogue_id!r} has no quality annotations")
                continue
            for i in range(len(d.turns)):
                if turn_item_id(d.dialogue_id, i) not in have:
                    raise ValueError(
                        f"turn {turn_item_id(d.dialogue_id, i)!r} has no {dim.value} annotations"
                    )
        hard[dim] = _consolidate(sets, dim, config)

    train, _ = split_topics((d.topic_question for d in dialogues), config.split, config.seed)
    train_topics = set(train)
    out = []
    for d in dialogues:
        for dim in TURN_DIMENSIONS:
            codes = dim.codes
            d = d.with_labels(
                dim.value,
                [codes[hard[dim][turn_item_id(d.dialogue_id, i)]] for i in range(len(d.turns))],
            )
        out.append(
            replace(
                d,
                quality=hard[Dimension.QUALITY][d.dialogue_id] + 1,
                split="train" if d.topic_question in train_topics else "test",
            )
        )
    return out


def in_scope(corpus: Iterable[Dialogue], scope: str) -> list[Dialogue]:
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    return [d for d in corpus if scope == "all" or d.split == scope]

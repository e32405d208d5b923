"""Corpus statistics: label distributions, quality breakdowns and label flows."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .consolidate import in_scope
from .ingest import Dialogue
from .taxonomy import QUALITY_SCORES, SHORT_NAMES, TURN_DIMENSIONS, Dimension


def apportion(counts: Sequence[int], digits: int = 0) -> tuple[float, ...]:
    """Percentages of ``counts`` that sum to exactly 100.

    Each share is the exact percentage rounded down or up to ``digits``
    decimals; the leftover units go to the largest remainders (earlier entries
    win ties).  When half-up rounding already sums to 100 the two agree.
    """
    total = sum(counts)
    if total == 0:
        return (0.0,) * len(counts)
    scale = 10**digits
    exact = [Fraction(100 * scale * c, total) for c in counts]
    units = [int(x) for x in exact]
    order = sorted(range(len(counts)), key=lambda i: (-(exact[i] - units[i]), i))
    for i in order[: 100 * scale - sum(units)]:
        units[i] += 1
    return tuple(u / scale for u in units)


def _turn_dimension(dimension: Dimension | str) -> Dimension:
    dim = dimension if isinstance(dimension, Dimension) else Dimension.parse(dimension)
    if dim not in TURN_DIMENSIONS:
        raise ValueError(f"{dim.value} is not a turn-level dimension")
    return dim


def _labels(d: Dialogue, dim: Dimension) -> list[str]:
    labels = d.labels(dim.value)
    if any(lab is None for lab in labels):
        raise ValueError(f"dialogue {d.dialogue_id!r} lacks {dim.value} labels")
    return labels  # type: ignore[return-value]


def _quality(d: Dialogue) -> int:
    if d.quality is None:
        raise ValueError(f"dialogue {d.dialogue_id!r} has no quality score")
    return d.quality


def _score_percents(scores: Counter) -> tuple[float, ...]:
    return apportion([scores[s] for s in QUALITY_SCORES])


@dataclass(frozen=True)
class LabelCount:
    label: str
    count: int
    percent: float


@dataclass(frozen=True)
class LabelDistribution:
    dimension: Dimension
    scope: str
    rows: tuple[LabelCount, ...]

    def __getitem__(self, label: str) -> LabelCount:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    def csv_rows(self):
        return [(r.label, r.count, f"{r.percent:.1f}") for r in self.rows]


def label_distribution(corpus: Iterable[Dialogue], dimension: Dimension | str, scope: str = "all") -> LabelDistribution:
    dim = _turn_dimension(dimension)
    counts: Counter = Counter()
    for d in in_scope(corpus, scope):
        counts.update(_labels(d, dim))
    total = sum(counts.values())
    if total == 0:
        raise ValueError(f"no turns in scope {scope!r}")
    shares = apportion([counts[c] for c in dim.codes], 1)
    rows = tuple(LabelCount(c, counts[c], p) for c, p in zip(dim.codes, shares))
    return LabelDistribution(dim, scope, rows)


@dataclass(frozen=True)
class ConditionedRow:
    label: str
    frequency: int
    score_percents: tuple[float, ...]


@dataclass(frozen=True)
class QualityConditionedDistribution:
    dimension: Dimension
    rows: tuple[ConditionedRow, ...]

    def __getitem__(self, label: str) -> ConditionedRow:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    def csv_rows(self):
        return [(r.label, r.frequency, *(f"{p:.0f}" for p in r.score_percents)) for r in self.rows]


def quality_conditioned_distribution(corpus: Iterable[Dialogue], dimension: Dimension | str) -> QualityConditionedDistribution:
    """Per label: number of turns and the share of them in dialogues of each score."""
    dim = _turn_dimension(dimension)
    by_label: dict[str, Counter] = defaultdict(Counter)
    for d in corpus:
        q = _quality(d)
        for lab in _labels(d, dim):
            by_label[lab][q] += 1
    rows = []
    for code in dim.codes:
        scores = by_label.get(code, Counter())
        freq = sum(scores.values())
        rows.append(ConditionedRow(code, freq, _score_percents(scores)))
    return QualityConditionedDistribution(dim, tuple(rows))


@dataclass(frozen=True)
class FlowPattern:
    dimension: Dimension
    codes: tuple[str, ...]
    frequency: int
    score_percents: tuple[float, ...]

    @property
    def sequence(self) -> tuple[str, ...]:
        return tuple(SHORT_NAMES[c] for c in self.codes)

    def render(self) -> str:
        return ", ".join(self.sequence)


def mine_flows(corpus: Iterable[Dialogue], dimension: Dimension | str, top_k: int = 5) -> list[FlowPattern]:
    """Most frequent full-dialogue label sequences with their score breakdown."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    dim = _turn_dimension(dimension)
    groups: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    for d in corpus:
        groups[tuple(_labels(d, dim))][_quality(d)] += 1
    flows = [
        FlowPattern(dim, codes, sum(sc.values()), _score_percents(sc))
        for codes, sc in groups.items()
    ]
    flows.sort(key=lambda f: (-f.frequency, f.sequence, f.codes))
    return flows[:top_k]


def flows_csv_rows(flows: Sequence[FlowPattern]):
    return [(f.render(), f.frequency, *(f"{p:.0f}" for p in f.score_percents)) for f in flows]


@dataclass(frozen=True)
class ScoreDistribution:
    counts: dict[int, int]
    percents: dict[int, float]

    def csv_rows(self):
        return [(s, self.counts[s], f"{self.percents[s]:.1f}") for s in QUALITY_SCORES]


def score_distribution(corpus: Iterable[Dialogue]) -> ScoreDistribution:
    counts = Counter(_quality(d) for d in corpus)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("empty corpus")
    shares = apportion([counts[s] for s in QUALITY_SCORES], 1)
    return ScoreDistribution({s: counts[s] for s in QUALITY_SCORES}, dict(zip(QUALITY_SCORES, shares)))


LABEL_HEADER = ("label", "count", "percent")
CONDITIONED_HEADER = ("label", "count", "s1", "s2", "s3", "s4", "s5")
FLOW_HEADER = ("sequence", "count", "s1", "s2", "s3", "s4", "s5")
SCORE_HEADER = ("score", "count", "percent")

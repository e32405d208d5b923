"""Seeded synthetic corpora with planted structure, for tests and demos."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .ingest import EXPLAINEE, EXPLAINER, Dialogue, Turn, tokenize
from .taxonomy import Dimension

FILLER = [f"word{i:02d}" for i in range(60)]


def make_dialogue(
    dialogue_id: str,
    topic: str,
    texts: Sequence[str],
    labels: dict[str, Sequence[str]] | None = None,
    quality: int | None = None,
    split: str | None = None,
) -> Dialogue:
    """Alternating explainee/explainer dialogue from turn texts and label lists."""
    labels = labels or {}
    turns = []
    for i, text in enumerate(texts):
        role = EXPLAINEE if i % 2 == 0 else EXPLAINER
        turns.append(
            Turn(
                speaker_role=role,
                author="asker" if role == EXPLAINEE else "helper",
                text=text,
                token_count=len(tokenize(text)),
                source_comment_id=f"{dialogue_id}c{i}",
                **{dim: labels[dim][i] for dim in ("move", "act", "topic") if dim in labels},
            )
        )
    return Dialogue(dialogue_id, topic, tuple(turns), "asker", "helper", quality, split)


def _filler(rng: np.random.Generator, lo: int = 5, hi: int = 12) -> list[str]:
    return [FILLER[i] for i in rng.integers(0, len(FILLER), size=rng.integers(lo, hi + 1))]


def _random_labels(rng: np.random.Generator, dim: Dimension, n: int) -> list[str]:
    return [dim.codes[i] for i in rng.integers(0, dim.size, size=n)]


def markov_tagging_corpus(
    n_dialogues: int = 200,
    seed: int = 0,
    n_topics: int = 40,
    stay_on_cycle: float = 0.9,
    cue_rate: float = 0.3,
) -> list[Dialogue]:
    """Topic-relation labels from a transition-dominant first-order chain.

    Labels walk the cycle t1 -> t2 -> t3 -> t4 -> t1 with probability
    ``stay_on_cycle`` (otherwise a uniform jump) and the chain starts at a
    random label.  A turn carries its label's cue word only with probability
    ``cue_rate``; everything else is label-independent filler.
    """
    dim = Dimension.TOPIC
    L = dim.size
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_dialogues):
        n = int(rng.integers(6, 11))
        y = [int(rng.integers(0, L))]
        for _ in range(n - 1):
            y.append((y[-1] + 1) % L if rng.random() < stay_on_cycle else int(rng.integers(0, L)))
        texts = []
        for lab in y:
            words = _filler(rng)
            if rng.random() < cue_rate:
                words.insert(int(rng.integers(0, len(words) + 1)), f"cue{lab}")
            texts.append(" ".join(words))
        out.append(
            make_dialogue(f"m{k:04d}", f"topic {k % n_topics}", texts, {"topic": [dim.codes[i] for i in y]})
        )
    return out


def separable_tagging_corpus(n_dialogues: int = 60, seed: int = 0) -> list[Dialogue]:
    """Every turn contains exactly one token that names its act label."""
    dim = Dimension.ACT
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_dialogues):
        n = int(rng.integers(6, 10))
        y = [int(i) for i in rng.integers(0, dim.size, size=n)]
        texts = [" ".join(_filler(rng, 2, 5) + [f"marker{lab}"]) for lab in y]
        out.append(make_dialogue(f"s{k:04d}", f"topic {k % 20}", texts, {"act": [dim.codes[i] for i in y]}))
    return out


def _flow_dialogue(rng, k: int, topic: str, acts: list[str], quality: int, split: str | None) -> Dialogue:
    n = len(acts)
    labels = {
        "act": acts,
        "move": _random_labels(rng, Dimension.MOVE, n),
        "topic": _random_labels(rng, Dimension.TOPIC, n),
    }
    texts = [" ".join(_filler(rng)) for _ in range(n)]
    return make_dialogue(f"f{k:04d}", topic, texts, labels, quality, split)


def flow_quality_corpus(
    n_dialogues: int = 300,
    seed: int = 0,
    n_topics: int = 60,
    test_topics: int = 15,
) -> list[Dialogue]:
    """Quality fixed by the final dialogue act, text independent of quality.

    Each dialogue is two to four question/inform rounds (d3, d9) followed by
    an agreeing (d7, quality 5) or disagreeing (d8, quality 1) statement.
    Topics ``0 .. test_topics-1`` form the test split.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_dialogues):
        rounds = int(rng.integers(2, 5))
        agree = bool(rng.random() < 0.5)
        acts = ["d3", "d9"] * rounds + ["d7" if agree else "d8"]
        t = k % n_topics
        out.append(_flow_dialogue(rng, k, f"topic {t}", acts, 5 if agree else 1,
                                  "test" if t < test_topics else "train"))
    return out


def late_signal_corpus(
    n_dialogues: int = 300,
    seed: int = 0,
    n_topics: int = 60,
    test_topics: int = 15,
) -> list[Dialogue]:
    """Quality = 1 + 2 * (number of agreeing acts among the final two turns).

    The first turns are question/inform rounds shared by every score, so a
    short prefix carries no information about the outcome.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_dialogues):
        rounds = int(rng.integers(3, 6))
        tail = ["d7" if rng.random() < 0.5 else "d8" for _ in range(2)]
        quality = 1 + 2 * tail.count("d7")
        acts = ["d3", "d9"] * rounds + tail
        t = k % n_topics
        out.append(_flow_dialogue(rng, k, f"topic {t}", acts, quality,
                                  "test" if t < test_topics else "train"))
    return out

"""Shared generators and independent reference implementations for the tests."""
from __future__ import annotations

import itertools
import math
import random

import numpy as np

from explanation_dialogues.aggregation import AnnotationSet
from explanation_dialogues.ingest import EXPLAINEE, EXPLAINER, CommentRecord
from explanation_dialogues.taxonomy import Dimension

AUTHORS = ["asker", "helper1", "helper2", "other", "[deleted]"]


def random_thread(rng: random.Random, thread_id: str = "t", size: int | None = None) -> list[CommentRecord]:
    """A random reply tree built around a few back-and-forth chains.

    Chains mostly alternate between the asker and one helper but are
    sometimes interrupted by third parties, deleted authors, self-replies or
    empty bodies; the remaining comments attach to random parents.
    """
    size = size if size is not None else rng.randint(1, 40)
    root = CommentRecord("root", None, thread_id, "asker", "Why does this happen?", 10, 1_600_000_000)
    recs = [root]
    bodies = ["Because of physics.", "Really?", "Thanks!", "", "...", "I see, but why?"]

    def add(parent, author):
        i = len(recs)
        recs.append(CommentRecord(f"c{i}", parent.id, thread_id, author, rng.choice(bodies),
                                  rng.randint(-3, 20), 1_600_000_000 + rng.randint(1, 10_000)))
        return recs[-1]

    while len(recs) < size:
        if rng.random() < 0.5:
            helper = rng.choice(["helper1", "helper2"])
            node = add(root, helper)
            speaker = "asker"
            for _ in range(rng.randint(2, 12)):
                if len(recs) >= size:
                    break
                r = rng.random()
                author = speaker if r < 0.8 else (node.author if r < 0.9 else rng.choice(AUTHORS))
                node = add(node, author)
                speaker = "asker" if node.author != "asker" else helper
        else:
            add(rng.choice(recs), rng.choice(AUTHORS))
    return recs


def check_dialogue_invariants(d, min_turns: int = 6) -> None:
    assert len(d.turns) >= min_turns
    assert d.turns[0].speaker_role == EXPLAINEE
    for a, b in zip(d.turns, d.turns[1:]):
        assert a.speaker_role != b.speaker_role
    for t in d.turns:
        assert t.author in (d.explainee_author, d.explainer_author)
        assert (t.author == d.explainee_author) == (t.speaker_role == EXPLAINEE)
        assert t.text.strip()
        assert t.token_count >= 1
    assert d.explainee_author != d.explainer_author
    assert {t.speaker_role for t in d.turns} == {EXPLAINEE, EXPLAINER}


# --- definitional oracles -------------------------------------------------

def fleiss_by_definition(rows) -> float:
    N = len(rows)
    n = sum(rows[0])
    P_i = [sum(c * (c - 1) for c in row) / (n * (n - 1)) for row in rows]
    P_bar = sum(P_i) / N
    p_j = [sum(row[j] for row in rows) / (N * n) for j in range(len(rows[0]))]
    P_e = sum(p * p for p in p_j)
    return (P_bar - P_e) / (1 - P_e)


def krippendorff_ordinal_bruteforce(judgments) -> float:
    """Enumerate every ordered pair of values within each item."""
    pairs = []  # (c, k, weight)
    for ratings in judgments.values():
        vals = list(ratings.values())
        m = len(vals)
        if m < 2:
            continue
        for a, b in itertools.permutations(range(m), 2):
            pairs.append((vals[a], vals[b], 1.0 / (m - 1)))
    freq: dict[int, float] = {}
    for c, _, w in pairs:
        freq[c] = freq.get(c, 0.0) + w
    n = sum(freq.values())
    lo, hi = min(freq), max(freq)

    def delta2(c, k):
        if c > k:
            c, k = k, c
        s = sum(freq.get(g, 0.0) for g in range(c, k + 1))
        return (s - (freq.get(c, 0.0) + freq.get(k, 0.0)) / 2) ** 2

    d_o = sum(w * delta2(c, k) for c, k, w in pairs) / n
    d_e = sum(freq.get(c, 0) * freq.get(k, 0) * delta2(c, k)
              for c in range(lo, hi + 1) for k in range(lo, hi + 1)) / (n * (n - 1))
    return 1 - d_o / d_e


def f1_by_definition(tp, fp, fn) -> float:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def crf_enumerate(model, E: np.ndarray):
    """All label paths with their scores for an emission matrix ``E``."""
    n, L = E.shape
    out = []
    for path in itertools.product(range(L), repeat=n):
        s = model.start[path[0]] + model.stop[path[-1]]
        s += sum(E[t, y] for t, y in enumerate(path))
        s += sum(model.transition[a, b] for a, b in zip(path, path[1:]))
        out.append((path, float(s)))
    return out


def logsumexp_list(xs) -> float:
    m = max(xs)
    return m + math.log(sum(math.exp(x - m) for x in xs))


# --- planted data ------------------------------------------------------------

def planted_sets(seed=0, n_items=100, L=4, competence=(0.9, 0.9, 0.05)):
    """Judgments sampled from the copy-or-spam model with skewed spam distributions."""
    rng = np.random.default_rng(seed)
    spam = rng.dirichlet(np.full(L, 0.5), size=len(competence))
    truth = rng.integers(0, L, n_items)
    sets = []
    for i, t in enumerate(truth):
        judg = {}
        for j, th in enumerate(competence):
            judg[f"ann{j}"] = int(t) if rng.random() < th else int(rng.choice(L, p=spam[j]))
        sets.append(AnnotationSet(f"i{i:03d}", Dimension.TOPIC, judg))
    return truth, sets


def accuracy(labels, truth):
    return float(np.mean([labels[f"i{i:03d}"] == t for i, t in enumerate(truth)]))


class OracleTagger:
    def __init__(self, dim):
        self.dim = dim

    def predict_labels(self, dialogue):
        return dialogue.labels(self.dim.value)


class NoisyTagger(OracleTagger):
    """Gold labels with a seeded chance of swapping each for a different label."""

    def __init__(self, dim, rate=0.3, seed=0):
        super().__init__(dim)
        self.rate, self.seed = rate, seed

    def predict_labels(self, dialogue):
        key = int.from_bytes(dialogue.dialogue_id.encode(), "big") % (2**63)
        rng = np.random.default_rng([self.seed, key])
        out = []
        for lab in dialogue.labels(self.dim.value):
            if rng.random() < self.rate:
                others = [c for c in self.dim.codes if c != lab]
                lab = others[int(rng.integers(0, len(others)))]
            out.append(lab)
        return out

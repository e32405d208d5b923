"""Comment-tree parsing and explanation dialogue extraction.

A dump is a flat list of comment records (one JSON object per line).  Records
are grouped into one tree per thread, popular threads are selected per month,
and each sufficiently up-voted first-level comment seeds a candidate dialogue
between the thread author (explainee) and the comment author (explainer).
"""
from __future__ import annotations

import logging
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

EXPLAINEE = "Explainee"
EXPLAINER = "Explainer"
DELETED_AUTHORS = frozenset({"", "[deleted]", "[removed]"})

RECORD_FIELDS = ("id", "parent_id", "thread_id", "author", "body", "score", "created_utc")


class DumpError(ValueError):
    """Structural problem in a comment dump (duplicate ids, reply cycles)."""


@dataclass(frozen=True)
class CommentRecord:
    id: str
    parent_id: str | None
    thread_id: str
    author: str
    body: str
    score: int
    created_utc: int

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "CommentRecord":
        missing = [k for k in RECORD_FIELDS if k not in obj and k != "parent_id"]
        if missing:
            raise ValueError(f"comment record missing fields {missing}: {dict(obj)!r:.200}")
        parent = obj.get("parent_id")
        return cls(
            id=str(obj["id"]),
            parent_id=None if parent in (None, "") else str(parent),
            thread_id=str(obj["thread_id"]),
            author="" if obj["author"] is None else str(obj["author"]),
            body="" if obj["body"] is None else str(obj["body"]),
            score=int(obj["score"]),
            created_utc=int(obj["created_utc"]),
        )

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in RECORD_FIELDS}


@dataclass(frozen=True)
class ThreadTree:
    root: CommentRecord
    children: Mapping[str, tuple[str, ...]]
    month_key: str
    records: Mapping[str, CommentRecord]
    lost: tuple[CommentRecord, ...] = ()

    @property
    def comment_count(self) -> int:
        return len(self.records) - 1

    def kids(self, comment_id: str) -> list[CommentRecord]:
        return [self.records[c] for c in self.children.get(comment_id, ())]


@dataclass(frozen=True)
class Turn:
    speaker_role: str
    author: str
    text: str
    token_count: int
    source_comment_id: str
    move: str | None = None
    act: str | None = None
    topic: str | None = None

    def label(self, dimension: str) -> str | None:
        return getattr(self, dimension)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "speaker_role": self.speaker_role,
            "author": self.author,
            "text": self.text,
            "token_count": self.token_count,
            "source_comment_id": self.source_comment_id,
        }
        for dim in ("move", "act", "topic"):
            if getattr(self, dim) is not None:
                out[dim] = getattr(self, dim)
        return out

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "Turn":
        return cls(
            speaker_role=obj["speaker_role"],
            author=obj["author"],
            text=obj["text"],
            token_count=int(obj["token_count"]),
            source_comment_id=str(obj["source_comment_id"]),
            move=obj.get("move"),
            act=obj.get("act"),
            topic=obj.get("topic"),
        )


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    topic_question: str
    turns: tuple[Turn, ...]
    explainee_author: str
    explainer_author: str
    quality: int | None = None
    split: str | None = None

    def labels(self, dimension: str) -> list[str | None]:
        return [t.label(dimension) for t in self.turns]

    def with_labels(self, dimension: str, labels: Sequence[str]) -> "Dialogue":
        if len(labels) != len(self.turns):
            raise ValueError(f"{self.dialogue_id}: {len(labels)} labels for {len(self.turns)} turns")
        turns = tuple(replace(t, **{dimension: lab}) for t, lab in zip(self.turns, labels))
        return replace(self, turns=turns)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "dialogue_id": self.dialogue_id,
            "topic_question": self.topic_question,
            "turns": [t.to_dict() for t in self.turns],
            "explainee_author": self.explainee_author,
            "explainer_author": self.explainer_author,
        }
        if self.quality is not None:
            out["quality"] = self.quality
        if self.split is not None:
            out["split"] = self.split
        return out

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "Dialogue":
        quality = obj.get("quality")
        return cls(
            dialogue_id=str(obj["dialogue_id"]),
            topic_question=obj["topic_question"],
            turns=tuple(Turn.from_dict(t) for t in obj["turns"]),
            explainee_author=obj["explainee_author"],
            explainer_author=obj["explainer_author"],
            quality=None if quality is None else int(quality),
            split=obj.get("split"),
        )


def tokenize(text: str, lower: bool = False) -> list[str]:
    """Split on Unicode whitespace and strip leading/trailing punctuation.

    >>> tokenize("co-construct an explanation.")
    ['co-construct', 'an', 'explanation']
    """
    tokens = []
    for piece in text.split():
        start, end = 0, len(piece)
        while start < end and unicodedata.category(piece[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(piece[end - 1]).startswith("P"):
            end -= 1
        if start < end:
            tok = piece[start:end]
            tokens.append(tok.lower() if lower else tok)
    return tokens


def _month_key(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m")


def _order(rec: CommentRecord) -> tuple[int, str]:
    return (rec.created_utc, rec.id)


def _build_tree(thread_id: str, records: list[CommentRecord]) -> ThreadTree | None:
    by_id: dict[str, CommentRecord] = {}
    for rec in records:
        if rec.id in by_id:
            raise DumpError(f"duplicate comment id {rec.id!r} in thread {thread_id!r}")
        by_id[rec.id] = rec

    roots = sorted((r for r in records if r.parent_id is None), key=_order)
    if not roots:
        log.warning("thread %s has no root post; %d records dropped", thread_id, len(records))
        return None
    if len(roots) > 1:
        raise DumpError(f"thread {thread_id!r} has several roots: {[r.id for r in roots]}")
    root = roots[0]

    children: dict[str, list[CommentRecord]] = defaultdict(list)
    for rec in records:
        if rec.parent_id is not None and rec.parent_id in by_id:
            children[rec.parent_id].append(rec)

    reachable = {root.id}
    stack = [root.id]
    while stack:
        for kid in children.get(stack.pop(), ()):
            if kid.id not in reachable:
                reachable.add(kid.id)
                stack.append(kid.id)

    # Anything unreachable either hangs off a missing parent (lost) or sits on a cycle.
    lost: set[str] = set()
    for rec in sorted(records, key=_order):
        if rec.id in reachable or rec.id in lost:
            continue
        chain: list[str] = []
        on_chain: set[str] = set()
        cur: CommentRecord | None = rec
        while cur is not None and cur.id not in lost:
            if cur.id in on_chain:
                cycle = chain[chain.index(cur.id):] + [cur.id]
                raise DumpError(f"reply cycle in thread {thread_id!r}: {' -> '.join(cycle)}")
            chain.append(cur.id)
            on_chain.add(cur.id)
            cur = by_id.get(cur.parent_id) if cur.parent_id is not None else None
        lost.update(chain)

    kids = {
        pid: tuple(k.id for k in sorted(ks, key=_order))
        for pid, ks in sorted(children.items())
        if pid in reachable
    }
    return ThreadTree(
        root=root,
        children=kids,
        month_key=_month_key(root.created_utc),
        records={rid: by_id[rid] for rid in sorted(reachable)},
        lost=tuple(sorted((by_id[i] for i in lost), key=_order)),
    )


def parse_dump(raw_records: Iterable[CommentRecord | Mapping[str, Any]]) -> list[ThreadTree]:
    """Group records into one tree per thread, ordered by thread id."""
    threads: dict[str, list[CommentRecord]] = defaultdict(list)
    for raw in raw_records:
        rec = raw if isinstance(raw, CommentRecord) else CommentRecord.from_dict(raw)
        threads[rec.thread_id].append(rec)
    trees = []
    for thread_id in sorted(threads):
        tree = _build_tree(thread_id, threads[thread_id])
        if tree is not None:
            if tree.lost:
                log.info("thread %s: %d orphaned records excluded", thread_id, len(tree.lost))
            trees.append(tree)
    return trees


def select_candidate_threads(trees: Sequence[ThreadTree], per_month_limit: int) -> list[ThreadTree]:
    """Keep the ``per_month_limit`` most-commented threads of every month."""
    if per_month_limit < 1:
        raise ValueError("per_month_limit must be >= 1")
    by_month: dict[str, list[ThreadTree]] = defaultdict(list)
    for tree in trees:
        by_month[tree.month_key].append(tree)
    selected = []
    for month in sorted(by_month):
        ranked = sorted(
            by_month[month],
            key=lambda t: (-t.comment_count, t.root.created_utc, t.root.id),
        )
        selected.extend(ranked[:per_month_limit])
    return selected


def _usable(rec: CommentRecord) -> bool:
    return rec.author not in DELETED_AUTHORS and bool(tokenize(rec.body))


def _best(candidates: list[CommentRecord]) -> CommentRecord:
    return min(candidates, key=lambda r: (-r.score, r.created_utc, r.id))


def _walk(tree: ThreadTree, first: CommentRecord) -> list[tuple[str, list[CommentRecord]]]:
    """Follow the two-party reply chain below ``first``.

    Returns groups of consecutive same-author comments, root group first.
    """
    explainee, explainer = tree.root.author, first.author
    groups: list[tuple[str, list[CommentRecord]]] = [
        (EXPLAINEE, [tree.root]),
        (EXPLAINER, [first]),
    ]
    node = first
    while True:
        partner = explainee if node.author == explainer else explainer
        kids = [k for k in tree.kids(node.id) if _usable(k)]
        replies = [k for k in kids if k.author == partner]
        if replies:
            node = _best(replies)
            groups.append((EXPLAINEE if partner == explainee else EXPLAINER, [node]))
            continue
        follow_ups = [k for k in kids if k.author == node.author]
        if follow_ups:
            node = _best(follow_ups)
            groups[-1][1].append(node)
            continue
        return groups


def _make_turn(role: str, comments: list[CommentRecord]) -> Turn:
    text = "\n\n".join(c.body.strip() for c in comments)
    return Turn(
        speaker_role=role,
        author=comments[0].author,
        text=text,
        token_count=len(tokenize(text)),
        source_comment_id=comments[0].id,
    )


def extract_dialogues(
    tree: ThreadTree, min_turns: int = 6, min_first_level_score: int = 2
) -> list[Dialogue]:
    """Extract explainee/explainer dialogues seeded by first-level comments."""
    if min_turns < 2:
        raise ValueError("min_turns must be >= 2")
    root = tree.root
    if not _usable(root):
        log.warning("thread %s skipped: root author deleted or empty question", root.thread_id)
        return []
    dialogues = []
    for first in tree.kids(root.id):
        if first.score < min_first_level_score or first.author == root.author:
            continue
        if not _usable(first):
            continue
        groups = _walk(tree, first)
        if len(groups) < min_turns:
            continue
        dialogues.append(
            Dialogue(
                dialogue_id=f"{root.id}_{first.id}",
                topic_question=root.body.strip(),
                turns=tuple(_make_turn(role, comments) for role, comments in groups),
                explainee_author=root.author,
                explainer_author=first.author,
            )
        )
    return dialogues


def extract_corpus(
    trees: Iterable[ThreadTree], min_turns: int = 6, min_first_level_score: int = 2
) -> list[Dialogue]:
    out: list[Dialogue] = []
    for tree in trees:
        out.extend(extract_dialogues(tree, min_turns, min_first_level_score))
    return out

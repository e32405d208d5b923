import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from explanation_dialogues.ingest import (
    CommentRecord,
    DumpError,
    extract_corpus,
    extract_dialogues,
    parse_dump,
    select_candidate_threads,
    tokenize,
)
from explanation_dialogues.io import dumps_jsonl, read_jsonl

from helpers import check_dialogue_invariants, random_thread

FIXTURES = Path(__file__).parent / "fixtures"


def rec(id, parent, author="a", score=1, created=0, thread="t", body="Some text here."):
    return CommentRecord(id, parent, thread, author, body, score, created)


def chain(authors, thread="t", first_score=12, start=1_600_000_000):
    """Root plus a single nested reply chain with the given authors."""
    recs = [rec("r", None, authors[0], created=start, thread=thread, body="Why is that so?")]
    for i, author in enumerate(authors[1:], 1):
        recs.append(rec(f"c{i}", recs[-1].id, author, score=first_score if i == 1 else 1,
                        created=start + i, thread=thread, body=f"Reply number {i}."))
    return recs


# --- parse_dump ---------------------------------------------------------------

def test_parse_empty():
    assert parse_dump([]) == []


def test_root_children_ordered_by_time():
    trees = parse_dump([rec("r", None), rec("b", "r", created=5), rec("a", "r", created=9)])
    assert len(trees) == 1
    assert trees[0].children["r"] == ("b", "a")


def test_fixture_dump_orphan_excluded():
    trees = parse_dump(read_jsonl(FIXTURES / "dump.jsonl"))
    assert [t.root.id for t in trees] == ["r1", "r2", "r3"]
    t2 = trees[1]
    assert [r.id for r in t2.lost] == ["k10"]
    assert "k10" not in t2.records
    assert t2.comment_count == 9
    assert trees[0].comment_count == 9 and trees[2].comment_count == 4
    assert trees[0].month_key == "2020-01" and trees[2].month_key == "2020-02"


def test_duplicate_id_rejected():
    with pytest.raises(DumpError, match="'x'"):
        parse_dump([rec("r", None), rec("x", "r"), rec("x", "r")])


def test_cycle_rejected():
    with pytest.raises(DumpError, match="cycle") as err:
        parse_dump([rec("r", None), rec("a", "b"), rec("b", "a")])
    assert "a" in str(err.value) and "b" in str(err.value)


def test_descendants_of_orphans_are_lost():
    trees = parse_dump([rec("r", None), rec("a", "gone"), rec("b", "a")])
    assert {r.id for r in trees[0].lost} == {"a", "b"}


# --- select_candidate_threads ----------------------------------------------------

def _thread(tid, n_comments, created):
    recs = [rec(f"{tid}r", None, thread=tid, created=created)]
    recs += [rec(f"{tid}c{i}", f"{tid}r", thread=tid, created=created + i + 1) for i in range(n_comments)]
    return recs


def test_select_limit_exceeds_supply():
    trees = parse_dump([r for i in range(40) for r in _thread(f"t{i:02d}", i % 5, 1_600_000_000 + i)])
    assert len(select_candidate_threads(trees, 100)) == 40


def test_select_tie_broken_by_root_time():
    base = 1_600_000_000
    trees = parse_dump(_thread("a", 10, base + 50) + _thread("b", 10, base + 10) + _thread("c", 5, base))
    chosen = select_candidate_threads(trees, 2)
    assert [t.root.thread_id for t in chosen] == ["b", "a"]


def test_select_one_per_month():
    jan, feb = 1_577_900_000, 1_581_000_000
    trees = parse_dump(_thread("a", 3, jan) + _thread("b", 4, jan + 9) + _thread("c", 1, feb) + _thread("d", 2, feb))
    chosen = select_candidate_threads(trees, 1)
    assert [(t.month_key, t.root.thread_id) for t in chosen] == [("2020-01", "b"), ("2020-02", "d")]


def test_select_rejects_bad_limit():
    with pytest.raises(ValueError):
        select_candidate_threads([], 0)


# --- extract_dialogues --------------------------------------------------------------

def test_six_turn_chain():
    (tree,) = parse_dump(chain(["A", "B", "A", "B", "A", "B"]))
    (d,) = extract_dialogues(tree, 6, 2)
    assert [t.author for t in d.turns] == ["A", "B", "A", "B", "A", "B"]
    assert [t.speaker_role for t in d.turns] == ["Explainee", "Explainer"] * 3
    assert d.topic_question == "Why is that so?"


def test_five_turns_not_emitted():
    (tree,) = parse_dump(chain(["A", "B", "A", "B", "A"]))
    assert extract_dialogues(tree, 6, 2) == []


def test_third_party_stops_walk():
    (tree,) = parse_dump(chain(["A", "B", "A", "C", "B", "A", "B"]))
    assert extract_dialogues(tree, 6, 2) == []
    (d,) = extract_dialogues(tree, 3, 2)
    assert [t.source_comment_id for t in d.turns] == ["r", "c1", "c2"]


def test_low_score_first_level_ignored():
    (tree,) = parse_dump(chain(["A", "B", "A", "B", "A", "B"], first_score=1))
    assert extract_dialogues(tree, 6, 2) == []


def test_self_reply_is_merged():
    (tree,) = parse_dump(chain(["A", "B", "B", "A", "B", "A", "B"]))
    (d,) = extract_dialogues(tree, 6, 2)
    assert d.turns[1].text == "Reply number 1.\n\nReply number 2."
    assert d.turns[1].token_count == 6
    assert len(d.turns) == 6


def test_deleted_root_skipped(caplog):
    recs = chain(["[deleted]", "B", "[deleted]", "B", "[deleted]", "B"])
    (tree,) = parse_dump(recs)
    assert extract_dialogues(tree) == []
    assert "root author deleted" in caplog.text


def test_highest_scored_branch_followed():
    recs = chain(["A", "B", "A", "B"])
    recs += [rec("low", "c3", "A", score=1, created=1_600_000_010, body="Low branch."),
             rec("high", "c3", "A", score=9, created=1_600_000_011, body="High branch."),
             rec("end", "high", "B", created=1_600_000_012, body="The end.")]
    (tree,) = parse_dump(recs)
    (d,) = extract_dialogues(tree, 6, 2)
    assert [t.source_comment_id for t in d.turns][-2:] == ["high", "end"]


def test_fixture_golden_dialogues():
    trees = parse_dump(read_jsonl(FIXTURES / "dump.jsonl"))
    out = dumps_jsonl(d.to_dict() for d in extract_corpus(select_candidate_threads(trees, 100)))
    assert out == (FIXTURES / "golden_dialogues.jsonl").read_text(encoding="utf-8")


def test_dialogue_round_trip():
    for line in (FIXTURES / "golden_dialogues.jsonl").read_text().splitlines():
        from explanation_dialogues.ingest import Dialogue
        obj = json.loads(line)
        assert Dialogue.from_dict(obj).to_dict() == obj


# --- tokenize -----------------------------------------------------------------------

def test_tokenize_examples():
    assert tokenize("") == []
    # five tokens: the question mark is stripped from "many?"
    assert tokenize("Why are there not many?", lower=True) == ["why", "are", "there", "not", "many"]
    assert tokenize("co-construct an explanation.") == ["co-construct", "an", "explanation"]
    assert tokenize('  "flamboyant" ... males!?') == ["flamboyant", "males"]


@given(st.text())
def test_tokenize_pieces_nonempty(text):
    for tok in tokenize(text):
        assert tok and not any(ch.isspace() for ch in tok)


# --- properties over random trees --------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=2, max_value=8))
def test_random_tree_invariants(seed, min_turns):
    recs = random_thread(random.Random(seed))
    (tree,) = parse_dump(recs)
    dialogues = extract_dialogues(tree, min_turns, 2)
    for d in dialogues:
        check_dialogue_invariants(d, min_turns)
    # determinism
    again = extract_dialogues(parse_dump(list(reversed(recs)))[0], min_turns, 2)
    assert dumps_jsonl(d.to_dict() for d in again) == dumps_jsonl(d.to_dict() for d in dialogues)
    # no comment used twice, apart from the shared root question
    used = [t.source_comment_id for d in dialogues for t in d.turns[1:]]
    assert len(used) == len(set(used))
    assert len(set(used) | {"root"}) <= len(tree.records)

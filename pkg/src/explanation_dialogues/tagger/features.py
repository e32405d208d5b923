"""Sparse binary turn features hashed to stable 64-bit ids."""
from __future__ import annotations

import hashlib

from ..ingest import EXPLAINEE, Dialogue, tokenize

FeatureVector = dict[int, float]


def feature_id(name: str) -> int:
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "big")


def position_bucket(index: int, n_turns: int) -> str:
    if index == 0:
        return "first"
    frac = index / n_turns
    if frac < 0.25:
        return "early"
    if frac < 0.75:
        return "mid"
    return "late"


def length_bucket(n_tokens: int) -> str:
    if n_tokens < 10:
        return "short"
    if n_tokens < 50:
        return "med"
    return "long"


def turn_feature_names(dialogue: Dialogue, index: int) -> list[str]:
    if not 0 <= index < len(dialogue.turns):
        raise IndexError(f"turn index {index} out of range for {len(dialogue.turns)} turns")
    turn = dialogue.turns[index]
    toks = tokenize(turn.text, lower=True)
    names = {"bias"}
    names.add("role=explainee" if turn.speaker_role == EXPLAINEE else "role=explainer")
    names.add(f"pos={position_bucket(index, len(dialogue.turns))}")
    names.add(f"len={length_bucket(len(toks))}")
    if "?" in turn.text:
        names.add("qm=1")
    names.update(f"w={t}" for t in toks)
    names.update(f"b={a}_{b}" for a, b in zip(toks, toks[1:]))
    return sorted(names)


def extract_turn_features(dialogue: Dialogue, index: int) -> FeatureVector:
    return {feature_id(name): 1.0 for name in turn_feature_names(dialogue, index)}


def dialogue_features(dialogue: Dialogue) -> list[FeatureVector]:
    return [extract_turn_features(dialogue, i) for i in range(len(dialogue.turns))]

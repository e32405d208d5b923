"""Turn label taxonomies, the quality scale and their canonical codes."""
from __future__ import annotations

import enum


class Dimension(str, enum.Enum):
    MOVE = "move"
    ACT = "act"
    TOPIC = "topic"
    QUALITY = "quality"

    @property
    def codes(self) -> tuple[str, ...]:
        return CODES[self]

    @property
    def size(self) -> int:
        return len(CODES[self])

    def index(self, code: str) -> int:
        try:
            return CODES[self].index(code)
        except ValueError:
            raise ValueError(f"unknown {self.value} label {code!r}") from None

    @classmethod
    def parse(cls, value: str) -> "Dimension":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown dimension {value!r}") from None


TURN_DIMENSIONS = (Dimension.MOVE, Dimension.ACT, Dimension.TOPIC)


class MoveLabel(enum.Enum):
    TestUnderstanding = "e1"
    TestPriorKnowledge = "e2"
    ProvideExplanation = "e3"
    RequestExplanation = "e4"
    SignalUnderstanding = "e5"
    SignalNonUnderstanding = "e6"
    ProvideFeedback = "e7"
    ProvideAssessment = "e8"
    ProvideExtraInfo = "e9"
    Other = "e10"


class ActLabel(enum.Enum):
    CheckQuestion = "d1"
    WhatHowQuestion = "d2"
    OtherQuestion = "d3"
    ConfirmingAnswer = "d4"
    DisconfirmingAnswer = "d5"
    OtherAnswer = "d6"
    AgreeingStatement = "d7"
    DisagreeingStatement = "d8"
    InformingStatement = "d9"
    Other = "d10"


class TopicLabel(enum.Enum):
    MainTopic = "t1"
    Subtopic = "t2"
    RelatedTopic = "t3"
    NoOtherTopic = "t4"


QUALITY_SCORES = (1, 2, 3, 4, 5)

CODES: dict[Dimension, tuple[str, ...]] = {
    Dimension.MOVE: tuple(m.value for m in MoveLabel),
    Dimension.ACT: tuple(a.value for a in ActLabel),
    Dimension.TOPIC: tuple(t.value for t in TopicLabel),
    Dimension.QUALITY: tuple(f"q{s}" for s in QUALITY_SCORES),
}

LABEL_NAMES: dict[str, str] = {
    **{m.value: m.name for m in MoveLabel},
    **{a.value: a.name for a in ActLabel},
    **{t.value: t.name for t in TopicLabel},
}

# Rendering table for flow strings; one name per code so flows stay lossless.
SHORT_NAMES: dict[str, str] = {
    "e1": "TestUnder.",
    "e2": "TestPrior",
    "e3": "Explain",
    "e4": "Req.",
    "e5": "SigUnder.",
    "e6": "SigNonUnder.",
    "e7": "Feedback",
    "e8": "Assess.",
    "e9": "ExtraInfo",
    "e10": "Other",
    "d1": "Check",
    "d2": "WhatHow",
    "d3": "Ask",
    "d4": "Confirm",
    "d5": "Disconfirm",
    "d6": "Answer",
    "d7": "Agree",
    "d8": "Disagree",
    "d9": "Inform",
    "d10": "Other",
    "t1": "Main",
    "t2": "Suptopic",
    "t3": "Related",
    "t4": "Other",
}


def quality_code(score: int) -> str:
    if score not in QUALITY_SCORES:
        raise ValueError(f"quality score must be in 1..5, got {score!r}")
    return f"q{score}"


def quality_from_code(code: str) -> int:
    return Dimension.QUALITY.index(code) + 1

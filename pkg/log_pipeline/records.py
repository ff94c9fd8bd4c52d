from __future__ import annotations

from dataclasses import dataclass, field

NORMAL = 0
ANOMALOUS = 1


@dataclass(frozen=True)
class LogEvent:
    """
    One parsed log line: its template with parameters masked as `<*>`.

    A line naming several sessions keeps the first as `session_key` and the
    rest, in order of appearance, as `other_sessions`.
    """

    template_text: str
    line_index: int
    label: int = NORMAL
    session_key: str | None = None
    other_sessions: tuple[str, ...] = ()

    @property
    def session_keys(self) -> tuple[str, ...]:
        return (self.session_key, *self.other_sessions) if self.session_key else ()

    @property
    def is_anomalous(self) -> bool:
        return self.label == ANOMALOUS

    def to_dict(self) -> dict:
        return {
            "template": self.template_text,
            "line": self.line_index,
            "label": self.label,
            "session": self.session_key,
            "other_sessions": list(self.other_sessions),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> LogEvent:
        return cls(
            payload["template"],
            payload["line"],
            payload["label"],
            payload.get("session"),
            tuple(payload.get("other_sessions", ())),
        )


@dataclass(frozen=True)
class LogSequence:
    """
    An ordered group of events with one binary label.

    `order_key` is the smallest line index among the members and stands in
    for the sequence's timestamp.
    """

    key: str
    events: tuple[LogEvent, ...]
    label: int
    order_key: int = field(default=-1)

    def __post_init__(self):
        if self.order_key < 0 and self.events:
            object.__setattr__(self, "order_key", min(event.line_index for event in self.events))

    def __len__(self) -> int:
        return len(self.events)

    @property
    def templates(self) -> list[str]:
        return [event.template_text for event in self.events]

    def with_templates(self, templates: list[str]) -> LogSequence:
        events = tuple(
            LogEvent(text, event.line_index, event.label, event.session_key, event.other_sessions)
            for text, event in zip(templates, self.events)
        )
        return LogSequence(self.key, events, self.label, self.order_key)

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "label": self.label,
            "order_key": self.order_key,
            "events": [event.to_dict() for event in self.events],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> LogSequence:
        events = tuple(LogEvent.from_dict(event) for event in payload["events"])
        return cls(payload["key"], events, payload["label"], payload["order_key"])


@dataclass(frozen=True)
class LabeledSplit:
    train: list[LogSequence]
    test: list[LogSequence]

    @property
    def ratio(self) -> float:
        return len(self.train) / (len(self.train) + len(self.test))


def concat_sequence_text(seq: LogSequence) -> str:
    """Templates joined with single spaces, the text body fed to the tokenizer."""
    return " ".join(seq.templates)


def class_balance(seqs: list[LogSequence]) -> dict[str, int]:
    anomalous = sum(seq.label for seq in seqs)
    return {"normal": len(seqs) - anomalous, "anomalous": anomalous}

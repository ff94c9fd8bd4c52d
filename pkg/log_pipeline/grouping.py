from __future__ import annotations

import math
from typing import Mapping

from core.exceptions import ConfigError, GroupingError, InputError
from log_pipeline.records import ANOMALOUS, NORMAL, LabeledSplit, LogEvent, LogSequence


def _any_anomalous(events: tuple[LogEvent, ...] | list[LogEvent]) -> int:
    return ANOMALOUS if any(event.is_anomalous for event in events) else NORMAL


def group_sessions(events: list[LogEvent], session_labels: Mapping[str, int] | None = None) -> list[LogSequence]:
    """
    One sequence per session key, ordered by first appearance. An event naming
    several sessions joins each of them.

    With a label table, a session's label is looked up there; sessions missing
    from the table (or no table at all) fall back to the any-anomalous rule.
    """
    members: dict[str, list[LogEvent]] = {}
    for event in events:
        if not event.session_key:
            raise GroupingError(f"line {event.line_index}: event has no session key ('{event.template_text}')")
        for key in event.session_keys:
            members.setdefault(key, []).append(event)

    sequences = []
    for key, group in members.items():
        group_events = tuple(group)
        if session_labels is not None and key in session_labels:
            label = int(session_labels[key])
        else:
            label = _any_anomalous(group_events)
        sequences.append(LogSequence(key, group_events, label))
    return sequences


def group_windows(events: list[LogEvent], window: int = 50, stride: int | None = None) -> list[LogSequence]:
    """
    Fixed-size windows in file order.

    stride defaults to `window` (non-overlapping). The final partial window is
    kept; with overlap, windowing stops at the first window reaching the end.
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    stride = window if stride is None else stride
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")

    sequences = []
    for start in range(0, len(events), stride):
        chunk = tuple(events[start:start + window])
        sequences.append(LogSequence(f"w{len(sequences)}", chunk, _any_anomalous(chunk)))
        if start + window >= len(events):
            break
    return sequences


def chronological_split(seqs: list[LogSequence], train_ratio: float) -> LabeledSplit:
    """First floor(ratio * n) sequences train, the rest test."""
    if not 0.0 < train_ratio < 1.0:
        raise ConfigError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    keys = [seq.order_key for seq in seqs]
    if any(later < earlier for earlier, later in zip(keys, keys[1:])):
        raise InputError("chronological_split needs sequences sorted by order_key")

    cut = math.floor(train_ratio * len(seqs) + 1e-9)
    if cut == 0 or cut == len(seqs):
        raise ConfigError(
            f"train_ratio {train_ratio} on {len(seqs)} sequence(s) leaves an empty "
            f"{'train' if cut == 0 else 'test'} partition"
        )
    return LabeledSplit(train=list(seqs[:cut]), test=list(seqs[cut:]))

"""
Synthetic labeled-lines corpora with a planted anomalous template.

Normal lines follow a repeating workflow of short templates, with the odd pair
of neighbouring events swapped. Every normal template carries an action word
of the sample synonym lexicon so that the unstable-log protocol has something
to rewrite. A 50-line window stays well under the default 256-token limit.
"""

from __future__ import annotations

import numpy as np

from log_pipeline.parsing import mask_parameters
from log_pipeline.records import ANOMALOUS, NORMAL, LogEvent, LogSequence

NORMAL_TEMPLATES = (
    "open file {a}",
    "close file {a}",
    "read block {a}",
    "write block {a}",
    "send packet {a}",
    "receive packet {a}",
    "start worker {a}",
    "stop worker {a}",
    "connect session {a}",
    "update cache {a}",
    "request lease {a}",
    "allocate buffer {a}",
    "release buffer {a}",
    "verify checksum 0x{a:x}",
    "load config {a}",
    "save snapshot {a}",
    "fetch page {a}",
    "create directory /tmp/job_{a}",
    "delete file /tmp/job_{a}.{b}",
)

# indices into NORMAL_TEMPLATES, one pass of the workflow
WORKFLOW = (6, 8, 14, 10, 11, 0, 2, 3, 2, 3, 13, 4, 5, 4, 5, 9, 16, 9, 15, 12, 17, 18, 1, 7, 16)
SWAP_RATE = 0.05

ANOMALY_TEMPLATE = "fatal machine check interrupt halted core {a} node {b}"
ANOMALY_LABEL = "KERNPANIC"


def _render(template: str, rng: np.random.Generator) -> str:
    return template.format(a=int(rng.integers(1, 100_000)), b=int(rng.integers(1, 255)))


def workflow_stages(count: int, rng: np.random.Generator) -> np.ndarray:
    """Template indices of `count` consecutive normal lines."""
    stages = np.resize(np.asarray(WORKFLOW), count)
    for index in np.flatnonzero(rng.random(max(count - 1, 0)) < SWAP_RATE):
        stages[index], stages[index + 1] = stages[index + 1], stages[index]
    return stages


def synthesize_corpus(windows: int, window: int = 50, anomaly_rate: float = 0.05, seed: int = 0) -> list[str]:
    """
    Lines of a labeled-lines log: `windows * window` lines, with exactly
    round(anomaly_rate * windows) windows holding one planted anomalous line
    in place of a normal one.
    """
    rng = np.random.default_rng(seed)
    planted = set(rng.choice(windows, size=round(anomaly_rate * windows), replace=False).tolist())
    stages = workflow_stages(windows * window, rng)
    lines = []
    for index in range(windows):
        anomalous_slot = int(rng.integers(window)) if index in planted else -1
        for slot in range(window):
            if slot == anomalous_slot:
                lines.append(f"{ANOMALY_LABEL} {_render(ANOMALY_TEMPLATE, rng)}")
            else:
                lines.append(f"- {_render(NORMAL_TEMPLATES[stages[index * window + slot]], rng)}")
    return lines


def synthetic_sequences(normal: int, anomalous: int, length: int = 3, seed: int = 0) -> list[LogSequence]:
    """Already-grouped sequences, anomalous ones placed uniformly at random."""
    rng = np.random.default_rng(seed)
    total = normal + anomalous
    anomalous_ids = set(rng.choice(total, size=anomalous, replace=False).tolist())
    masked = [mask_parameters(_render(template, rng)) for template in NORMAL_TEMPLATES]
    masked_anomaly = mask_parameters(_render(ANOMALY_TEMPLATE, rng))

    sequences = []
    for index in range(total):
        picks = rng.integers(len(masked), size=length)
        templates = [masked[int(pick)] for pick in picks]
        label = NORMAL
        if index in anomalous_ids:
            templates[int(rng.integers(length))] = masked_anomaly
            label = ANOMALOUS
        first_line = index * length + 1
        events = tuple(
            LogEvent(text, first_line + offset, ANOMALOUS if text == masked_anomaly else NORMAL)
            for offset, text in enumerate(templates)
        )
        sequences.append(LogSequence(f"s{index}", events, label))
    return sequences

"""
Raw log lines to `LogEvent`s.

Parameters are masked with a fixed list of regular expressions (block ids,
IP endpoints, hex strings, paths, numbers) followed by a token pass that masks
anything still carrying a digit, so templates never keep numeric literals.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from core.exceptions import InputError, LogParseError, MissingArtifactError
from log_pipeline.records import ANOMALOUS, NORMAL, LogEvent

logger = logging.getLogger(__name__)

WILDCARD = "<*>"

HDFS = "hdfs"
LABELED_LINES = "labeled-lines"
FORMATS = (HDFS, LABELED_LINES)

SESSION_PATTERN = re.compile(r"blk_-?\d+")

_HDFS_HEADER = re.compile(r"^\d{6}\s+\d{6}\s+\d+\s+[A-Z]+\s+[\w.$\-]+:\s*(?P<content>.*)$")

_MASKS = [
    SESSION_PATTERN,
    re.compile(r"/?(?:\d{1,3}\.){3}\d{1,3}(?::\d+)?"),
    re.compile(r"\b0[xX][0-9a-fA-F]+\b"),
    re.compile(r"\b(?=[0-9a-fA-F]*\d)[0-9a-fA-F]{8,}\b"),
    re.compile(r"(?<![\w<>*])(?:/[\w.\-]+)+/?"),
    re.compile(r"(?<![A-Za-z_])[-+]?\d+(?:\.\d+)?"),
]

MAX_REPORTED_REJECTIONS = 20


def mask_parameters(content: str) -> str:
    for pattern in _MASKS:
        content = pattern.sub(WILDCARD, content)
    tokens = [WILDCARD if any(ch.isdigit() for ch in token) else token for token in content.split()]
    return " ".join(tokens)


def parse_line(raw: str, format: str, line_index: int = 0, header_fields: int = 0) -> LogEvent:
    """
    Parse one raw line of the given dataset format.

    hdfs: optional `<Date> <Time> <Pid> <Level> <Component>:` header, session
    keys are the distinct block ids in order of appearance. labeled-lines: first field is the label ("-" is
    normal), then `header_fields` fields of metadata, then the message.
    """
    line = raw.rstrip("\r\n")
    if not line.strip():
        raise LogParseError(f"line {line_index}: empty line")

    if format == HDFS:
        match = _HDFS_HEADER.match(line)
        content = match.group("content") if match else line.strip()
        sessions = list(dict.fromkeys(SESSION_PATTERN.findall(content)))
        label = NORMAL
    elif format == LABELED_LINES:
        fields = line.split()
        if len(fields) < header_fields + 2:
            raise LogParseError(
                f"line {line_index}: expected at least {header_fields + 2} fields, got {len(fields)}"
            )
        label = NORMAL if fields[0] == "-" else ANOMALOUS
        content = " ".join(fields[1 + header_fields:])
        sessions = []
    else:
        raise InputError(f"Unknown dataset format '{format}', expected one of {', '.join(FORMATS)}")

    template = mask_parameters(content)
    if not template:
        raise LogParseError(f"line {line_index}: no message text")
    return LogEvent(template, line_index, label, sessions[0] if sessions else None, tuple(sessions[1:]))


@dataclass
class ParseReport:
    accepted: int = 0
    rejected: int = 0
    # invalid UTF-8 byte sequences, each decoded as a single U+FFFD
    replaced_sequences: int = 0
    rejections: list[str] = field(default_factory=list)

    def reject(self, reason: str) -> None:
        self.rejected += 1
        if len(self.rejections) < MAX_REPORTED_REJECTIONS:
            self.rejections.append(reason)
            logger.warning("Rejected %s", reason)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "replaced_sequences": self.replaced_sequences,
            "rejections": list(self.rejections),
        }


def _decode(raw: bytes, report: ParseReport) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.decode("utf-8", errors="replace")
        report.replaced_sequences += text.count("\ufffd") - raw.count("\ufffd".encode("utf-8"))
        return text


def read_log_file(path: str | Path, format: str, header_fields: int = 0) -> tuple[list[LogEvent], ParseReport]:
    """Parse every line of a file; 1-based line numbers are the chronological order."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"Log file not found: {path}")
    if format not in FORMATS:
        raise InputError(f"Unknown dataset format '{format}', expected one of {', '.join(FORMATS)}")

    report = ParseReport()
    events: list[LogEvent] = []
    with path.open("rb") as handle:
        for line_index, raw in enumerate(handle, start=1):
            text = _decode(raw, report)
            try:
                events.append(parse_line(text, format, line_index, header_fields))
            except LogParseError as exc:
                report.reject(str(exc))
                continue
            report.accepted += 1

    if report.replaced_sequences:
        logger.warning("%s: replaced %d invalid UTF-8 byte sequence(s)", path, report.replaced_sequences)
    if report.rejected:
        logger.warning("%s: rejected %d of %d lines", path, report.rejected, report.rejected + report.accepted)
    return events, report


def load_session_labels(path: str | Path) -> dict[str, int]:
    """Read a `BlockId,Label` CSV (Label in {Normal, Anomaly}) into {block id: 0|1}."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"Session label file not found: {path}")
    frame = pd.read_csv(path, dtype=str)
    missing = {"BlockId", "Label"} - set(frame.columns)
    if missing:
        raise InputError(f"{path}: missing column(s) {sorted(missing)}")

    labels = frame["Label"].str.strip()
    unknown = sorted(set(labels) - {"Normal", "Anomaly"})
    if unknown:
        raise InputError(f"{path}: unknown label value(s) {unknown}")
    return dict(zip(frame["BlockId"].str.strip(), (labels == "Anomaly").astype(int).tolist()))

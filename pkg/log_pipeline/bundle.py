"""
Prepared dataset bundles.

A bundle directory holds `manifest.json` and `sequences.jsonl` (every
sequence, chronological). The train/test cut is not materialised; it is
recomputed from the stored ratio so that protocols can re-cut the same data.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from core.exceptions import ConfigError, LoadError, MissingArtifactError
from log_pipeline.grouping import chronological_split, group_sessions, group_windows
from log_pipeline.parsing import HDFS, ParseReport, load_session_labels, read_log_file
from log_pipeline.records import LabeledSplit, LogSequence, class_balance

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SEQUENCES = "sequences.jsonl"


@dataclass
class DatasetBundle:
    name: str
    sequences: list[LogSequence]
    manifest: dict

    @property
    def train_ratio(self) -> float:
        return float(self.manifest["train_ratio"])

    def split(self, train_ratio: float | None = None) -> LabeledSplit:
        return chronological_split(self.sequences, self.train_ratio if train_ratio is None else train_ratio)


def prepare_sequences(
    path: str | Path,
    format: str,
    grouping: str,
    window: int = 50,
    stride: int | None = None,
    labels_path: str | Path | None = None,
    header_fields: int = 0,
) -> tuple[list[LogSequence], ParseReport]:
    """Parse a raw log file and group it into chronologically ordered sequences."""
    if format == HDFS and labels_path is None and grouping == "session":
        raise ConfigError("The hdfs format needs a BlockId,Label CSV (--labels) for session grouping")
    events, report = read_log_file(path, format, header_fields=header_fields)

    if grouping == "session":
        session_labels = load_session_labels(labels_path) if labels_path else None
        sequences = group_sessions(events, session_labels)
    elif grouping == "window":
        sequences = group_windows(events, window=window, stride=stride)
    else:
        raise ConfigError(f"Unknown grouping '{grouping}', expected 'session' or 'window'")
    return sorted(sequences, key=lambda seq: seq.order_key), report


def write_bundle(out_dir: str | Path, name: str, sequences: list[LogSequence], **manifest) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / SEQUENCES).open("w", encoding="utf-8") as handle:
        for seq in sequences:
            handle.write(json.dumps(seq.to_dict(), sort_keys=True) + "\n")

    payload = {
        "name": name,
        "sequences": len(sequences),
        "class_balance": class_balance(sequences),
        **manifest,
    }
    (out_dir / MANIFEST).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("Wrote bundle '%s' with %d sequences to %s", name, len(sequences), out_dir)
    return out_dir


def read_bundle(bundle_dir: str | Path) -> DatasetBundle:
    bundle_dir = Path(bundle_dir)
    if not (bundle_dir / MANIFEST).is_file():
        raise MissingArtifactError(f"No dataset bundle at {bundle_dir} (missing {MANIFEST})")
    if not (bundle_dir / SEQUENCES).is_file():
        raise LoadError(f"Dataset bundle {bundle_dir} has no {SEQUENCES}")

    manifest = json.loads((bundle_dir / MANIFEST).read_text(encoding="utf-8"))
    with (bundle_dir / SEQUENCES).open(encoding="utf-8") as handle:
        sequences = [LogSequence.from_dict(json.loads(line)) for line in handle if line.strip()]
    if len(sequences) != manifest.get("sequences", len(sequences)):
        raise LoadError(f"Dataset bundle {bundle_dir}: manifest lists {manifest['sequences']} sequences, found {len(sequences)}")
    return DatasetBundle(manifest.get("name", bundle_dir.name), sequences, manifest)

"""
Experiment reports: one row per axis point, written as a CSV (pandas) and a
JSON summary rendered from the recorded ledger rows.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd
from django.db import transaction

from eval_harness.metrics import Metrics
from eval_harness.models import ExperimentRun, ReportPoint
from eval_harness.serializers import ExperimentRunSerializer

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("tp", "fp", "fn", "tn", "precision", "recall", "f1")
TIMING_COLUMNS = ("epoch_seconds", "compute_seconds")


@dataclass
class ReportRow:
    axis: str
    seed: int
    metrics: Metrics | None = None
    epoch_seconds: float | None = None
    compute_seconds: float | None = None
    init_checksum: str = ""
    f1_change: float | None = None
    error: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.error)

    @property
    def degenerate(self) -> bool:
        return self.metrics is not None and self.metrics.degenerate

    def to_record(self) -> dict:
        metrics = self.metrics.to_dict() if self.metrics else dict.fromkeys(METRIC_COLUMNS)
        return {
            "axis": self.axis,
            **metrics,
            "f1_change": self.f1_change,
            "epoch_seconds": self.epoch_seconds,
            "compute_seconds": self.compute_seconds,
            "seed": self.seed,
            "init_checksum": self.init_checksum,
            "degenerate": self.degenerate,
            "error": self.error,
            **self.extra,
        }


@dataclass
class ExperimentReport:
    protocol: str
    rows: list[ReportRow]
    seed: int
    fingerprint: str = ""
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def failures(self) -> list[ReportRow]:
        return [row for row in self.rows if row.failed]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_record() for row in self.rows])

    def reproducible_view(self) -> list[dict]:
        """Rows without wall-clock columns; equal for equal (config, seed)."""
        return [{k: v for k, v in row.to_record().items() if k not in TIMING_COLUMNS} for row in self.rows]

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    @transaction.atomic
    def record(self, output_dir: str | Path = "") -> ExperimentRun:
        run = ExperimentRun.objects.create(
            protocol=self.protocol,
            fingerprint=self.fingerprint,
            seed=self.seed,
            config=self.config,
            output_dir=str(output_dir),
        )
        ReportPoint.objects.bulk_create(
            ReportPoint(
                run=run,
                position=position,
                axis=row.axis,
                **(row.metrics.to_dict() if row.metrics else {}),
                f1_change=row.f1_change,
                epoch_seconds=row.epoch_seconds,
                compute_seconds=row.compute_seconds,
                seed=row.seed,
                init_checksum=row.init_checksum,
                degenerate=row.degenerate,
                error=row.error,
                extra=row.extra or None,
            )
            for position, row in enumerate(self.rows)
        )
        return run

    def write(self, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
        """Record the report in the ledger, then write `<stem>.csv` and `<stem>.json`."""
        out_dir = Path(out_dir)
        stem = stem or self.protocol
        csv_path = self.write_csv(out_dir / f"{stem}.csv")
        run = self.record(out_dir)
        json_path = out_dir / f"{stem}.json"
        json_path.write_text(json.dumps(ExperimentRunSerializer(run).data, indent=2), encoding="utf-8")
        logger.info("Wrote %s report (%d rows) to %s", self.protocol, len(self.rows), csv_path)
        return csv_path, json_path

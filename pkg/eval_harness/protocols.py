"""
Experiment protocols. Every point is a fresh training run. A point that
retrains the main training partition uses the master seed, as the `train`
command does, so it reproduces that run; any other point derives its seed
from the master seed and its axis value. The backbone seed stays fixed so
all points start from the same frozen model.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from core.exceptions import ConfigError, PeftLadError
from eval_harness.metrics import compute_metrics
from eval_harness.reports import ExperimentReport, ReportRow
from eval_harness.unstable import SynonymLexicon, inject_unstable, pick_action_words
from log_pipeline.grouping import chronological_split
from log_pipeline.records import LabeledSplit, LogSequence, concat_sequence_text
from model_core.config import ModelConfig
from peft_methods.config import LORA, REFT, LoraConfig, PeftConfig, ReftConfig
from tensor_engine.tensor import precision
from tokenizer.vocabulary import STYLES, Vocabulary, build_vocab
from training.checkpoint import Checkpoint
from training.optim import TrainConfig
from training.trainer import Detector, TrainingResult, build_detector, train

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 63) - 1
EVAL_BATCH = 64


def derive_seed(master: int, axis) -> int:
    digest = hashlib.sha256(f"{master}:{axis}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & SEED_MASK


def point_seed(master: int, axis=None) -> int:
    """The master seed for a retrain of the main partition (axis None), a derived seed otherwise."""
    return master if axis is None else derive_seed(master, axis)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    peft: PeftConfig
    train: TrainConfig
    seed: int = 42
    min_count: int = 1
    max_len: int = 256
    fingerprint: str = ""
    jobs: int = 1
    progress: bool = False
    extra: dict = field(default_factory=dict)

    def with_peft(self, peft: PeftConfig) -> ExperimentConfig:
        return dataclasses.replace(self, peft=peft)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "peft": self.peft.to_dict(),
            "train": self.train.to_dict(),
            "seed": self.seed,
            "min_count": self.min_count,
            "max_len": self.max_len,
            **self.extra,
        }


def parameter_checksum(detector: Detector) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted({**detector.model.named_parameters(), **detector.trainable_parameters()}.items()):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(tensor.data).tobytes())
    return digest.hexdigest()


def train_vocab(config: ExperimentConfig, sequences: list[LogSequence]) -> Vocabulary:
    return build_vocab((concat_sequence_text(seq) for seq in sequences), min_count=config.min_count, max_len=config.max_len)


def fit_point(config: ExperimentConfig, train_seqs: list[LogSequence], seed: int) -> tuple[TrainingResult, str]:
    """Train one point and return it with the checksum of its initial parameters."""
    vocab = train_vocab(config, train_seqs)
    train_config = dataclasses.replace(config.train, seed=seed)
    with precision(train_config.precision):
        checksum = parameter_checksum(build_detector(vocab, config.model, config.peft, seed))
    result = train(train_seqs, config.model, config.peft, train_config, vocab=vocab, progress=config.progress)
    return result, checksum


def score_row(axis, detector: Detector, test: list[LogSequence], seed: int, **extra) -> ReportRow:
    predictions, _ = detector.predict_sequences(test, batch_size=EVAL_BATCH)
    metrics = compute_metrics(predictions, [seq.label for seq in test])
    if metrics.degenerate:
        logger.warning("Point %s: the detector predicts a single class for every test sequence", axis)
    return ReportRow(axis=str(axis), seed=seed, metrics=metrics, extra=extra)


def run_point(config: ExperimentConfig, axis, train_seqs: list[LogSequence], test: list[LogSequence], seed: int) -> ReportRow:
    try:
        result, checksum = fit_point(config, train_seqs, seed)
        row = score_row(axis, result.detector, test, seed, train_size=len(train_seqs), test_size=len(test))
    except PeftLadError as exc:
        logger.warning("Point %s failed: %s", axis, exc)
        return ReportRow(axis=str(axis), seed=seed, error=str(exc), extra={"train_size": len(train_seqs), "test_size": len(test)})
    row.epoch_seconds = result.mean_epoch_seconds
    row.compute_seconds = float(np.mean([record.compute_seconds for record in result.epochs]))
    row.init_checksum = checksum
    row.extra["final_loss"] = result.epochs[-1].mean_loss
    return row


def run_points(jobs: int, tasks: list[Callable[[], ReportRow]]) -> list[ReportRow]:
    """Run independent points on at most `jobs` workers; rows come back in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda task: task(), tasks))


def _report(protocol: str, config: ExperimentConfig, rows: list[ReportRow], **extra) -> ExperimentReport:
    return ExperimentReport(protocol, rows, config.seed, config.fingerprint, {**config.to_dict(), **extra})


def sweep_rank(config: ExperimentConfig, split: LabeledSplit, ranks: list[int]) -> ExperimentReport:
    if not ranks:
        raise ConfigError("The rank sweep needs at least one rank")
    if list(ranks) != sorted(ranks):
        raise ConfigError(f"Ranks must be sorted ascending, got {ranks}")

    def task(rank: int) -> Callable[[], ReportRow]:
        def point() -> ReportRow:
            try:
                point_config = config.with_peft(dataclasses.replace(config.peft, rank=rank))
            except PeftLadError as exc:
                return ReportRow(axis=str(rank), seed=point_seed(config.seed, f"rank={rank}"), error=str(exc))
            return run_point(point_config, rank, split.train, split.test, point_seed(config.seed, f"rank={rank}"))

        return point

    rows = run_points(config.jobs, [task(rank) for rank in ranks])
    return _report("sweep_rank", config, rows, ranks=list(ranks), method=config.peft.method)


def sweep_train_ratio(
    config: ExperimentConfig, sequences: list[LogSequence], ratios: list[float], test_fraction: float = 0.2
) -> ExperimentReport:
    """The test partition is cut once from the end; each training prefix is re-cut from the front."""
    limit = 1.0 - test_fraction
    bad = [ratio for ratio in ratios if not 0.0 < ratio <= limit + 1e-12]
    if bad:
        raise ConfigError(f"Training ratios must lie in (0, {limit:g}] so they never reach the test partition, got {bad}")
    main = chronological_split(sequences, limit)
    test = main.test

    def task(ratio: float) -> Callable[[], ReportRow]:
        cut = math.floor(ratio * len(sequences) + 1e-9)
        seed = point_seed(config.seed, None if cut == len(main.train) else f"ratio={ratio}")
        if cut == 0:
            return lambda: ReportRow(axis=str(ratio), seed=seed, error=f"ratio {ratio} leaves an empty training prefix")
        return lambda: run_point(config, ratio, list(sequences[:cut]), test, seed)

    rows = run_points(config.jobs, [task(ratio) for ratio in ratios])
    return _report("sweep_data", config, rows, ratios=list(ratios), test_fraction=test_fraction)


def sweep_injection(
    config: ExperimentConfig,
    split: LabeledSplit,
    rates: list[float],
    lexicon: SynonymLexicon,
    action_words: list[str] | None = None,
    epochs: int = 1,
) -> ExperimentReport:
    """
    Train once, then evaluate the clean test set (axis 0.0) and one perturbed
    copy per rate. `f1_change` is relative to the clean F1.
    """
    words = pick_action_words(
        (concat_sequence_text(seq) for seq in split.train), override=action_words, candidates=lexicon.synonyms
    )
    train_config = dataclasses.replace(config.train, epochs=epochs)
    seed = point_seed(config.seed, "inject")
    result, checksum = fit_point(dataclasses.replace(config, train=train_config), split.train, seed)

    baseline = score_row(0.0, result.detector, split.test, seed, perturbed=0)
    baseline.epoch_seconds = result.mean_epoch_seconds
    baseline.init_checksum = checksum
    base_f1 = baseline.metrics.f1
    baseline.f1_change = 0.0 if base_f1 > 0 else None

    def task(rate: float) -> Callable[[], ReportRow]:
        def point() -> ReportRow:
            rate_seed = derive_seed(config.seed, f"rate={rate}")
            injected = inject_unstable(split.test, lexicon, words, rate, rate_seed)
            row = score_row(rate, result.detector, injected.sequences, rate_seed, perturbed=injected.changed)
            row.f1_change = (row.metrics.f1 - base_f1) / base_f1 if base_f1 > 0 else None
            return row

        return point

    rows = [baseline, *run_points(config.jobs, [task(rate) for rate in rates])]
    return _report("inject", config, rows, rates=list(rates), action_words=words, epochs=epochs)


def cross_eval(
    config: ExperimentConfig, train_name: str, train_split: LabeledSplit, test_splits: dict[str, LabeledSplit]
) -> ExperimentReport:
    """Train once on `train_split`, then score the test partition of every dataset with the training vocabulary."""
    seed = point_seed(config.seed)
    result, checksum = fit_point(config, train_split.train, seed)
    rows = []
    for name, split in test_splits.items():
        row = score_row(f"{train_name}->{name}", result.detector, split.test, seed, test_size=len(split.test))
        row.epoch_seconds = result.mean_epoch_seconds
        row.init_checksum = checksum
        rows.append(row)
    return _report("cross", config, rows, train_dataset=train_name, test_datasets=list(test_splits))


def benchmark(
    config: ExperimentConfig,
    split: LabeledSplit,
    methods: dict[str, PeftConfig] | None = None,
    styles: tuple[str, ...] = STYLES,
    repeats: int = 1,
) -> ExperimentReport:
    """Detection accuracy over every (model style, PEFT method) cell."""
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    methods = methods or {LORA: LoraConfig(rank=min(8, config.model.hidden)), REFT: ReftConfig()}

    def task(style: str, method: str, repeat: int) -> Callable[[], ReportRow]:
        axis = f"{style}/{method}" if repeats == 1 else f"{style}/{method}#{repeat}"
        point_config = dataclasses.replace(
            config, model=dataclasses.replace(config.model, style=style), peft=methods[method]
        )
        return lambda: run_point(point_config, axis, split.train, split.test, point_seed(config.seed, axis))

    tasks = [task(style, method, repeat) for style in styles for method in methods for repeat in range(repeats)]
    rows = run_points(config.jobs, tasks)
    return _report("benchmark", config, rows, styles=list(styles), methods=list(methods), repeats=repeats)


def evaluate_checkpoint(checkpoint: Checkpoint, name: str, test: list[LogSequence]) -> ExperimentReport:
    seed = int(checkpoint.manifest.get("seed", 0))
    row = score_row(name, checkpoint.detector, test, seed, test_size=len(test))
    config = {key: checkpoint.manifest.get(key) for key in ("model", "peft", "seed", "precision")}
    return ExperimentReport("evaluate", [row], seed, checkpoint.fingerprint or "", config)

"""
Fine-tuning loop: only the PEFT attachment and the classifier head are handed
to the optimizer; the backbone tensors never require gradients.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.utils.class_weight import compute_class_weight
from tqdm import tqdm

from core.exceptions import ConfigError
from log_pipeline.records import LabeledSplit, LogSequence, concat_sequence_text
from model_core.config import ModelConfig
from model_core.transformer import PeftAttachment, Transformer
from peft_methods.config import PeftConfig
from peft_methods.factory import ParameterBudget, build_attachment, trainable_param_count
from peft_methods.reft import ReftAttachment
from tensor_engine.tensor import Tensor, precision
from tokenizer.vocabulary import Batch, TokenizedSequence, Vocabulary, build_vocab, collate, encode
from training.head import CLASSES, ClassifierHead, labels_from_scores, loss, scores_from_logits
from training.optim import AdamW, TrainConfig

logger = logging.getLogger(__name__)

HEAD_STREAM = 1
SHUFFLE_STREAM = 2


@dataclass
class Detector:
    model: Transformer
    attachment: PeftAttachment
    head: ClassifierHead
    vocab: Vocabulary
    peft_config: PeftConfig | None = None

    @property
    def style(self) -> str:
        return self.model.config.style

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {**self.attachment.named_parameters(), **self.head.named_parameters()}

    def encode(self, sequences: list[LogSequence]) -> list[TokenizedSequence]:
        return [encode(concat_sequence_text(seq), self.vocab, self.style, seq.label) for seq in sequences]

    def logits(self, batch: Batch, rng: np.random.Generator | None = None) -> Tensor:
        hidden = self.model(batch, self.attachment, rng)
        return self.head(hidden.select(batch.positions))

    def score_batch(self, batch: Batch) -> np.ndarray:
        return scores_from_logits(self.logits(batch).data)

    def score_encoded(self, items: list[TokenizedSequence], batch_size: int = 32) -> np.ndarray:
        if not items:
            return np.zeros(0)
        return np.concatenate([self.score_batch(collate(items[i : i + batch_size])) for i in range(0, len(items), batch_size)])

    def predict_sequences(self, sequences: list[LogSequence], batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
        scores = self.score_encoded(self.encode(sequences), batch_size)
        return labels_from_scores(scores), scores

    def predict(self, seq: LogSequence) -> tuple[int, float]:
        labels, scores = self.predict_sequences([seq])
        return int(labels[0]), float(scores[0])


def build_detector(vocab: Vocabulary, model_config: ModelConfig, peft_config: PeftConfig | None, seed: int) -> Detector:
    """Backbone from `model_config.seed`; attachment and head from the run `seed`."""
    model_config = dataclasses.replace(model_config, vocab_size=len(vocab), max_len=vocab.max_len)
    model = Transformer.initialise(model_config)
    attachment = build_attachment(model_config, peft_config, seed)
    head = ClassifierHead.initialise(np.random.default_rng([seed, HEAD_STREAM]), model_config.hidden)
    return Detector(model, attachment, head, vocab, peft_config)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    compute_seconds: float
    total_seconds: float
    steps: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainingResult:
    detector: Detector
    epochs: list[EpochRecord]
    budget: ParameterBudget
    config: TrainConfig
    orthonormality: list[float] = field(default_factory=list)

    @property
    def mean_epoch_seconds(self) -> float:
        return float(np.mean([record.total_seconds for record in self.epochs])) if self.epochs else 0.0


def class_weights(labels, mode: str | None) -> np.ndarray | None:
    """
    Loss weight per class. "balanced" gives each class present n / (k · count);
    a class missing from `labels` keeps weight 1.
    """
    if mode is None:
        return None
    labels = np.asarray(labels)
    present = np.unique(labels)
    weights = np.ones(CLASSES)
    weights[present] = compute_class_weight(mode, classes=present, y=labels)
    return weights


class Trainer:
    def __init__(self, detector: Detector, config: TrainConfig, progress: bool = False):
        self.detector = detector
        self.config = config
        self.progress = progress
        self.optimizer = AdamW(detector.trainable_parameters(), config)
        self.rng = np.random.default_rng([config.seed, SHUFFLE_STREAM])
        self.orthonormality: list[float] = []
        self.class_weights: np.ndarray | None = None

    def step(self, batch: Batch) -> float:
        value = loss(self.detector.logits(batch, self.rng), batch.labels, self.class_weights)
        value.backward()
        self.optimizer.step()
        if isinstance(self.detector.attachment, ReftAttachment):
            self.orthonormality.append(self.detector.attachment.reorthonormalize())
        return value.item()

    def fit(self, items: list[TokenizedSequence]) -> list[EpochRecord]:
        if not items:
            raise ConfigError("Cannot train on an empty training split")
        size = self.config.batch_size
        self.class_weights = class_weights([item.label for item in items], self.config.class_weight)
        if self.class_weights is not None:
            logger.info("Class weights %s", np.round(self.class_weights, 4).tolist())
        records = []
        for epoch in range(1, self.config.epochs + 1):
            started = time.perf_counter()
            compute = 0.0
            losses = []
            order = self.rng.permutation(len(items))
            starts = range(0, len(items), size)
            for start in tqdm(starts, desc=f"epoch {epoch}", disable=not self.progress, leave=False):
                batch = collate([items[i] for i in order[start : start + size]])
                tick = time.perf_counter()
                losses.append(self.step(batch) * len(batch))
                compute += time.perf_counter() - tick
            record = EpochRecord(epoch, sum(losses) / len(items), compute, time.perf_counter() - started, len(starts))
            logger.info("Epoch %d: loss %.6f (%.2fs compute, %.2fs total)", epoch, record.mean_loss, compute, record.total_seconds)
            records.append(record)
        return records


def train(
    split: LabeledSplit | list[LogSequence],
    model_config: ModelConfig,
    peft_config: PeftConfig | None,
    config: TrainConfig,
    vocab: Vocabulary | None = None,
    min_count: int = 1,
    max_len: int | None = None,
    progress: bool = False,
) -> TrainingResult:
    """
    Build a vocabulary from the training sequences (unless given), attach the
    PEFT method to a freshly seeded backbone and fine-tune.
    """
    sequences = split.train if isinstance(split, LabeledSplit) else split
    if not sequences:
        raise ConfigError("Cannot train on an empty training split")
    labels = {seq.label for seq in sequences}
    if len(labels) < 2:
        logger.warning("Training split holds a single class (%s); the detector cannot learn a boundary", labels.pop())

    if vocab is None:
        vocab = build_vocab(
            (concat_sequence_text(seq) for seq in sequences),
            min_count=min_count,
            max_len=max_len or model_config.max_len,
        )
    with precision(config.precision):
        detector = build_detector(vocab, model_config, peft_config, config.seed)
        # tokenization happens once, outside the timed epochs
        items = detector.encode(sequences)
        trainer = Trainer(detector, config, progress=progress)
        epochs = trainer.fit(items)

    return TrainingResult(
        detector=detector,
        epochs=epochs,
        budget=trainable_param_count(detector.model.config, peft_config),
        config=config,
        orthonormality=trainer.orthonormality,
    )

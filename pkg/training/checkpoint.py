"""
Checkpoint directory layout:

    manifest.json  parameter names, shapes, byte offsets, precision tag,
                   model/peft/train configs, config fingerprint, vocabulary file
    weights.bin    trainable parameters only as little-endian float32,
                   row-major, concatenated in manifest order; a float64
                   run is narrowed on save and widened again on load
    vocab.json     the training vocabulary

The frozen backbone is not stored: it is rebuilt from the model config seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core.exceptions import LoadError, MissingArtifactError
from model_core.config import ModelConfig
from peft_methods.config import LORA, LoraConfig, ReftConfig
from tensor_engine.tensor import precision
from tokenizer.vocabulary import Vocabulary
from training.trainer import Detector, build_detector

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
WEIGHTS = "weights.bin"
VOCAB = "vocab.json"

WIRE_TYPE = "<f4"


def _peft_from_dict(payload: dict | None):
    if not payload:
        return None
    options = {key: value for key, value in payload.items() if key != "method"}
    if options.get("layers") is not None:
        options["layers"] = tuple(options["layers"])
    if payload["method"] == LORA:
        options["targets"] = tuple(options.get("targets", ()))
        return LoraConfig(**options)
    return ReftConfig(**options)


@dataclass
class Checkpoint:
    detector: Detector
    manifest: dict

    @property
    def fingerprint(self) -> str | None:
        return self.manifest.get("fingerprint")

    @property
    def precision(self) -> str:
        return self.manifest.get("precision", "float32")

    @classmethod
    def from_detector(cls, detector: Detector, fingerprint: str | None = None, seed: int = 0, **extra) -> Checkpoint:
        tag = "float64" if detector.head.weight.dtype == np.float64 else "float32"
        manifest = {
            "fingerprint": fingerprint,
            "precision": tag,
            "seed": seed,
            "model": detector.model.config.to_dict(),
            "peft": detector.peft_config.to_dict() if detector.peft_config is not None else None,
            "vocabulary": VOCAB,
            **extra,
        }
        return cls(detector, manifest)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries, offset = [], 0
        with (directory / WEIGHTS).open("wb") as handle:
            for name, tensor in self.detector.trainable_parameters().items():
                payload = np.ascontiguousarray(tensor.data, dtype=WIRE_TYPE).tobytes()
                handle.write(payload)
                entries.append({"name": name, "shape": list(tensor.shape), "offset": offset, "bytes": len(payload)})
                offset += len(payload)

        self.detector.vocab.save(directory / VOCAB)
        manifest = {**self.manifest, "parameters": entries}
        (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        logger.info("Saved checkpoint (%d tensors, %d bytes) to %s", len(entries), offset, directory)
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> Checkpoint:
        directory = Path(directory)
        if not (directory / MANIFEST).is_file():
            raise MissingArtifactError(f"No checkpoint at {directory} (missing {MANIFEST})")
        manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
        vocab_path = directory / manifest.get("vocabulary", VOCAB)
        if not vocab_path.is_file():
            raise LoadError(f"Checkpoint {directory} has no vocabulary file {vocab_path.name}")
        if not (directory / WEIGHTS).is_file():
            raise LoadError(f"Checkpoint {directory} has no {WEIGHTS}")

        vocab = Vocabulary.load(vocab_path)
        tag = manifest.get("precision", "float32")
        raw = (directory / WEIGHTS).read_bytes()
        with precision(tag):
            detector = build_detector(
                vocab, ModelConfig(**manifest["model"]), _peft_from_dict(manifest.get("peft")), manifest.get("seed", 0)
            )
            params = detector.trainable_parameters()
            stored = {entry["name"]: entry for entry in manifest.get("parameters", [])}
            if set(stored) != set(params):
                raise LoadError(f"Checkpoint {directory}: stored parameters {sorted(stored)} do not match {sorted(params)}")
            for name, tensor in params.items():
                entry = stored[name]
                if tuple(entry["shape"]) != tensor.shape or entry["offset"] + entry["bytes"] > len(raw):
                    raise LoadError(f"Checkpoint {directory}: parameter '{name}' is truncated or has the wrong shape")
                values = np.frombuffer(raw, dtype=WIRE_TYPE, count=tensor.data.size, offset=entry["offset"])
                tensor.data[...] = values.reshape(tensor.shape).astype(tensor.dtype)
        return cls(detector, manifest)


def predict(seq, checkpoint: Checkpoint) -> tuple[int, float]:
    return checkpoint.detector.predict(seq)

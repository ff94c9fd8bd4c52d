"""
Word-level vocabulary built from training text only, and the encoder that
turns concatenated sequence text into token ids.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from core.exceptions import ConfigError, EncodingError, LoadError, MissingArtifactError

PAD, UNK, CLS = 0, 1, 2
RESERVED = {"[PAD]": PAD, "[UNK]": UNK, "[CLS]": CLS}
MAX_LEN_KEY = "max_len"

MASKED = "masked"
AUTOREGRESSIVE = "autoregressive"
STYLES = (MASKED, AUTOREGRESSIVE)

DEFAULT_MAX_LEN = 256


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]
    max_len: int = DEFAULT_MAX_LEN

    def __len__(self) -> int:
        return len(self.token_to_id)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def to_json(self) -> dict:
        return {**self.token_to_id, MAX_LEN_KEY: self.max_len}

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), ensure_ascii=False, sort_keys=True), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        path = Path(path)
        if not path.is_file():
            raise MissingArtifactError(f"Vocabulary file not found: {path}")
        payload = json.loads(path.read_text(encoding="utf-8"))
        try:
            max_len = int(payload.pop(MAX_LEN_KEY))
        except KeyError:
            raise LoadError(f"{path}: vocabulary has no '{MAX_LEN_KEY}' entry")
        ids = sorted(payload.values())
        if ids != list(range(len(ids))) or any(payload.get(token) != index for token, index in RESERVED.items()):
            raise LoadError(f"{path}: vocabulary ids are not contiguous or reserved ids moved")
        return cls(payload, max_len)


def build_vocab(train_texts: Iterable[str], min_count: int = 1, max_len: int = DEFAULT_MAX_LEN) -> Vocabulary:
    """
    Whitespace tokens with count >= min_count, ordered by descending frequency
    then lexicographically, numbered from 3 upwards after PAD, UNK and CLS.
    """
    if max_len < 2:
        raise ConfigError(f"max_len must be >= 2, got {max_len}")
    counts = Counter(token for text in train_texts for token in text.split())
    if not counts:
        raise ConfigError("Cannot build a vocabulary from an empty training corpus")

    kept = sorted(
        (token for token, count in counts.items() if count >= min_count and token not in RESERVED and token != MAX_LEN_KEY),
        key=lambda token: (-counts[token], token),
    )
    token_to_id = dict(RESERVED)
    token_to_id.update({token: index for index, token in enumerate(kept, start=len(RESERVED))})
    return Vocabulary(token_to_id, max_len)


@dataclass(frozen=True)
class TokenizedSequence:
    """
    Token ids of one sequence, unpadded. `selected_index` is the position whose
    final hidden state is classified: the CLS slot for masked models, the last
    real token for autoregressive ones.
    """

    ids: tuple[int, ...]
    mask: tuple[int, ...]
    selected_index: int
    label: int = 0

    def __len__(self) -> int:
        return len(self.ids)


def encode(text: str, vocab: Vocabulary, model_style: str, label: int = 0) -> TokenizedSequence:
    if model_style not in STYLES:
        raise ConfigError(f"Unknown model style '{model_style}', expected one of {', '.join(STYLES)}")
    tokens = text.split()
    if not tokens:
        raise EncodingError("Cannot encode an empty text")

    ids = [vocab.lookup(token) for token in tokens]
    if model_style == MASKED:
        ids = [CLS] + ids[: vocab.max_len - 1]
        selected = 0
    else:
        ids = ids[: vocab.max_len]
        selected = len(ids) - 1
    return TokenizedSequence(tuple(ids), (1,) * len(ids), selected, int(label))


@dataclass(frozen=True)
class Batch:
    ids: np.ndarray  # (batch, length) int64
    mask: np.ndarray  # (batch, length) int8, 0 at PAD
    positions: np.ndarray  # (batch,) selected index per row
    labels: np.ndarray  # (batch,) int64

    def __len__(self) -> int:
        return self.ids.shape[0]


def collate(items: list[TokenizedSequence], length: int | None = None) -> Batch:
    """Right-pad a list of sequences with PAD to the batch length (or `length`)."""
    if not items:
        raise EncodingError("Cannot collate an empty batch")
    width = max(len(item) for item in items) if length is None else length
    if width < max(len(item) for item in items):
        raise EncodingError(f"Padding length {width} is shorter than the longest sequence")

    ids = np.full((len(items), width), PAD, dtype=np.int64)
    mask = np.zeros((len(items), width), dtype=np.int8)
    for row, item in enumerate(items):
        ids[row, : len(item)] = item.ids
        mask[row, : len(item)] = 1
    positions = np.array([item.selected_index for item in items], dtype=np.int64)
    labels = np.array([item.label for item in items], dtype=np.int64)
    return Batch(ids, mask, positions, labels)

"""
Unstable-log simulation: action words of the test set are swapped for
synonyms to mimic vocabulary drift after a software update.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from core.exceptions import ConfigError, LoadError, MissingArtifactError
from log_pipeline.parsing import WILDCARD
from log_pipeline.records import LogSequence

logger = logging.getLogger(__name__)

ACTION_WORD_COUNT = 10
MAX_SYNONYMS = 3


@dataclass(frozen=True)
class SynonymLexicon:
    synonyms: dict[str, tuple[str, ...]]

    def __post_init__(self):
        for word, options in self.synonyms.items():
            if not options:
                raise ConfigError(f"Lexicon entry '{word}' has no synonyms")
            if any(not option or option == word for option in options):
                raise ConfigError(f"Lexicon entry '{word}' has an empty synonym or lists itself")

    def __contains__(self, word: str) -> bool:
        return word in self.synonyms

    def __len__(self) -> int:
        return len(self.synonyms)

    def top(self, word: str) -> tuple[str, ...]:
        return self.synonyms[word][:MAX_SYNONYMS]


def load_lexicon(path: str | Path) -> SynonymLexicon:
    """CSV rows `word,syn1[,syn2[,syn3]]` under a header line."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"Synonym lexicon not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    if frame.shape[1] < 2:
        raise LoadError(f"{path}: a lexicon needs a word column and at least one synonym column")

    synonyms = {}
    for row in frame.itertuples(index=False):
        word, *options = (value.strip() for value in row)
        options = tuple(option for option in options if option)[:MAX_SYNONYMS]
        if word:
            synonyms[word] = options
    return SynonymLexicon(synonyms)


def pick_action_words(
    train_texts: Iterable[str],
    stoplist: Iterable[str] | None = None,
    override: list[str] | None = None,
    candidates: Iterable[str] | None = None,
) -> list[str]:
    """
    The 10 most frequent purely alphabetic tokens outside the stoplist, ties
    broken lexicographically. `override` is returned as is; `candidates`
    (usually the lexicon's words) narrows the pool.
    """
    if override is not None:
        if len(override) != ACTION_WORD_COUNT:
            raise ConfigError(f"A manual action word list needs {ACTION_WORD_COUNT} entries, got {len(override)}")
        return list(override)

    stop = frozenset(ENGLISH_STOP_WORDS if stoplist is None else stoplist)
    allowed = None if candidates is None else frozenset(candidates)
    counts = Counter(
        token
        for text in train_texts
        for token in text.split()
        if token != WILDCARD and token.isalpha() and token.lower() not in stop and (allowed is None or token in allowed)
    )
    if len(counts) < ACTION_WORD_COUNT:
        raise ConfigError(
            f"Only {len(counts)} candidate action words found, {ACTION_WORD_COUNT} needed; pass a manual list instead"
        )
    ranked = sorted(counts, key=lambda token: (-counts[token], token))
    return ranked[:ACTION_WORD_COUNT]


def injection_targets(size: int, rate: float, seed: int) -> np.ndarray:
    """round(rate * size) distinct indices, drawn uniformly and returned sorted."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"Injection rate must lie in [0, 1], got {rate}")
    count = int(round(rate * size))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(size, size=count, replace=False)) if count else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class InjectionResult:
    sequences: list[LogSequence]
    selected: tuple[int, ...]
    changed_indices: tuple[int, ...]

    @property
    def changed(self) -> int:
        return len(self.changed_indices)


def inject_unstable(
    test: list[LogSequence], lexicon: SynonymLexicon, action_words: list[str], rate: float, seed: int
) -> InjectionResult:
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"Injection rate must lie in [0, 1], got {rate}")
    if len(action_words) != ACTION_WORD_COUNT:
        raise ConfigError(f"Expected {ACTION_WORD_COUNT} action words, got {len(action_words)}")
    missing = [word for word in action_words if word not in lexicon]
    if missing:
        raise ConfigError(f"Action words missing from the lexicon: {', '.join(missing)}")

    targets = injection_targets(len(test), rate, seed)
    if not targets.size:
        return InjectionResult(list(test), (), ())

    # replacements draw from their own stream; the selection depends only on (size, rate, seed)
    rng = np.random.default_rng([seed, 1])
    actions = {word: lexicon.top(word) for word in action_words}
    perturbed = list(test)
    changed = []
    for index in targets.tolist():
        seq = test[index]
        templates = []
        for template in seq.templates:
            tokens = template.split(" ")
            for position, token in enumerate(tokens):
                options = actions.get(token)
                if options:
                    tokens[position] = options[int(rng.integers(len(options)))]
            templates.append(" ".join(tokens))
        if templates != seq.templates:
            perturbed[index] = seq.with_templates(templates)
            changed.append(index)
    if len(changed) < len(targets):
        logger.warning("%d of %d selected sequences held no action word and stayed unchanged", len(targets) - len(changed), len(targets))
    return InjectionResult(perturbed, tuple(targets.tolist()), tuple(changed))

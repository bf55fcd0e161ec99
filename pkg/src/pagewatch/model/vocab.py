"""Corpus-built vocabulary and the word-level tokenizer feeding the text branch."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import InvalidInputError

PAD_ID, UNK_ID, CLS_ID = 0, 1, 2
_SPECIALS = {"<pad>": PAD_ID, "<unk>": UNK_ID, "<cls>": CLS_ID}

MAX_TOKENS = 512
_SPLIT = re.compile(r"[^0-9a-z]+")


def split_words(text: str) -> list[str]:
    return [w for w in _SPLIT.split(text.lower()) if w]


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def __post_init__(self):
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise InvalidInputError("vocabulary ids must be dense in [0, size)")
        for tok, i in _SPECIALS.items():
            if self.token_to_id.get(tok) != i:
                raise InvalidInputError(f"special token {tok!r} must map to {i}")


def build_vocabulary(texts: Iterable[str], min_freq: int = 2, max_size: int = 8192) -> Vocabulary:
    """Frequency-ranked vocabulary over the corpus (deterministic tie-break)."""
    counts = Counter()
    for t in texts:
        counts.update(split_words(t))
    kept = sorted(
        (w for w, c in counts.items() if c >= min_freq),
        key=lambda w: (-counts[w], w),
    )[: max_size - len(_SPECIALS)]
    mapping = dict(_SPECIALS)
    for w in kept:
        mapping[w] = len(mapping)
    return Vocabulary(mapping)


@dataclass
class TokenSequence:
    ids: np.ndarray  # (max_len,) int64, position 0 is CLS
    attention_mask: np.ndarray  # (max_len,) int64, 1 exactly at non-PAD positions

    def __post_init__(self):
        if self.ids.shape != self.attention_mask.shape or self.ids.ndim != 1:
            raise InvalidInputError("ids/mask must be equal-length 1-d")
        if len(self.ids) > MAX_TOKENS:
            raise InvalidInputError(f"sequence longer than {MAX_TOKENS}")

    @property
    def length(self) -> int:
        return int(self.attention_mask.sum())


def tokenize(text: str, vocab: Vocabulary, max_len: int = MAX_TOKENS) -> TokenSequence:
    """Lowercase, split on non-alphanumerics, CLS-prefix, truncate, PAD."""
    if not 1 <= max_len <= MAX_TOKENS:
        raise InvalidInputError(f"max_len must be in [1, {MAX_TOKENS}]")
    ids = [CLS_ID] + [vocab.id_of(w) for w in split_words(text)]
    ids = ids[:max_len]
    n = len(ids)
    out = np.full(max_len, PAD_ID, dtype=np.int64)
    out[:n] = ids
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:n] = 1
    return TokenSequence(ids=out, attention_mask=mask)

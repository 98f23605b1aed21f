"""Whitespace/punctuation tokenizer over a fixed vocabulary file.

The vocabulary is one token per line; the line number is the token id. Line 0
is the reserved CLS token, line 1 the unknown-word token. Encoding lowercases,
splits words from punctuation, prepends CLS and truncates to the configured
maximum sequence length.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .types import Dataset

CLS_ID = 0
UNK_ID = 1
CLS_TOKEN = "[CLS]"
UNK_TOKEN = "[UNK]"

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def split_words(text: str) -> list[str]:
    """Lowercase and split into alphanumeric runs and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        if tokens[:2] != [CLS_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the CLS and UNK tokens")
        self._tokens = tokens
        self._ids = {tok: i for i, tok in enumerate(tokens)}
        if len(self._ids) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self._tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self._tokens[token_id]

    @staticmethod
    def from_file(path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return Vocabulary(lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @staticmethod
    def from_corpus(texts: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary from raw texts, sorted for determinism."""
        seen: set[str] = set()
        for text in texts:
            seen.update(split_words(text))
        return Vocabulary([CLS_TOKEN, UNK_TOKEN] + sorted(seen))

    def encode(self, text: str, max_len: int = 64) -> list[int]:
        """Token ids with a leading CLS, truncated to ``max_len``."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        ids = [CLS_ID] + [self.id_of(tok) for tok in split_words(text)]
        return ids[:max_len]


def vocabulary_from_datasets(datasets: "Iterable[Dataset]") -> Vocabulary:
    """Vocabulary over every indication and rendered vitals text in the data."""
    from .vitals import render_vitals_text

    texts: list[str] = []
    for dataset in datasets:
        for study in dataset.studies:
            if study.indication is not None:
                texts.append(study.indication)
            if study.vitals is not None:
                texts.append(render_vitals_text(study.vitals))
    return Vocabulary.from_corpus(texts)

"""Tokenization, tri-letter word hashing and context windows."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

#: Filler for window slots that fall outside a short sentence. It can never be
#: produced by :func:`tokenize`, so it never collides with a real word.
BOUNDARY = "<b>"

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into maximal runs of letters and digits."""
    return _TOKEN_RE.findall(text.lower())


def tri_letters(word: str) -> list[str]:
    """All length-3 windows of ``#word#``; a word of length n yields n tri-letters.

    >>> tri_letters("cat")
    ['#ca', 'cat', 'at#']
    """
    if not word:
        raise ValueError("empty token")
    padded = f"#{word}#"
    return [padded[i : i + 3] for i in range(len(word))]


class TriLetterVocab:
    """Sorted tri-letter -> index mapping.

    Indices follow lexicographic order of the tri-letters so that two
    vocabularies built from the same words serialize identically.
    """

    def __init__(self, tri_letters: Iterable[str] = ()):
        self.entries: dict[str, int] = {t: i for i, t in enumerate(sorted(set(tri_letters)))}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, tri: str) -> bool:
        return tri in self.entries

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TriLetterVocab) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"TriLetterVocab(size={len(self)})"

    def index(self, tri: str) -> int | None:
        return self.entries.get(tri)

    def to_list(self) -> list[str]:
        return list(self.entries)

    @classmethod
    def from_list(cls, items: Sequence[str]) -> "TriLetterVocab":
        if list(items) != sorted(set(items)):
            raise ValueError("tri-letter vocabulary must be sorted and unique")
        return cls(items)


def build_vocab(corpus_tokens: Iterable[str]) -> TriLetterVocab:
    """Vocabulary of every tri-letter occurring in ``corpus_tokens``."""
    seen: set[str] = set()
    for word in corpus_tokens:
        seen.update(tri_letters(word))
    return TriLetterVocab(seen)


def hash_word(word: str, vocab: TriLetterVocab) -> dict[int, int]:
    """Sparse tri-letter count vector of ``word``; unknown tri-letters are dropped."""
    counts: dict[int, int] = {}
    for tri in tri_letters(word):
        idx = vocab.entries.get(tri)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    return counts


def oov_tri_letters(word: str, vocab: TriLetterVocab) -> int:
    return sum(1 for t in tri_letters(word) if t not in vocab.entries)


@dataclass(frozen=True)
class CollisionReport:
    vocab_size: int
    unique_hashed_vectors: int
    collisions: int

    def __str__(self) -> str:
        return (
            f"vocab_size={self.vocab_size} unique_hashed_vectors={self.unique_hashed_vectors} "
            f"collisions={self.collisions}"
        )


def collision_report(words: Sequence[str], vocab: TriLetterVocab) -> CollisionReport:
    """Count words whose hashed vector equals that of an earlier word."""
    seen: set[tuple[tuple[int, int], ...]] = set()
    collisions = 0
    for word in words:
        key = tuple(sorted(hash_word(word, vocab).items()))
        if key in seen:
            collisions += 1
        else:
            seen.add(key)
    return CollisionReport(len(words), len(seen), collisions)


def context_windows(tokens: Sequence[str], k: int) -> list[tuple[str, ...]]:
    """Windows of ``2k+1`` consecutive tokens at every valid centre position.

    A sentence shorter than ``2k+1`` is centred in one window whose spare
    slots hold :data:`BOUNDARY`.
    """
    if k < 0:
        raise ValueError("context half-width must be >= 0")
    if not tokens:
        raise ValueError("empty sentence")
    width = 2 * k + 1
    s = len(tokens)
    if s < width:
        left = (width - s) // 2
        return [(BOUNDARY,) * left + tuple(tokens) + (BOUNDARY,) * (width - s - left)]
    return [tuple(tokens[t - k : t + k + 1]) for t in range(k, s - k)]


def read_corpus_jsonl(path) -> dict[str, str]:
    """Read ``{"doc_id", "text"}`` lines into an ordered doc_id -> text map."""
    docs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id, text = obj["doc_id"], obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"bad corpus record at line {lineno}: {exc}") from None
            if not isinstance(doc_id, str) or not isinstance(text, str):
                raise ValueError(f"bad corpus record at line {lineno}: doc_id and text must be strings")
            if doc_id in docs:
                raise ValueError(f"duplicate doc_id {doc_id!r} at line {lineno}")
            docs[doc_id] = text
    return docs

"""Per-word input vectors and their concatenation into window vectors.

Two regimes are supported: tri-letter count vectors over a learned
vocabulary, and a table of pretrained dense vectors.  Both expose the same
small surface (``word_dim``, ``embed_word``, ``word_features``) so the encoder
does not care which one it is fed.
"""

from __future__ import annotations

import hashlib
import logging
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .text import BOUNDARY, TriLetterVocab, context_windows, hash_word, oov_tri_letters

logger = logging.getLogger(__name__)

_EMPTY_IDX = np.zeros(0, dtype=np.int64)
_EMPTY_VAL = np.zeros(0, dtype=np.float64)


class PretrainedTable:
    """Word -> dense vector table, all rows of length ``dim``."""

    def __init__(self, dim: int, entries: dict[str, Sequence[float]] | None = None):
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self.words: list[str] = []
        self._index: dict[str, int] = {}
        rows = []
        for word, vec in (entries or {}).items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise ValueError(f"vector for {word!r} has length {vec.size}, expected {dim}")
            self._index[word] = len(self.words)
            self.words.append(word)
            rows.append(vec)
        self.matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def row(self, word: str) -> int | None:
        return self._index.get(word)

    def get(self, word: str) -> np.ndarray | None:
        i = self._index.get(word)
        return None if i is None else self.matrix[i]

    def copy(self) -> "PretrainedTable":
        new = PretrainedTable.__new__(PretrainedTable)
        new.dim = self.dim
        new.words = list(self.words)
        new._index = dict(self._index)
        new.matrix = self.matrix.copy()
        return new


def load_pretrained(path) -> PretrainedTable:
    """Parse a textual vector file: a ``count dim`` header, then ``word v1 .. vdim`` rows."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            count, dim = int(header[0]), int(header[1])
            if len(header) != 2 or count < 0 or dim <= 0:
                raise ValueError
        except (ValueError, IndexError):
            raise ValueError(f"malformed header at line 1: expected 'count dim', got {' '.join(header)!r}") from None
        entries: dict[str, np.ndarray] = {}
        n_rows = 0
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            word, fields = parts[0], parts[1:]
            if len(fields) != dim:
                raise ValueError(f"row length {len(fields)} ≠ dim {dim} at line {lineno}")
            try:
                vec = np.array([float(f) for f in fields], dtype=np.float64)
            except ValueError:
                raise ValueError(f"non-numeric field at line {lineno}") from None
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"non-finite value at line {lineno}")
            if word in entries:
                logger.warning("duplicate word %r at line %d; keeping the last vector", word, lineno)
                del entries[word]
            entries[word] = vec
            n_rows += 1
    if n_rows != count:
        raise ValueError(f"header declares {count} rows but file has {n_rows}")
    return PretrainedTable(dim, entries)


def save_pretrained(table: PretrainedTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, vec in zip(table.words, table.matrix):
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


class TriLetterRepr:
    """Words as tri-letter count vectors over a fixed vocabulary."""

    kind = "triletter"
    trainable = False

    def __init__(self, vocab: TriLetterVocab):
        self.vocab = vocab
        self.oov_tri_letters = 0
        self._lock = threading.Lock()
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def word_dim(self) -> int:
        return len(self.vocab)

    def word_features(self, word: str) -> tuple[np.ndarray, np.ndarray]:
        if word == BOUNDARY:
            return _EMPTY_IDX, _EMPTY_VAL
        feats = self._cache.get(word)
        if feats is None:
            counts = hash_word(word, self.vocab)
            idx = np.array(sorted(counts), dtype=np.int64)
            feats = (idx, np.array([counts[i] for i in idx], dtype=np.float64))
            with self._lock:
                self.oov_tri_letters += oov_tri_letters(word, self.vocab)
                self._cache[word] = feats
        return feats

    def embed_word(self, word: str) -> np.ndarray:
        out = np.zeros(self.word_dim)
        idx, vals = self.word_features(word)
        out[idx] = vals
        return out


class PretrainedRepr:
    """Words as rows of a pretrained table.

    Misses are counted in ``oov_count`` and resolved by ``oov_policy``:
    ``"zero"`` gives the zero vector, ``"random"`` a pseudo-random vector
    seeded by the word's bytes.  With ``finetune`` the table rows become
    trainable parameters.
    """

    kind = "pretrained"

    def __init__(self, table: PretrainedTable, oov_policy: str = "zero", finetune: bool = False,
                 source: str | None = None):
        if oov_policy not in ("zero", "random"):
            raise ValueError(f"unknown OOV policy {oov_policy!r}")
        self.table = table
        self.oov_policy = oov_policy
        self.finetune = finetune
        self.source = source
        self.oov_count = 0
        self._lock = threading.Lock()
        self.touched: set[str] = set()
        self._all = np.arange(table.dim, dtype=np.int64)

    @property
    def trainable(self) -> bool:
        return self.finetune

    @property
    def word_dim(self) -> int:
        return self.table.dim

    def _oov_vector(self, word: str) -> np.ndarray | None:
        if self.oov_policy == "zero":
            return None
        seed = int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest(), "little")
        return np.random.default_rng(seed).standard_normal(self.word_dim) / np.sqrt(self.word_dim)

    def word_features(self, word: str) -> tuple[np.ndarray, np.ndarray]:
        if word == BOUNDARY:
            return _EMPTY_IDX, _EMPTY_VAL
        vec = self.table.get(word)
        if vec is None:
            with self._lock:
                self.oov_count += 1
            vec = self._oov_vector(word)
            if vec is None:
                return _EMPTY_IDX, _EMPTY_VAL
        return self._all, vec

    def embed_word(self, word: str) -> np.ndarray:
        out = np.zeros(self.word_dim)
        idx, vals = self.word_features(word)
        out[idx] = vals
        return out


def embed_window(window: Sequence[str], mode) -> np.ndarray:
    """Concatenate the word vectors of a context window, boundary slots as zeros."""
    return np.concatenate([mode.embed_word(w) for w in window]) if window else np.zeros(0)


@dataclass
class DocFeatures:
    """Window vectors of one document in compressed sparse row form.

    Row ``t`` holds window ``t``; column indices live in the window-linear
    space of size ``(2k+1) * word_dim``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    windows: list[tuple[str, ...]]
    width: int

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n_windows, self.width))
        for t in range(self.n_windows):
            lo, hi = self.indptr[t], self.indptr[t + 1]
            out[t, self.indices[lo:hi]] = self.values[lo:hi]
        return out


def featurize(tokens: Sequence[str], mode, k: int) -> DocFeatures:
    """Context windows of ``tokens`` as sparse window vectors."""
    windows = context_windows(tokens, k)
    dim = mode.word_dim
    idx_parts, val_parts = [], []
    indptr = np.zeros(len(windows) + 1, dtype=np.int64)
    per_word = {w: mode.word_features(w) for w in dict.fromkeys(tokens)}
    for t, window in enumerate(windows):
        nnz = 0
        for slot, word in enumerate(window):
            idx, vals = per_word.get(word) or mode.word_features(word)
            if idx.size:
                idx_parts.append(idx + slot * dim)
                val_parts.append(vals)
                nnz += idx.size
        indptr[t + 1] = indptr[t] + nnz
    indices = np.concatenate(idx_parts) if idx_parts else _EMPTY_IDX.copy()
    values = np.concatenate(val_parts) if val_parts else _EMPTY_VAL.copy()
    return DocFeatures(indptr, indices, values, windows, (2 * k + 1) * dim)

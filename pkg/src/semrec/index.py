"""Semantic index over encoded documents: exact cosine k-NN and binary-code buckets."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoder import DegenerateVectorError
from .text import tokenize

logger = logging.getLogger(__name__)

INDEX_VERSION = 1
#: Above this many Hamming-ball codes, knn_hash scans bucket keys instead of
#: enumerating codes.  Fixed, so the probing strategy never depends on corpus size.
MAX_ENUMERATED_PROBES = 1 << 16


@dataclass
class QueryResult:
    ranked: list[tuple[str, float]]
    probes: int | None = None
    candidates: int | None = None

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.ranked]


class SemanticIndex:
    """Row-aligned ``doc_ids`` (ascending) and ``vectors``."""

    def __init__(self, doc_ids: Sequence[str], vectors: np.ndarray, fingerprint: str | None = None):
        order = sorted(range(len(doc_ids)), key=lambda i: doc_ids[i])
        self.doc_ids = [doc_ids[i] for i in order]
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("duplicate doc_id in index")
        vectors = np.asarray(vectors, dtype=np.float64)
        self.vectors = np.ascontiguousarray(vectors[order] if len(order) else vectors.reshape(0, -1))
        self.fingerprint = fingerprint
        self._norms2 = (self.vectors * self.vectors).sum(axis=1)
        self._row = {d: i for i, d in enumerate(self.doc_ids)}
        if np.any(self._norms2 == 0.0):
            bad = [self.doc_ids[i] for i in np.nonzero(self._norms2 == 0.0)[0]]
            raise DegenerateVectorError(f"degenerate semantic vector for documents: {', '.join(bad)}")

    def __len__(self) -> int:
        return len(self.doc_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def nbytes(self) -> int:
        return self.vectors.nbytes + self._norms2.nbytes

    def vector(self, doc_id: str) -> np.ndarray:
        return self.vectors[self._row[doc_id]]

    def scores(self, qvec: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        """Cosine of ``qvec`` against all rows (or the given row subset)."""
        qvec = np.asarray(qvec, dtype=np.float64)
        qn2 = (qvec * qvec).sum()
        if qn2 == 0.0:
            raise DegenerateVectorError("degenerate semantic vector for the query")
        V = self.vectors if rows is None else self.vectors[rows]
        n2 = self._norms2 if rows is None else self._norms2[rows]
        return np.clip((V * qvec).sum(axis=1) / np.sqrt(n2 * qn2), -1.0, 1.0)

    def _rank(self, rows: np.ndarray, scores: np.ndarray, K: int, exclude) -> list[tuple[str, float]]:
        # rows ascend, so a stable sort on -score breaks ties by ascending doc_id
        order = np.argsort(-scores, kind="stable")
        out = []
        for i in order:
            d = self.doc_ids[rows[i]]
            if d in exclude:
                continue
            out.append((d, float(scores[i])))
            if len(out) == K:
                break
        return out

    def search(self, qvec: np.ndarray, K: int, exclude: Iterable[str] = ()) -> QueryResult:
        if K < 1:
            raise ValueError("K must be >= 1")
        exclude = set(exclude)
        rows = np.arange(len(self))
        return QueryResult(self._rank(rows, self.scores(qvec), K, exclude))

    # persistence
    def to_json(self) -> dict:
        return {
            "version": INDEX_VERSION,
            "fingerprint": self.fingerprint,
            "dim": self.dim,
            "entries": [{"doc_id": d, "vector": v.tolist()} for d, v in zip(self.doc_ids, self.vectors)],
        }

    def save(self, path) -> None:
        Path(path).write_bytes(json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode("utf-8"))

    @classmethod
    def load(cls, path) -> "SemanticIndex":
        obj = json.loads(Path(path).read_bytes())
        if obj.get("version") != INDEX_VERSION:
            raise ValueError(f"unsupported index version {obj.get('version')!r}")
        ids = [e["doc_id"] for e in obj["entries"]]
        vecs = np.array([e["vector"] for e in obj["entries"]], dtype=np.float64).reshape(len(ids), obj["dim"])
        return cls(ids, vecs, obj.get("fingerprint"))


def build_index(docs: Mapping[str, Sequence[str]], encoder, threads: int = 1) -> SemanticIndex:
    """Encode every document with the encoder's document tower.

    Empty documents are skipped with a warning.  ``threads > 1`` encodes in a
    thread pool; results are identical to the sequential build.
    """
    ids = []
    for d in sorted(docs):
        if docs[d]:
            ids.append(d)
        else:
            logger.warning("skipping empty document %s", d)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vecs = list(pool.map(lambda d: encoder.encode_doc(docs[d]), ids))
    else:
        vecs = [encoder.encode_doc(docs[d]) for d in ids]
    dim = vecs[0].shape[0] if vecs else 0
    return SemanticIndex(ids, np.array(vecs).reshape(len(ids), dim), getattr(encoder, "fingerprint", None))


def _encode_query(query, encoder) -> np.ndarray:
    tokens = tokenize(query) if isinstance(query, str) else list(query)
    if not tokens:
        raise ValueError("empty query")
    return encoder.encode_query(tokens)


def knn_exact(query, index: SemanticIndex, encoder, K: int, exclude: Iterable[str] = ()) -> QueryResult:
    """Top-K documents by exact cosine; ``query`` is raw text or a token list."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(index) == 0:
        raise ValueError("index is empty")
    if K > len(index):
        logger.warning("K=%d exceeds index size %d; returning all documents", K, len(index))
        K = len(index)
    return index.search(_encode_query(query, encoder), K, exclude)


def binarize(v: np.ndarray, bits: int) -> int:
    """Sign code of the first ``bits`` components; bit j (value ``1 << j``) is set iff v[j] >= 0."""
    v = np.asarray(v)
    if bits > v.shape[0]:
        raise ValueError(f"code length {bits} exceeds vector length {v.shape[0]}")
    if bits < 1:
        raise ValueError("code length must be >= 1")
    code = 0
    for j in np.nonzero(v[:bits] >= 0)[0]:
        code |= 1 << int(j)
    return code


def format_code(code: int, bits: int) -> str:
    """Bit string in component order, e.g. ``'101'`` for components (+, -, +)."""
    return "".join("1" if code >> j & 1 else "0" for j in range(bits))


def ball_size(bits: int, radius: int) -> int:
    return sum(math.comb(bits, r) for r in range(min(radius, bits) + 1))


class HashIndex:
    """Buckets of documents keyed by the sign code of their semantic vector."""

    def __init__(self, index: SemanticIndex, bits: int):
        if bits > index.dim:
            raise ValueError(f"code length {bits} exceeds vector length {index.dim}")
        self.index = index
        self.bits = bits
        self.codes = [binarize(v, bits) for v in index.vectors]
        self.buckets: dict[int, list[int]] = {}
        for row, code in enumerate(self.codes):
            self.buckets.setdefault(code, []).append(row)

    def candidates(self, code: int, radius: int) -> tuple[np.ndarray, int]:
        """Rows in buckets within Hamming ``radius`` of ``code`` and the probe count."""
        if not 0 <= radius <= self.bits:
            raise ValueError(f"radius must lie in [0, {self.bits}]")
        rows: list[int] = []
        if ball_size(self.bits, radius) <= MAX_ENUMERATED_PROBES:
            probes = 0
            for r in range(radius + 1):
                for flip in combinations(range(self.bits), r):
                    probes += 1
                    mask = 0
                    for j in flip:
                        mask |= 1 << j
                    rows.extend(self.buckets.get(code ^ mask, ()))
        else:
            probes = len(self.buckets)
            for key, members in self.buckets.items():
                if (key ^ code).bit_count() <= radius:
                    rows.extend(members)
        return np.array(sorted(rows), dtype=np.int64), probes

    def search(self, qvec: np.ndarray, K: int, radius: int, exclude: Iterable[str] = ()) -> QueryResult:
        if K < 1:
            raise ValueError("K must be >= 1")
        rows, probes = self.candidates(binarize(qvec, self.bits), radius)
        ranked = self.index._rank(rows, self.index.scores(qvec, rows), K, set(exclude)) if rows.size else []
        return QueryResult(ranked, probes=probes, candidates=int(rows.size))


def knn_hash(query, hash_index: HashIndex, encoder, K: int, radius: int,
             exclude: Iterable[str] = ()) -> QueryResult:
    """Probe buckets within Hamming ``radius``, then rerank candidates by exact cosine."""
    if len(hash_index.index) == 0:
        raise ValueError("index is empty")
    if K > len(hash_index.index):
        logger.warning("K=%d exceeds index size %d; returning all candidates", K, len(hash_index.index))
        K = len(hash_index.index)
    return hash_index.search(_encode_query(query, encoder), K, radius, exclude)

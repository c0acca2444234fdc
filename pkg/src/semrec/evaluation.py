"""recall@k / precision@k / f1@k over a validation split.

For a query with ``R`` relevant documents, a cutoff ``K < R`` is raised to
``R`` before counting, for recall and precision alike.  Report rows hold the
per-query mean recall and precision; f1 is the harmonic mean of those two
means, which is how the published tables relate their columns.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CUTOFFS = (1, 5, 10, 20, 30, 40, 50)


def _hits(ranked: Sequence[str], relevant: frozenset | set, K: int) -> tuple[int, int]:
    if K < 1:
        raise ValueError("cutoff must be >= 1")
    if not relevant:
        raise ValueError("empty relevant set")
    kp = max(K, len(relevant))
    return sum(1 for d in ranked[:kp] if d in relevant), kp


def recall_at_k(ranked: Sequence[str], relevant, K: int) -> float:
    hits, _ = _hits(ranked, relevant, K)
    return hits / len(relevant)


def precision_at_k(ranked: Sequence[str], relevant, K: int) -> float:
    hits, kp = _hits(ranked, relevant, K)
    return hits / kp


def f1_at_k(recall: float, precision: float) -> float:
    if recall == 0.0 and precision == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalQuery:
    query_doc: str
    relevant: frozenset


def eval_queries(validation) -> list[EvalQuery]:
    """One query per validation document; relevant = its co-question documents."""
    related: dict[str, set[str]] = {}
    for members in validation.questions.values():
        for d in members:
            related.setdefault(d, set()).update(members)
    out = []
    for d in sorted(related):
        rel = frozenset(related[d] - {d})
        if rel:
            out.append(EvalQuery(d, rel))
    return out


@dataclass
class MetricsRow:
    k: int
    recall: float
    precision: float
    f1: float


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)
    query_count: int = 0

    def row(self, k: int) -> MetricsRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    def format_table(self) -> str:
        lines = [f"{'K':>4} | {'recall@k':>8} | {'precision@k':>11} | {'f1@k':>6}"]
        lines.append("-" * len(lines[0]))
        for r in self.rows:
            lines.append(f"{r.k:>4} | {r.recall:>8.3f} | {r.precision:>11.3f} | {r.f1:>6.3f}")
        lines.append(f"queries: {self.query_count}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        out = ["k,recall,precision,f1"]
        out += [f"{r.k},{r.recall!r},{r.precision!r},{r.f1!r}" for r in self.rows]
        return "\n".join(out) + "\n"


def evaluate(encoder, index, validation, cutoffs: Iterable[int] = DEFAULT_CUTOFFS) -> MetricsReport:
    """Macro-averaged metrics, each validation document querying the index.

    ``encoder`` is anything with ``encode_query(tokens)``; the query document
    itself is never part of its own ranking.
    """
    cutoffs = sorted(set(int(k) for k in cutoffs))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    queries = eval_queries(validation)
    known = set(index.doc_ids)
    needed = {q.query_doc for q in queries}.union(*(q.relevant for q in queries)) if queries else set()
    missing = sorted(needed - known)
    if missing:
        raise KeyError(f"validation documents missing from index: {', '.join(missing)}")
    rec = np.zeros(len(cutoffs))
    prec = np.zeros(len(cutoffs))
    for q in queries:
        depth = max(cutoffs[-1], len(q.relevant))
        qvec = encoder.encode_query(validation.docs[q.query_doc])
        ranked = [d for d, _ in index.search(qvec, depth, exclude={q.query_doc}).ranked]
        for i, K in enumerate(cutoffs):
            hits, kp = _hits(ranked, q.relevant, K)
            rec[i] += hits / len(q.relevant)
            prec[i] += hits / kp
    n = len(queries)
    report = MetricsReport(query_count=n)
    for i, K in enumerate(cutoffs):
        r, p = (rec[i] / n, prec[i] / n) if n else (0.0, 0.0)
        report.rows.append(MetricsRow(K, float(r), float(p), f1_at_k(float(r), float(p))))
    return report


class RandomEncoder:
    """Baseline encoder: a pseudo-random vector per distinct text.

    Useful as a chance-level reference and as an example of plugging a
    non-neural encoder into :func:`evaluate` and index building.
    """

    fingerprint = None

    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def _vec(self, tokens) -> np.ndarray:
        h = hashlib.blake2b(" ".join(tokens).encode("utf-8"), digest_size=8, key=str(self.seed).encode())
        return np.random.default_rng(int.from_bytes(h.digest(), "little")).standard_normal(self.dim)

    encode_query = _vec
    encode_doc = _vec

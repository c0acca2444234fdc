"""Seeded clustered corpus for desk-scale experiments.

Each cluster plays the part of one question: its documents draw most of
their words from a cluster vocabulary and the rest from a vocabulary shared
by all clusters.  By default a cluster vocabulary is the union of a few
"aspect" vocabularies, so clusters overlap in topic the way related
questions do and a model can carry what it learned to unseen clusters.
With ``aspects=None`` every cluster gets a disjoint vocabulary instead.

A matching pretrained-vector table places every aspect word (or cluster
word) near its group's direction; shared words get pure noise.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .wordrep import PretrainedTable, save_pretrained

_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


@dataclass
class SyntheticSpec:
    clusters: int = 30
    docs_per_cluster: int = 20
    vocab_per_cluster: int = 20
    shared_vocab: int = 200
    doc_length: int = 20
    seed: int = 0
    private_fraction: float = 0.8
    vector_dim: int = 16
    vector_noise: float = 0.5
    aspects: int | None = 12
    aspects_per_cluster: int = 2

    def __post_init__(self):
        for name in ("clusters", "docs_per_cluster", "vocab_per_cluster", "shared_vocab", "doc_length", "vector_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.private_fraction <= 1.0:
            raise ValueError("private_fraction must lie in [0, 1]")
        if self.aspects is not None:
            if not 1 <= self.aspects_per_cluster <= self.aspects:
                raise ValueError("aspects_per_cluster must lie in [1, aspects]")
            if self.vocab_per_cluster % self.aspects_per_cluster:
                raise ValueError("vocab_per_cluster must be a multiple of aspects_per_cluster")
            if math.comb(self.aspects, self.aspects_per_cluster) < self.clusters:
                raise ValueError("too few aspect combinations for the requested cluster count")
        n_priv = self.n_private
        if n_priv > self.vocab_per_cluster or self.doc_length - n_priv > self.shared_vocab:
            raise ValueError(
                f"vocabulary too small for doc_length {self.doc_length}: need {n_priv} private and "
                f"{self.doc_length - n_priv} shared distinct words per document"
            )

    @property
    def n_private(self) -> int:
        return round(self.private_fraction * self.doc_length)


@dataclass
class SyntheticCorpus:
    docs: dict[str, str]
    labels: dict[str, list[str]]
    vectors: PretrainedTable
    cluster_of: dict[str, int]


def _make_words(rng: np.random.Generator, n: int) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    while len(out) < n:
        syllables = rng.integers(2, 4)
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syllables))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def generate(spec: SyntheticSpec) -> SyntheticCorpus:
    """Build the corpus in memory; identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    C, M = spec.clusters, spec.docs_per_cluster
    if spec.aspects is None:
        pool_size = C * spec.vocab_per_cluster
        words = _make_words(rng, pool_size + spec.shared_vocab)
        pool, shared = words[:pool_size], words[pool_size:]
        private = [pool[c * spec.vocab_per_cluster : (c + 1) * spec.vocab_per_cluster] for c in range(C)]
    else:
        per_aspect = spec.vocab_per_cluster // spec.aspects_per_cluster
        pool_size = spec.aspects * per_aspect
        words = _make_words(rng, pool_size + spec.shared_vocab)
        pool, shared = words[:pool_size], words[pool_size:]
        combos = list(itertools.combinations(range(spec.aspects), spec.aspects_per_cluster))
        picked = sorted(rng.choice(len(combos), C, replace=False))
        private = [[pool[a * per_aspect + i] for a in combos[j] for i in range(per_aspect)] for j in picked]

    n_priv = spec.n_private
    ids = [f"doc{i:05d}" for i in rng.permutation(C * M)]
    docs: dict[str, str] = {}
    labels: dict[str, list[str]] = {}
    cluster_of: dict[str, int] = {}
    for c in range(C):
        members = []
        for m in range(M):
            doc_id = ids[c * M + m]
            toks = [private[c][i] for i in rng.choice(spec.vocab_per_cluster, n_priv, replace=False)]
            toks += [shared[i] for i in rng.choice(spec.shared_vocab, spec.doc_length - n_priv, replace=False)]
            toks = [toks[i] for i in rng.permutation(len(toks))]
            docs[doc_id] = " ".join(toks)
            cluster_of[doc_id] = c
            members.append(doc_id)
        labels[f"q{c:04d}"] = sorted(members)
    docs = dict(sorted(docs.items()))

    d = spec.vector_dim
    if spec.aspects is None:
        groups = private
    else:
        groups = [pool[a * per_aspect : (a + 1) * per_aspect] for a in range(spec.aspects)]
    directions = rng.standard_normal((len(groups), d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    entries = {}
    for g, members in enumerate(groups):
        for w in members:
            entries[w] = directions[g] + spec.vector_noise * rng.standard_normal(d) / np.sqrt(d)
    for w in shared:
        entries[w] = rng.standard_normal(d) / np.sqrt(d)
    entries = {w: np.round(v, 6) for w, v in sorted(entries.items())}
    return SyntheticCorpus(docs, labels, PretrainedTable(d, entries), cluster_of)


def write_corpus(corpus: SyntheticCorpus, out_dir) -> dict[str, Path]:
    """Write ``corpus.jsonl``, ``labels.jsonl`` and ``vectors.txt`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"corpus": out / "corpus.jsonl", "labels": out / "labels.jsonl", "vectors": out / "vectors.txt"}
    with open(paths["corpus"], "w", encoding="utf-8", newline="\n") as fh:
        for doc_id, text in corpus.docs.items():
            fh.write(json.dumps({"doc_id": doc_id, "text": text}, ensure_ascii=False) + "\n")
    with open(paths["labels"], "w", encoding="utf-8", newline="\n") as fh:
        for qid, ids in corpus.labels.items():
            fh.write(json.dumps({"question_id": qid, "doc_ids": ids}) + "\n")
    save_pretrained(corpus.vectors, paths["vectors"])
    return paths


def gen_data(spec: SyntheticSpec, out_dir) -> dict[str, Path]:
    return write_corpus(generate(spec), out_dir)


def to_labeled(corpus: SyntheticCorpus):
    """The in-memory corpus as a tokenized :class:`~semrec.training.LabeledCorpus`."""
    from .text import tokenize
    from .training import LabeledCorpus

    return LabeledCorpus({d: tokenize(t) for d, t in corpus.docs.items()}, corpus.labels)

"""Training pairs from question-grouped labels, softmax-over-cosine loss,
backpropagation and plain minibatch SGD."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .encoder import (
    DegenerateVectorError,
    EncoderParams,
    ModelConfig,
    ModelParameters,
    backward,
    forward,
    save_model,
    window_value_grads,
)
from .evaluation import evaluate
from .index import build_index
from .text import read_corpus_jsonl, tokenize
from .wordrep import DocFeatures, PretrainedRepr, PretrainedTable, featurize

logger = logging.getLogger(__name__)


class NumericalError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, learning_rate: float):
        self.epoch, self.batch, self.learning_rate = epoch, batch, learning_rate
        super().__init__(f"non-finite loss at epoch {epoch} batch {batch} (learning rate {learning_rate})")


# corpus ---------------------------------------------------------------------------

@dataclass
class LabeledCorpus:
    docs: dict[str, list[str]]
    questions: dict[str, frozenset]

    def __post_init__(self):
        self.questions = {q: frozenset(ds) for q, ds in self.questions.items()}
        for q, ds in self.questions.items():
            if not ds:
                raise ValueError(f"question {q} has no documents")
            missing = sorted(d for d in ds if d not in self.docs)
            if missing:
                raise ValueError(f"question {q} references unknown documents: {', '.join(missing)}")

    def doc_questions(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for q, ds in self.questions.items():
            for d in ds:
                out.setdefault(d, set()).add(q)
        return out

    def labeled_docs(self) -> list[str]:
        return sorted(set().union(*self.questions.values())) if self.questions else []


def read_labels_jsonl(path) -> dict[str, list[str]]:
    labels: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                qid, ids = obj["question_id"], obj["doc_ids"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"bad label record at line {lineno}: {exc}") from None
            if not isinstance(qid, str) or not isinstance(ids, list) or not all(isinstance(d, str) for d in ids):
                raise ValueError(f"bad label record at line {lineno}: expected string question_id and doc_ids")
            labels.setdefault(qid, []).extend(ids)
    return labels


def load_labeled_corpus(corpus_path, labels_path) -> LabeledCorpus:
    """Tokenized documents plus question groupings; empty documents are dropped."""
    texts = read_corpus_jsonl(corpus_path)
    docs = {}
    for d, text in texts.items():
        tokens = tokenize(text)
        if tokens:
            docs[d] = tokens
        else:
            logger.warning("dropping empty document %s", d)
    questions = {}
    for q, ids in read_labels_jsonl(labels_path).items():
        kept = [d for d in ids if d in docs]
        unknown = [d for d in ids if d not in texts]
        if unknown:
            raise ValueError(f"question {q} references unknown documents: {', '.join(sorted(unknown))}")
        if kept:
            questions[q] = kept
    return LabeledCorpus(docs, questions)


@dataclass
class SplitCorpus:
    train: LabeledCorpus
    validation: LabeledCorpus

    @property
    def all_docs(self) -> dict[str, list[str]]:
        return {**self.train.docs, **self.validation.docs}


def split_corpus(corpus: LabeledCorpus, fraction: float, seed) -> SplitCorpus:
    """Partition questions at random; documents claimed by a training question stay in train."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("validation fraction must lie in (0, 1)")
    qids = list(corpus.questions)
    if len(qids) < 2:
        raise ValueError("need at least 2 questions to split")
    n_val = min(max(1, round(fraction * len(qids))), len(qids) - 1)
    perm = np.random.default_rng(seed).permutation(len(qids))
    val_set = {qids[i] for i in perm[:n_val]}
    train_q = {q: corpus.questions[q] for q in qids if q not in val_set}
    train_docs = set().union(*train_q.values())
    val_q = {}
    for q in qids:
        if q in val_set:
            kept = corpus.questions[q] - train_docs
            if kept:
                val_q[q] = kept
    val_docs = set().union(*val_q.values()) if val_q else set()
    # unlabeled documents are usable as training negatives, never as validation queries
    train_doc_map = {d: t for d, t in corpus.docs.items() if d not in val_docs}
    val_doc_map = {d: corpus.docs[d] for d in corpus.docs if d in val_docs}
    return SplitCorpus(LabeledCorpus(train_doc_map, train_q), LabeledCorpus(val_doc_map, val_q))


class TrainingInstance(NamedTuple):
    query_doc: str
    positive_doc: str
    negative_docs: tuple[str, ...]


def generate_instances(corpus: LabeledCorpus, negatives: int, seed) -> Iterator[TrainingInstance]:
    """One instance per ordered pair of distinct co-question documents.

    Negatives are drawn uniformly without replacement from documents that share
    no question with the query.
    """
    if negatives < 0:
        raise ValueError("negative count must be >= 0")
    rng = np.random.default_rng(seed)
    doc_q = corpus.doc_questions()
    all_docs = sorted(corpus.docs)
    eligible_cache: dict[str, list[str]] = {}
    warned = False
    seen: set[tuple[str, str]] = set()
    for members in corpus.questions.values():
        ordered = sorted(members)
        for q in ordered:
            for p in ordered:
                if p == q or (q, p) in seen:
                    continue
                seen.add((q, p))
                eligible = eligible_cache.get(q)
                if eligible is None:
                    related = set().union(*(corpus.questions[x] for x in doc_q[q]))
                    eligible = eligible_cache[q] = [d for d in all_docs if d not in related]
                if len(eligible) < negatives:
                    if not warned:
                        logger.warning("only %d eligible negatives for %s (wanted %d); using all",
                                       len(eligible), q, negatives)
                        warned = True
                    picks = rng.permutation(len(eligible))
                else:
                    picks = rng.choice(len(eligible), size=negatives, replace=False)
                yield TrainingInstance(q, p, tuple(eligible[i] for i in picks))


# loss -------------------------------------------------------------------------------

def posterior(score_pos: float, scores_neg: Sequence[float], gamma: float) -> float:
    """Softmax probability of the positive among itself and the negatives."""
    logits = gamma * np.concatenate(([score_pos], np.asarray(scores_neg, dtype=np.float64)))
    e = np.exp(logits - logits.max())
    return float(e[0] / e.sum())


def _cosine_parts(a: np.ndarray, b: np.ndarray):
    na2, nb2 = float((a * a).sum()), float((b * b).sum())
    denom = math.sqrt(na2 * nb2)
    c = float((a * b).sum()) / denom
    return c, b / denom - c * a / na2, a / denom - c * b / nb2


@dataclass
class Gradients:
    towers: dict[str, EncoderParams]
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)

    def flat(self) -> np.ndarray:
        parts = [a.ravel() for t in self.towers.values() for a in t.arrays()]
        parts += [self.embeddings[w] for w in sorted(self.embeddings)]
        return np.concatenate(parts) if parts else np.zeros(0)


class _BatchEncoder:
    """Encodes each (tower, document) once per batch and keeps the caches."""

    def __init__(self, params: ModelParameters, docs: Mapping[str, Sequence[str]],
                 feats: dict[str, DocFeatures] | None):
        self.params = params
        self.docs = docs
        self.feats = feats if feats is not None else {}
        self.caches = {}

    def tower(self, role: str) -> EncoderParams:
        return self.params.query_tower if role == "q" else self.params.doc_tower

    def get(self, role: str, doc_id: str):
        key = (id(self.tower(role)), doc_id)
        cache = self.caches.get(key)
        if cache is None:
            f = self.feats.get(doc_id)
            if f is None:
                f = self.feats[doc_id] = featurize(self.docs[doc_id], self.params.repr, self.params.config.k)
            cache = self.caches[key] = forward(f, self.tower(role))
            if not np.any(cache.y):
                raise DegenerateVectorError(f"degenerate semantic vector for document {doc_id}")
        return cache


def loss_and_gradients(batch: Sequence[TrainingInstance], params: ModelParameters,
                       docs: Mapping[str, Sequence[str]], feats: dict[str, DocFeatures] | None = None,
                       want_grad: bool = True) -> tuple[float, Gradients | None]:
    """Summed negative log posterior over ``batch`` and its exact gradient.

    Query-side and document-side contributions are accumulated separately and,
    for a shared tower, added at the end.
    """
    if not batch:
        raise ValueError("empty batch")
    gamma = params.config.gamma
    enc = _BatchEncoder(params, docs, feats)
    dys: dict[tuple[str, str], np.ndarray] = {}
    total = 0.0
    for inst in batch:
        q = enc.get("q", inst.query_doc)
        cands = (inst.positive_doc,) + tuple(inst.negative_docs)
        ds_caches = [enc.get("d", d) for d in cands]
        parts = [_cosine_parts(q.y, c.y) for c in ds_caches]
        logits = gamma * np.array([p[0] for p in parts])
        m = logits.max()
        e = np.exp(logits - m)
        z = e.sum()
        total += float(m + math.log(z) - logits[0])
        if not want_grad:
            continue
        dlogit = e / z
        dlogit[0] -= 1.0
        dscore = gamma * dlogit
        dyq = dys.setdefault(("q", inst.query_doc), np.zeros_like(q.y))
        for j, d in enumerate(cands):
            dyq += dscore[j] * parts[j][1]
            dyd = dys.setdefault(("d", d), np.zeros_like(q.y))
            dyd += dscore[j] * parts[j][2]
    if not want_grad:
        return total, None

    by_role = {"q": EncoderParams.zeros_like(params.query_tower), "d": EncoderParams.zeros_like(params.doc_tower)}
    emb: dict[str, np.ndarray] = {}
    trainable_emb = params.repr.trainable
    for (role, doc_id), dy in dys.items():
        cache = enc.get(role, doc_id)
        tower = enc.tower(role)
        dz = backward(cache, dy, tower, by_role[role])
        if trainable_emb:
            _accumulate_embedding_grads(cache, window_value_grads(cache, dz, tower), params.repr, emb)
    if params.mode == "shared":
        q, d = by_role["q"], by_role["d"]
        towers = {"shared": EncoderParams(*(a + b for a, b in zip(q.arrays(), d.arrays())))}
    else:
        towers = {"query": by_role["q"], "doc": by_role["d"]}
    return total, Gradients(towers, emb)


def _accumulate_embedding_grads(cache, dvals: np.ndarray, repr_, out: dict) -> None:
    f = cache.feats
    dim = repr_.word_dim
    for t in np.unique(cache.argmax):
        lo, hi = f.indptr[t], f.indptr[t + 1]
        idx, g = f.indices[lo:hi], dvals[lo:hi]
        slots = idx // dim
        for slot in np.unique(slots):
            word = f.windows[t][slot]
            if word not in repr_.table:
                continue
            sel = slots == slot
            acc = out.setdefault(word, np.zeros(dim))
            np.add.at(acc, idx[sel] - slot * dim, g[sel])


def loss(batch, params, docs, feats=None) -> float:
    """Summed negative log posterior of the positives in ``batch``."""
    return loss_and_gradients(batch, params, docs, feats, want_grad=False)[0]


def gradients(batch, params, docs, feats=None) -> Gradients:
    return loss_and_gradients(batch, params, docs, feats)[1]


def _trainable_slots(params: ModelParameters, grads: Gradients):
    """(array, flat index, analytic value) for every trainable scalar."""
    for name, tower in params.towers().items():
        for arr, garr in zip(tower.arrays(), grads.towers[name].arrays()):
            for i in range(arr.size):
                yield arr.reshape(-1), i, garr.reshape(-1)[i]
    if params.repr.trainable:
        table = params.repr.table
        for word in sorted(grads.embeddings):
            row = table.matrix[table.row(word)]
            for i in range(row.size):
                yield row, i, grads.embeddings[word][i]


def finite_difference_check(params: ModelParameters, batch, docs, h: float = 1e-5,
                            grads: Gradients | None = None) -> float:
    """Max relative error between analytic gradients and central differences.

    Entries where both values are below 1e-8 in magnitude are compared by
    absolute error instead.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    if isinstance(batch, TrainingInstance):
        batch = [batch]
    if grads is None:
        grads = gradients(batch, params, docs)
    worst = 0.0
    for arr, i, analytic in _trainable_slots(params, grads):
        orig = arr[i]
        arr[i] = orig + h
        up = loss(batch, params, docs)
        arr[i] = orig - h
        down = loss(batch, params, docs)
        arr[i] = orig
        numeric = (up - down) / (2 * h)
        scale = max(abs(analytic), abs(numeric))
        err = abs(analytic - numeric) / scale if scale >= 1e-8 else abs(analytic - numeric)
        worst = max(worst, err)
    return worst


def random_check_case(seed):
    """A small random model, corpus and batch for finite-difference checks.

    Word dim <= 4, filters <= 6, semantic dim <= 3, documents of at most 8
    words and at most 3 negatives; shared or twin towers at random.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    config = ModelConfig(word_dim=d, k=int(rng.integers(0, 2)), n_filters=int(rng.integers(2, 7)),
                         semantic_dim=int(rng.integers(2, 4)), gamma=float(rng.uniform(1.0, 10.0)))
    words = [f"w{i}" for i in range(10)]
    table = PretrainedTable(d, {w: rng.standard_normal(d) for w in words})
    docs = {f"d{i}": [words[j] for j in rng.integers(0, len(words), size=int(rng.integers(1, 9)))]
            for i in range(8)}
    corpus = LabeledCorpus(docs, {"qa": ["d0", "d1", "d2"], "qb": ["d3", "d4"]})
    instances = list(generate_instances(corpus, int(rng.integers(1, 4)), seed))
    picks = rng.choice(len(instances), size=min(3, len(instances)), replace=False)
    mode = "twin" if rng.random() < 0.5 else "shared"
    params = ModelParameters.initialize(mode, PretrainedRepr(table), config, int(rng.integers(1 << 31)))
    return params, [instances[i] for i in picks], docs


# SGD ---------------------------------------------------------------------------------

@dataclass
class TrainingConfig:
    negatives: int = 4
    learning_rate: float = 0.05
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    validation_fraction: float = 0.2
    instances_per_epoch: int | None = None
    finetune_embeddings: bool = False

    def __post_init__(self):
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be positive and finite")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.instances_per_epoch is not None and self.instances_per_epoch < 1:
            raise ValueError("instances_per_epoch must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    probe_loss: float
    val_f1_at_1: float


def history_csv(history: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "probe_loss", "val_f1_at_1"])
    for r in history:
        w.writerow([r.epoch, repr(r.train_loss), repr(r.probe_loss), repr(r.val_f1_at_1)])
    return buf.getvalue()


PROBE_SIZE = 256


def _apply(params: ModelParameters, grads: Gradients, step: float) -> None:
    for name, tower in params.towers().items():
        for arr, g in zip(tower.arrays(), grads.towers[name].arrays()):
            arr -= step * g
    if grads.embeddings:
        table = params.repr.table
        for word, g in grads.embeddings.items():
            table.matrix[table.row(word)] -= step * g
        params.repr.touched.update(grads.embeddings)


def _mean_loss(instances, params, docs, feats) -> float:
    total = 0.0
    for i in range(0, len(instances), 64):
        total += loss(instances[i : i + 64], params, docs, feats)
    return total / max(len(instances), 1)


def _val_f1(params, split: SplitCorpus) -> float:
    if not split.validation.questions:
        return float("nan")
    index = build_index(split.all_docs, params)
    return evaluate(params, index, split.validation, cutoffs=[1]).rows[0].f1


def train(split: SplitCorpus, model_config: ModelConfig, config: TrainingConfig, repr_,
          mode: str = "shared", checkpoint_dir=None, on_epoch=None) -> tuple[ModelParameters, list[EpochRecord]]:
    """Minibatch SGD on the mean instance loss; deterministic for a given seed.

    Returns the trained parameters and one history record per epoch, record 0
    describing the initial model.  With ``checkpoint_dir`` a checkpoint and the
    history CSV are written after every epoch.
    """
    if config.finetune_embeddings:
        if not isinstance(repr_, PretrainedRepr):
            raise ValueError("only pretrained vectors can be fine-tuned")
        repr_ = PretrainedRepr(repr_.table.copy(), repr_.oov_policy, finetune=True, source=repr_.source)
    params = ModelParameters.initialize(mode, repr_, model_config, config.seed)
    params.training_info = {"training_config": asdict(config)}
    docs = split.train.docs
    feats: dict[str, DocFeatures] | None = None if repr_.trainable else {}
    rng = np.random.default_rng([config.seed, 0])

    probe_all = list(generate_instances(split.train, config.negatives, [config.seed, 1]))
    probe = [probe_all[i] for i in sorted(rng.permutation(len(probe_all))[:PROBE_SIZE])]
    if not probe:
        raise ValueError("training split yields no instances (no question has two documents)")
    init_loss = _mean_loss(probe, params, docs, feats)
    history = [EpochRecord(0, init_loss, init_loss, _val_f1(params, split))]
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, config.epochs + 1):
        instances = list(generate_instances(split.train, config.negatives, [config.seed, 2, epoch]))
        order = rng.permutation(len(instances))
        if config.instances_per_epoch is not None:
            order = order[: config.instances_per_epoch]
        epoch_loss = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [instances[i] for i in order[start : start + config.batch_size]]
            batch_loss, grads = loss_and_gradients(batch, params, docs, feats)
            if not math.isfinite(batch_loss) or not np.all(np.isfinite(grads.flat())):
                raise NumericalError(epoch, b, config.learning_rate)
            epoch_loss += batch_loss
            _apply(params, grads, config.learning_rate / len(batch))
        record = EpochRecord(epoch, epoch_loss / max(len(order), 1), _mean_loss(probe, params, docs, feats),
                             _val_f1(params, split))
        history.append(record)
        logger.info("epoch %d train_loss=%.4f probe_loss=%.4f val_f1@1=%.4f",
                    epoch, record.train_loss, record.probe_loss, record.val_f1_at_1)
        if ckpt is not None:
            save_model(params, ckpt / f"epoch_{epoch:03d}.json")
            (ckpt / "history.csv").write_text(history_csv(history), encoding="utf-8")
        if on_epoch is not None:
            on_epoch(record)
    return params, history

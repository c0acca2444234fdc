"""``semrec`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.  Failures print one line ``error: kind=<kind> msg=<text>``
to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path


from . import __version__
from .encoder import ModelConfig, ModelParameters, load_model, save_model
from .evaluation import DEFAULT_CUTOFFS, evaluate
from .index import HashIndex, SemanticIndex, build_index, knn_exact, knn_hash
from .synthetic import SyntheticSpec, gen_data
from .text import build_vocab, collision_report, read_corpus_jsonl, tokenize
from .training import (
    LabeledCorpus,
    NumericalError,
    TrainingConfig,
    finite_difference_check,
    history_csv,
    load_labeled_corpus,
    random_check_case,
    split_corpus,
    train,
)
from .wordrep import PretrainedRepr, PretrainedTable, TriLetterRepr, load_pretrained

logger = logging.getLogger("semrec")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# configuration -------------------------------------------------------------------

MODEL_KEYS = {"k", "n_filters", "semantic_dim", "gamma"}
TRAINING_KEYS = {f.name for f in fields(TrainingConfig)}
RUN_KEYS = {"mode", "repr", "vectors", "oov_policy", "corpus", "labels", "model", "checkpoint_dir", "threads"}
ALL_KEYS = MODEL_KEYS | TRAINING_KEYS | RUN_KEYS


def default_seed() -> int:
    raw = os.environ.get("SEMREC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SEMREC_SEED must be an integer, got {raw!r}") from None


def load_run_config(path, overrides: dict) -> dict:
    """Merge a flat JSON config with command-line overrides (flags win)."""
    cfg: dict = {}
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    unknown = sorted(set(cfg) - ALL_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    cfg.setdefault("seed", default_seed())
    cfg.setdefault("mode", "shared")
    cfg.setdefault("repr", "triletter")
    if cfg["mode"] not in ("shared", "twin"):
        raise UsageError(f"mode must be shared or twin, got {cfg['mode']!r}")
    if cfg["repr"] not in ("triletter", "pretrained"):
        raise UsageError(f"repr must be triletter or pretrained, got {cfg['repr']!r}")
    if cfg["repr"] == "pretrained" and not cfg.get("vectors"):
        raise UsageError("repr=pretrained needs a vectors file")
    return cfg


def _split(cfg, keys):
    return {k: cfg[k] for k in keys if k in cfg}


# subcommands --------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    try:
        spec = SyntheticSpec(
            clusters=args.clusters, docs_per_cluster=args.docs_per_cluster,
            vocab_per_cluster=args.vocab_per_cluster, shared_vocab=args.shared_vocab,
            doc_length=args.doc_length, seed=seed, private_fraction=args.private_fraction,
            vector_dim=args.vector_dim, vector_noise=args.vector_noise,
            aspects=args.aspects or None, aspects_per_cluster=args.aspects_per_cluster,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = gen_data(spec, args.out_dir)
    for name, path in paths.items():
        print(f"{name} {path}")
    return 0


def _load_corpus(corpus, labels) -> LabeledCorpus:
    if not corpus or not labels:
        raise UsageError("corpus and labels files are required")
    for p in (corpus, labels):
        if not Path(p).exists():
            raise DataError(f"file not found: {p}")
    try:
        return load_labeled_corpus(corpus, labels)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _load_vectors(path) -> PretrainedTable:
    if not Path(path).exists():
        raise DataError(f"file not found: {path}")
    try:
        return load_pretrained(path)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_train(args) -> int:
    overrides = {
        k: getattr(args, k, None)
        for k in ALL_KEYS
        if getattr(args, k, None) is not None
    }
    cfg = load_run_config(args.config, overrides)
    if not cfg.get("model"):
        raise UsageError("an output model path is required (--model)")
    corpus = _load_corpus(cfg.get("corpus"), cfg.get("labels"))
    try:
        tconf = TrainingConfig(**_split(cfg, TRAINING_KEYS))
        split = split_corpus(corpus, tconf.validation_fraction, tconf.seed)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if cfg["repr"] == "pretrained":
        vectors = str(Path(cfg["vectors"]).resolve())
        repr_ = PretrainedRepr(_load_vectors(vectors), cfg.get("oov_policy", "zero"), source=vectors)
    else:
        repr_ = TriLetterRepr(build_vocab(w for toks in split.train.docs.values() for w in toks))
    try:
        mconf = ModelConfig(word_dim=repr_.word_dim, **_split(cfg, MODEL_KEYS))
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None

    params, history = train(split, mconf, tconf, repr_, mode=cfg["mode"], checkpoint_dir=cfg.get("checkpoint_dir"))
    fp = save_model(params, cfg["model"])
    Path(str(cfg["model"]) + ".history.csv").write_text(history_csv(history), encoding="utf-8")
    for r in history:
        print(f"epoch {r.epoch} train_loss {r.train_loss:.6f} probe_loss {r.probe_loss:.6f} val_f1@1 {r.val_f1_at_1:.4f}")
    if isinstance(repr_, PretrainedRepr):
        print(f"oov_lookups {repr_.oov_count}")
    print(f"fingerprint {fp}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if not args.h > 0:
        raise UsageError("step must be positive")
    worst = 0.0
    for i in range(args.configs):
        params, batch, docs = random_check_case([seed, i])
        err = finite_difference_check(params, batch, docs, args.h)
        logger.info("case %d mode=%s max_rel_error=%.3e", i, params.mode, err)
        worst = max(worst, err)
    ok = worst < args.tolerance
    print(f"max_rel_error {worst:.3e} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else EXIT_NUMERIC


def _load_model(path, vectors=None) -> ModelParameters:
    if not Path(path).exists():
        raise DataError(f"file not found: {path}")
    try:
        return load_model(path, vectors)
    except (ValueError, KeyError, OSError) as exc:
        raise DataError(f"cannot load model {path}: {exc}") from None


def _load_index(path) -> SemanticIndex:
    if not Path(path).exists():
        raise DataError(f"file not found: {path}")
    try:
        return SemanticIndex.load(path)
    except (ValueError, KeyError) as exc:
        raise DataError(f"cannot load index {path}: {exc}") from None


def _check_fingerprint(params, index: SemanticIndex) -> None:
    if index.fingerprint != params.loaded_fingerprint:
        raise DataError(
            f"fingerprint mismatch: model {params.loaded_fingerprint} vs index {index.fingerprint}"
        )


def cmd_index(args) -> int:
    params = _load_model(args.model, args.vectors)
    if not Path(args.corpus).exists():
        raise DataError(f"file not found: {args.corpus}")
    try:
        texts = read_corpus_jsonl(args.corpus)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    docs = {d: tokenize(t) for d, t in texts.items()}
    index = build_index(docs, params, threads=args.threads)
    index.fingerprint = params.loaded_fingerprint
    index.save(args.out)
    print(f"indexed {len(index)} documents fingerprint {index.fingerprint}")
    return 0


def cmd_query(args) -> int:
    params = _load_model(args.model, args.vectors)
    index = _load_index(args.index)
    _check_fingerprint(params, index)
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if not tokenize(args.text):
        raise UsageError("query text has no tokens")
    if args.hash_bits:
        if args.hash_bits > index.dim or (args.radius or 0) > args.hash_bits:
            raise UsageError("need hash_bits <= semantic dim and radius <= hash_bits")
        result = knn_hash(args.text, HashIndex(index, args.hash_bits), params, args.k, args.radius or 0)
    else:
        result = knn_exact(args.text, index, params, args.k)
    for rank, (doc_id, score) in enumerate(result.ranked, 1):
        print(f"{rank} {doc_id} {score:.6f}")
    return 0


def _parse_ks(raw: str) -> list[int]:
    try:
        ks = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --ks value {raw!r}") from None
    if not ks or min(ks) < 1:
        raise UsageError("--ks needs positive integers")
    return ks


def cmd_eval(args) -> int:
    ks = _parse_ks(args.ks)
    params = _load_model(args.model, args.vectors)
    index = _load_index(args.index)
    _check_fingerprint(params, index)
    corpus = _load_corpus(args.corpus, args.labels)
    info = (params.training_info or {}).get("training_config", {})
    fraction = args.validation_fraction if args.validation_fraction is not None else info.get("validation_fraction", 0.2)
    seed = args.split_seed if args.split_seed is not None else info.get("seed", default_seed())
    try:
        split = split_corpus(corpus, fraction, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        report = evaluate(params, index, split.validation, ks)
    except KeyError as exc:
        raise DataError(str(exc.args[0])) from None
    print(report.format_table())
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    return 0


def cmd_collisions(args) -> int:
    if not Path(args.corpus).exists():
        raise DataError(f"file not found: {args.corpus}")
    try:
        texts = read_corpus_jsonl(args.corpus)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    words = sorted({w for t in texts.values() for w in tokenize(t)})
    report = collision_report(words, build_vocab(words))
    print(f"{report} tri_letters={len(build_vocab(words))}")
    return 0


# parser -------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Reports usage errors in the one-line ``error:`` format."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"error: kind=usage msg={self.prog}: {' '.join(message.split())}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semrec", description="Convolutional semantic document recommender")
    p.add_argument("--version", action="version", version=f"semrec {__version__}")
    p.add_argument("--threads", type=int, default=1, help="cap on internal parallelism")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a seeded synthetic corpus, labels and vectors")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--clusters", type=int, default=30)
    g.add_argument("--docs-per-cluster", type=int, default=20)
    g.add_argument("--vocab-per-cluster", type=int, default=20)
    g.add_argument("--shared-vocab", type=int, default=200)
    g.add_argument("--doc-length", type=int, default=20)
    g.add_argument("--private-fraction", type=float, default=0.8)
    g.add_argument("--vector-dim", type=int, default=16)
    g.add_argument("--vector-noise", type=float, default=0.5)
    g.add_argument("--aspects", type=int, default=12, help="0 gives every cluster a disjoint vocabulary")
    g.add_argument("--aspects-per-cluster", type=int, default=2)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="flat JSON config; flags override its keys")
    t.add_argument("--corpus")
    t.add_argument("--labels")
    t.add_argument("--model", help="output checkpoint path")
    t.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    t.add_argument("--mode", choices=["shared", "twin"])
    t.add_argument("--repr", choices=["triletter", "pretrained"])
    t.add_argument("--vectors")
    t.add_argument("--oov-policy", dest="oov_policy", choices=["zero", "random"])
    t.add_argument("--k", type=int)
    t.add_argument("--n-filters", dest="n_filters", type=int)
    t.add_argument("--semantic-dim", dest="semantic_dim", type=int)
    t.add_argument("--gamma", type=float)
    t.add_argument("--negatives", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    t.add_argument("--instances-per-epoch", dest="instances_per_epoch", type=int)
    t.add_argument("--finetune-embeddings", dest="finetune_embeddings", action="store_const", const=True)
    t.set_defaults(func=cmd_train)

    gc = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    gc.add_argument("--seed", type=int)
    gc.add_argument("--configs", type=int, default=20)
    gc.add_argument("--h", type=float, default=1e-5)
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)

    ix = sub.add_parser("index", help="encode a corpus into a semantic index")
    ix.add_argument("--model", required=True)
    ix.add_argument("--corpus", required=True)
    ix.add_argument("--out", required=True)
    ix.add_argument("--vectors", help="override the pretrained vector file recorded in the model")
    ix.set_defaults(func=cmd_index)

    q = sub.add_parser("query", help="top-k documents for a query text")
    q.add_argument("--model", required=True)
    q.add_argument("--index", required=True)
    q.add_argument("--text", required=True)
    q.add_argument("--k", type=int, default=10)
    q.add_argument("--hash-bits", type=int, help="probe binary-code buckets instead of exact search")
    q.add_argument("--radius", type=int, default=0)
    q.add_argument("--vectors")
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("eval", help="recall/precision/f1@k on the validation split")
    e.add_argument("--model", required=True)
    e.add_argument("--index", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--ks", default=",".join(map(str, DEFAULT_CUTOFFS)))
    e.add_argument("--out", help="write k,recall,precision,f1 CSV here")
    e.add_argument("--validation-fraction", type=float)
    e.add_argument("--split-seed", type=int)
    e.add_argument("--vectors")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("collisions", help="tri-letter hashing collision report")
    c.add_argument("--corpus", required=True)
    c.set_defaults(func=cmd_collisions)
    return p


def _fail(kind: str, msg: str, code: int) -> int:
    print(f"error: kind={kind} msg={' '.join(str(msg).split())}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        return _fail("usage", "--threads must be >= 1", EXIT_USAGE)
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except DataError as exc:
        return _fail("data", exc, EXIT_DATA)
    except NumericalError as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())

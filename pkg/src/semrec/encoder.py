"""Convolutional semantic encoder: conv -> tanh -> max-pool -> tanh projection.

A model holds either one tower shared by queries and documents, or two
independent towers.  Window vectors are consumed in sparse form by the
kernels in :mod:`semrec.kernels`; :func:`conv_forward` and friends are the
plain dense building blocks, kept for inspection and as a reference path.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .text import TriLetterVocab
from .wordrep import DocFeatures, PretrainedRepr, TriLetterRepr, featurize, load_pretrained

CHECKPOINT_VERSION = 1


class DegenerateVectorError(ValueError):
    """A semantic vector has zero norm, so cosine relevance is undefined."""


@dataclass
class ModelConfig:
    word_dim: int
    k: int = 1
    n_filters: int = 64
    semantic_dim: int = 32
    gamma: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("word_dim", "n_filters", "semantic_dim"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.k, int) or self.k < 0:
            raise ValueError(f"k must be a non-negative integer, got {self.k!r}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")

    @property
    def window_width(self) -> int:
        return (2 * self.k + 1) * self.word_dim


@dataclass
class EncoderParams:
    conv_weights: np.ndarray  # n_filters x window_width
    conv_bias: np.ndarray
    proj_weights: np.ndarray  # semantic_dim x n_filters
    proj_bias: np.ndarray

    NAMES = ("conv_weights", "conv_bias", "proj_weights", "proj_bias")

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "EncoderParams":
        def glorot(fan_out, fan_in):
            r = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-r, r, size=(fan_out, fan_in))

        return cls(
            glorot(config.n_filters, config.window_width),
            np.zeros(config.n_filters),
            glorot(config.semantic_dim, config.n_filters),
            np.zeros(config.semantic_dim),
        )

    @classmethod
    def zeros_like(cls, other: "EncoderParams") -> "EncoderParams":
        return cls(*(np.zeros_like(a) for a in other.arrays()))

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in self.NAMES]

    def copy(self) -> "EncoderParams":
        return EncoderParams(*(a.copy() for a in self.arrays()))

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def to_json(self) -> dict:
        return {n: getattr(self, n).tolist() for n in self.NAMES}

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderParams":
        return cls(*(np.ascontiguousarray(obj[n], dtype=np.float64) for n in cls.NAMES))

    def check_shapes(self, config: ModelConfig) -> None:
        expected = {
            "conv_weights": (config.n_filters, config.window_width),
            "conv_bias": (config.n_filters,),
            "proj_weights": (config.semantic_dim, config.n_filters),
            "proj_bias": (config.semantic_dim,),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")


class ModelParameters:
    """All trainable state: one shared tower or a query/document pair."""

    def __init__(self, mode: str, query_tower: EncoderParams, doc_tower: EncoderParams | None,
                 repr, config: ModelConfig):
        if mode not in ("shared", "twin"):
            raise ValueError(f"mode must be 'shared' or 'twin', got {mode!r}")
        if repr.word_dim != config.word_dim:
            raise ValueError(f"representation word_dim {repr.word_dim} != config word_dim {config.word_dim}")
        self.mode = mode
        self.query_tower = query_tower
        self.doc_tower = query_tower if mode == "shared" else doc_tower
        if self.doc_tower is None:
            raise ValueError("twin mode needs a document tower")
        self.repr = repr
        self.config = config
        self.training_info: dict | None = None

    @classmethod
    def initialize(cls, mode: str, repr, config: ModelConfig, seed: int) -> "ModelParameters":
        rng = np.random.default_rng(seed)
        query = EncoderParams.initialize(config, rng)
        doc = EncoderParams.initialize(config, rng) if mode == "twin" else None
        return cls(mode, query, doc, repr, config)

    def towers(self) -> dict[str, EncoderParams]:
        if self.mode == "shared":
            return {"shared": self.query_tower}
        return {"query": self.query_tower, "doc": self.doc_tower}

    def featurize(self, tokens: Sequence[str]) -> DocFeatures:
        return featurize(tokens, self.repr, self.config.k)

    def encode_query(self, tokens: Sequence[str]) -> np.ndarray:
        return encode(tokens, self.query_tower, self.repr, self.config)

    def encode_doc(self, tokens: Sequence[str]) -> np.ndarray:
        return encode(tokens, self.doc_tower, self.repr, self.config)

    @property
    def fingerprint(self) -> str:
        return fingerprint(checkpoint_bytes(self))


def param_count(params: ModelParameters) -> int:
    """Scalar count over distinct encoder towers (embedding table excluded)."""
    return sum(t.size for t in params.towers().values())


# dense building blocks ---------------------------------------------------------

def conv_forward(window_vectors, params: EncoderParams) -> np.ndarray:
    """Feature matrix (n_filters x n_windows): one linear map per window vector."""
    X = np.atleast_2d(np.asarray(window_vectors, dtype=np.float64))
    if X.shape[0] < 1 or X.size == 0:
        raise ValueError("need at least one window vector")
    if X.shape[1] != params.conv_weights.shape[1]:
        raise ValueError(
            f"window length {X.shape[1]} does not match filter width {params.conv_weights.shape[1]}"
        )
    return params.conv_weights @ X.T + params.conv_bias[:, None]


def tanh_activation(x):
    return np.tanh(x)


def max_pool(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] == 0:
        raise ValueError("max-pooling needs at least one window column")
    return features.max(axis=1)


# sparse forward / backward ------------------------------------------------------

@dataclass
class ForwardCache:
    feats: DocFeatures
    pooled: np.ndarray
    argmax: np.ndarray
    y: np.ndarray


def forward(feats: DocFeatures, tower: EncoderParams) -> ForwardCache:
    pooled, argmax = kernels.conv_pool_forward(
        feats.indptr, feats.indices, feats.values, tower.conv_weights, tower.conv_bias
    )
    y = np.tanh(tower.proj_weights @ pooled + tower.proj_bias)
    return ForwardCache(feats, pooled, argmax, y)


def backward(cache: ForwardCache, dy: np.ndarray, tower: EncoderParams, grad: EncoderParams) -> np.ndarray:
    """Accumulate d(loss)/d(tower) into ``grad``; returns the gradient w.r.t. the
    pooled pre-activations, which callers need for embedding updates."""
    du = dy * (1.0 - cache.y * cache.y)
    grad.proj_weights += np.outer(du, cache.pooled)
    grad.proj_bias += du
    dz = (tower.proj_weights.T @ du) * (1.0 - cache.pooled * cache.pooled)
    f = cache.feats
    kernels.conv_pool_backward(f.indptr, f.indices, f.values, cache.argmax, dz, grad.conv_weights, grad.conv_bias)
    return dz


def window_value_grads(cache: ForwardCache, dz: np.ndarray, tower: EncoderParams) -> np.ndarray:
    """Gradient w.r.t. every stored CSR value of the document's window vectors."""
    f = cache.feats
    out = np.zeros_like(f.values)
    for t in np.unique(cache.argmax):
        fs = np.nonzero(cache.argmax == t)[0]
        lo, hi = f.indptr[t], f.indptr[t + 1]
        if hi > lo:
            out[lo:hi] += dz[fs] @ tower.conv_weights[np.ix_(fs, f.indices[lo:hi])]
    return out


def encode(tokens: Sequence[str], tower: EncoderParams, repr, config: ModelConfig) -> np.ndarray:
    """Fixed-length semantic vector of a token list."""
    if not tokens:
        raise ValueError("empty document")
    return forward(featurize(tokens, repr, config.k), tower).y


def encode_dense(tokens: Sequence[str], tower: EncoderParams, repr, config: ModelConfig) -> np.ndarray:
    """Same as :func:`encode` but through the dense building blocks."""
    if not tokens:
        raise ValueError("empty document")
    feats = featurize(tokens, repr, config.k)
    pooled = max_pool(tanh_activation(conv_forward(feats.dense(), tower)))
    return tanh_activation(tower.proj_weights @ pooled + tower.proj_bias)


def relevance(y_q: np.ndarray, y_d: np.ndarray) -> float:
    """Cosine similarity of two semantic vectors."""
    y_q = np.asarray(y_q, dtype=np.float64)
    y_d = np.asarray(y_d, dtype=np.float64)
    nq, nd = (y_q * y_q).sum(), (y_d * y_d).sum()
    if nq == 0.0 or nd == 0.0:
        raise DegenerateVectorError("degenerate semantic vector")
    return float(np.clip((y_q * y_d).sum() / math.sqrt(nq * nd), -1.0, 1.0))


# checkpoints --------------------------------------------------------------------

def model_to_json(params: ModelParameters) -> dict:
    r = params.repr
    if isinstance(r, TriLetterRepr):
        repr_obj = {"kind": "triletter"}
    else:
        repr_obj = {
            "kind": "pretrained",
            "source": r.source,
            "dim": r.word_dim,
            "oov_policy": r.oov_policy,
            "finetune": r.finetune,
        }
        if r.finetune:
            touched = getattr(r, "touched", None) or set()
            repr_obj["vectors"] = {w: r.table.get(w).tolist() for w in sorted(touched)}
    obj = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "mode": params.mode,
        "repr": repr_obj,
        "towers": {name: t.to_json() for name, t in params.towers().items()},
    }
    if isinstance(r, TriLetterRepr):
        obj["tri_letter_vocab"] = r.vocab.to_list()
    if params.training_info is not None:
        obj["training"] = params.training_info
    return obj


def checkpoint_bytes(params: ModelParameters) -> bytes:
    return json.dumps(model_to_json(params), sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def fingerprint(data: bytes) -> str:
    """64-bit FNV-1a of ``data`` as 16 hex digits."""
    return f"{kernels.fnv1a64(data):016x}"


def save_model(params: ModelParameters, path) -> str:
    """Write the checkpoint and return its fingerprint."""
    data = checkpoint_bytes(params)
    Path(path).write_bytes(data)
    return fingerprint(data)


def model_from_json(obj: dict, vectors_path=None) -> ModelParameters:
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')!r}")
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in obj["config"].items() if k in known})
    rep = obj["repr"]
    if rep["kind"] == "triletter":
        repr_ = TriLetterRepr(TriLetterVocab.from_list(obj["tri_letter_vocab"]))
    elif rep["kind"] == "pretrained":
        source = vectors_path or rep.get("source")
        if source is None:
            raise ValueError("checkpoint needs a pretrained vector file but none is recorded")
        table = load_pretrained(source)
        if table.dim != rep["dim"]:
            raise ValueError(f"vector file dim {table.dim} != checkpoint dim {rep['dim']}")
        for word, vec in rep.get("vectors", {}).items():
            i = table.row(word)
            if i is not None:
                table.matrix[i] = vec
        repr_ = PretrainedRepr(table, rep["oov_policy"], rep["finetune"], source=rep.get("source"))
        repr_.touched = set(rep.get("vectors", {}))
    else:
        raise ValueError(f"unknown representation kind {rep['kind']!r}")
    towers = {name: EncoderParams.from_json(t) for name, t in obj["towers"].items()}
    if obj["mode"] == "shared":
        params = ModelParameters("shared", towers["shared"], None, repr_, config)
    else:
        params = ModelParameters("twin", towers["query"], towers["doc"], repr_, config)
    for tower in params.towers().values():
        tower.check_shapes(config)
    params.training_info = obj.get("training")
    return params


def load_model(path, vectors_path=None) -> ModelParameters:
    data = Path(path).read_bytes()
    params = model_from_json(json.loads(data), vectors_path)
    params.loaded_fingerprint = fingerprint(data)
    return params

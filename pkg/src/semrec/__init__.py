"""Convolutional semantic document recommender.

Documents are turned into context windows of word vectors (tri-letter counts
or pretrained embeddings), encoded by a convolution + max-pool + projection
tower, and compared by cosine.  Training uses question-grouped relevance
labels; retrieval is exact k-NN or binary-code bucket probing.
"""

__version__ = "0.1.0"

from .encoder import (
    DegenerateVectorError,
    EncoderParams,
    ModelConfig,
    ModelParameters,
    encode,
    load_model,
    param_count,
    relevance,
    save_model,
)
from .evaluation import MetricsReport, RandomEncoder, evaluate
from .index import HashIndex, SemanticIndex, binarize, build_index, knn_exact, knn_hash
from .kernels import BACKEND
from .text import build_vocab, collision_report, context_windows, hash_word, tokenize, tri_letters
from .training import (
    LabeledCorpus,
    NumericalError,
    TrainingConfig,
    generate_instances,
    split_corpus,
    train,
)
from .wordrep import PretrainedRepr, PretrainedTable, TriLetterRepr, load_pretrained

__all__ = [
    "BACKEND", "DegenerateVectorError", "EncoderParams", "HashIndex", "LabeledCorpus",
    "MetricsReport", "ModelConfig", "ModelParameters", "NumericalError", "PretrainedRepr",
    "PretrainedTable", "RandomEncoder", "SemanticIndex", "TrainingConfig", "TriLetterRepr",
    "binarize", "build_index", "build_vocab", "collision_report", "context_windows", "encode",
    "evaluate", "generate_instances", "hash_word", "knn_exact", "knn_hash", "load_model",
    "load_pretrained", "param_count", "relevance", "save_model", "split_corpus", "tokenize",
    "train", "tri_letters",
]

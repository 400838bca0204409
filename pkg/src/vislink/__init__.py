"""Visual named entity linking toolkit.

Bi-encoder linkers over a knowledge base: visual-to-visual, visual-to-text,
and a recall-then-rerank cascade combining both, with contrastive adapter
fine-tuning and a Recall@K / MRR@K evaluation harness.
"""

from .adapter import AdapterHead, HeadPair, adapt, init_head, normalize, score
from .container import EmbeddingMatrix, read_embeddings, write_embeddings
from .encoders import EncoderSpec, StubEncoder, make_encoder
from .errors import (
    ConfigError,
    DataContractError,
    DegenerateEmbeddingError,
    MissingModalityError,
    VislinkError,
)
from .index import EntityIndex, build_index, search
from .kb import (
    Entity,
    KnowledgeBase,
    MentionDataset,
    RankedCandidates,
    VisualMention,
    load_kb,
    load_mentions,
)
from .linking import CascadeConfig, MentionEmbedder, link_v2t, link_v2v, link_v2vt
from .metrics import EvalReport, evaluate, mrr_at_k, overlap_at_k, recall_at_k
from .trainer import TrainConfig, contrastive_loss, train_embeddings
from .synth import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AdapterHead",
    "CascadeConfig",
    "ConfigError",
    "DataContractError",
    "DegenerateEmbeddingError",
    "EmbeddingMatrix",
    "EncoderSpec",
    "Entity",
    "EntityIndex",
    "EvalReport",
    "HeadPair",
    "KnowledgeBase",
    "MentionDataset",
    "MentionEmbedder",
    "MissingModalityError",
    "RankedCandidates",
    "StubEncoder",
    "TrainConfig",
    "VislinkError",
    "VisualMention",
    "adapt",
    "build_index",
    "contrastive_loss",
    "evaluate",
    "generate_synthetic",
    "init_head",
    "link_v2t",
    "link_v2v",
    "link_v2vt",
    "load_kb",
    "load_mentions",
    "make_encoder",
    "mrr_at_k",
    "normalize",
    "overlap_at_k",
    "read_embeddings",
    "recall_at_k",
    "score",
    "search",
    "train_embeddings",
    "write_embeddings",
]

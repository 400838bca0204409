"""Residual adapter heads, L2 normalization, and dot-product scoring.

An adapter maps a frozen raw embedding f to F = f + relu(f @ W1) @ W2.
With W2 initialized to zeros the adapted pipeline reproduces the raw
pipeline exactly, so fine-tuning starts from zero-shot behavior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import (
    EmbeddingMatrix,
    NORM_TOLERANCE,
    read_embeddings,
    write_embeddings,
)
from .errors import (
    ConfigError,
    ContainerFormatError,
    DataContractError,
    DegenerateEmbeddingError,
)

DEFAULT_DIM = 512
DEFAULT_HIDDEN = 1024


@dataclass
class AdapterHead:
    """Trainable two-layer feed-forward transform with residual connection."""

    w1: np.ndarray  # dim x hidden
    w2: np.ndarray  # hidden x dim

    def __post_init__(self) -> None:
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ConfigError("adapter weights must be matrices")
        if self.w1.shape[0] != self.w2.shape[1] or self.w1.shape[1] != self.w2.shape[0]:
            raise ConfigError(
                f"adapter shapes {self.w1.shape} and {self.w2.shape} do not compose "
                "back to the input dimension"
            )
        self.w1 = self.w1.astype(np.float32)
        self.w2 = self.w2.astype(np.float32)

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "AdapterHead":
        return AdapterHead(self.w1.copy(), self.w2.copy())

    def equals(self, other: "AdapterHead") -> bool:
        return bool(np.all(self.w1 == other.w1) and np.all(self.w2 == other.w2))


def init_head(
    dim: int = DEFAULT_DIM,
    hidden: int = DEFAULT_HIDDEN,
    seed: int = 0,
    w1_scale: float = 0.02,
) -> AdapterHead:
    """W1 small random, W2 exactly zero: the head starts as the identity."""
    rng = np.random.default_rng(seed)
    w1 = (rng.standard_normal((dim, hidden)) * w1_scale).astype(np.float32)
    w2 = np.zeros((hidden, dim), dtype=np.float32)
    return AdapterHead(w1, w2)


@dataclass
class HeadPair:
    mention: AdapterHead
    entity: AdapterHead

    def copy(self) -> "HeadPair":
        return HeadPair(self.mention.copy(), self.entity.copy())

    def equals(self, other: "HeadPair") -> bool:
        return self.mention.equals(other.mention) and self.entity.equals(other.entity)


def adapt(f: np.ndarray, head: AdapterHead) -> np.ndarray:
    """F = f + relu(f @ W1) @ W2, preserving the input dimension."""
    f = np.asarray(f)
    if f.shape[-1] != head.dim:
        raise ConfigError(f"vector dim {f.shape[-1]} != adapter dim {head.dim}")
    hidden = np.maximum(f @ head.w1, 0.0)
    return (f + hidden @ head.w2).astype(f.dtype, copy=False)


def normalize(f: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm; rejects (near-)zero vectors."""
    f = np.asarray(f)
    norm = float(np.linalg.norm(f.astype(np.float64)))
    if norm < 1e-12:
        raise DegenerateEmbeddingError("cannot normalize a zero vector")
    return (f.astype(np.float64) / norm).astype(np.float32)


def normalize_rows(data: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(data.astype(np.float64), axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateEmbeddingError("matrix contains a zero row")
    return (data.astype(np.float64) / norms[:, None]).astype(np.float32)


def _require_unit(v: np.ndarray, label: str) -> None:
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise DataContractError(f"{label} is not normalized (|v| = {norm:.6f})")


def score(fm: np.ndarray, fe: np.ndarray) -> float:
    """Dot product of two unit vectors; the linker's similarity value."""
    _require_unit(fm, "mention embedding")
    _require_unit(fe, "entity embedding")
    return float(np.dot(fm.astype(np.float64), fe.astype(np.float64)))


def adapt_matrix(matrix: EmbeddingMatrix, head: AdapterHead | None) -> EmbeddingMatrix:
    """Adapt (optionally) and L2-normalize every row of an embedding matrix."""
    data = matrix.data
    if head is not None:
        data = adapt(data.astype(np.float64), head).astype(np.float64)
    return EmbeddingMatrix(normalize_rows(np.asarray(data)), matrix.row_keys, normalized=True)


def save_head(head: AdapterHead, path: str | Path, side: str) -> None:
    """Write one head: a two-row container (keys W1, W2) plus a JSON sidecar."""
    path = Path(path)
    flat = np.stack([head.w1.reshape(-1), head.w2.reshape(-1)]).astype(np.float32)
    write_embeddings(EmbeddingMatrix(flat, ("W1", "W2")), path)
    sidecar = {"dim": head.dim, "hidden": head.hidden, "side": side}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_head(path: str | Path) -> tuple[AdapterHead, str]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    matrix = read_embeddings(path)
    if matrix.row_keys != ("W1", "W2"):
        raise ContainerFormatError(f"{path}: not an adapter checkpoint")
    dim, hidden = int(sidecar["dim"]), int(sidecar["hidden"])
    if matrix.dim != dim * hidden:
        raise ContainerFormatError(f"{path}: sidecar shape disagrees with container")
    head = AdapterHead(
        matrix.data[0].reshape(dim, hidden).copy(),
        matrix.data[1].reshape(hidden, dim).copy(),
    )
    return head, str(sidecar["side"])


def save_heads(pair: HeadPair, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_head(pair.mention, out / "mention.head", side="mention")
    save_head(pair.entity, out / "entity.head", side="entity")


def load_heads(out_dir: str | Path) -> HeadPair:
    out = Path(out_dir)
    mention, m_side = load_head(out / "mention.head")
    entity, e_side = load_head(out / "entity.head")
    if (m_side, e_side) != ("mention", "entity"):
        raise ContainerFormatError(f"{out}: checkpoint sides are mislabeled")
    return HeadPair(mention, entity)

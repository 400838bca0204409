"""Contrastive fine-tuning of the adapter heads with in-batch negatives.

Only the two adapter heads train; encoder backbones stay frozen, so raw
embeddings are computed once and reused every epoch. Gradients are analytic
(numpy, float64 masters) and the update rule is AdamW. Training is bit
deterministic for a fixed seed and config.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .adapter import AdapterHead, HeadPair
from .container import EmbeddingMatrix
from .encoders import Encoder, MODE_CROP, embed_entities, embed_mentions
from .errors import ConfigError, DataContractError
from .kb import KnowledgeBase, MentionDataset


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for adapter fine-tuning.

    The conventional learning rates are 2e-4 for visual-pretrained pipelines
    and 2e-6 for image-text pipelines; pass them explicitly (or use
    `default_lr`) since the config cannot see which encoder is plugged in.
    """

    batch_size: int = 64
    max_epochs: int = 20
    lr_mention: float = 2e-4
    lr_entity: float = 2e-4
    temperature: float = 0.07
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (in-batch negatives)")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")


def default_lr(encoder_kind: str, modality: str) -> float:
    """2e-4 for the single-modal visual pipeline, 2e-6 for cross-modal."""
    return 2e-4 if modality == "visual" else 2e-6


def contrastive_loss(scores: np.ndarray, tau: float) -> float:
    """Mean over rows of -log softmax(S[i] / tau)[i].

    S[i][j] is the score of mention i against entity j; diagonal entries are
    the positives, off-diagonal the in-batch negatives.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DataContractError(f"score matrix must be square, got {s.shape}")
    if s.shape[0] < 2:
        raise DataContractError("need at least 2 in-batch samples")
    if tau <= 0:
        raise ConfigError("temperature must be > 0")
    logits = s / tau
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return float(np.mean(lse - np.diag(logits)))


def contrastive_loss_grad(scores: np.ndarray, tau: float) -> np.ndarray:
    """dL/dS for the loss above: (softmax(S/tau) - I) / (N * tau)."""
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    logits = s / tau
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return (p - np.eye(n)) / (n * tau)


def _side_forward(x: np.ndarray, w1: np.ndarray, w2: np.ndarray):
    z = x @ w1
    h = np.maximum(z, 0.0)
    f = x + h @ w2
    r = np.linalg.norm(f, axis=-1, keepdims=True)
    if np.any(r < 1e-12):
        raise DataContractError("adapter produced a zero vector; cannot normalize")
    u = f / r
    return u, (x, z, h, u, r)


def _side_backward(du: np.ndarray, cache, w2: np.ndarray):
    x, z, h, u, r = cache
    # through u = f / |f|:  df = (du - (du . u) u) / |f|
    df = (du - (du * u).sum(axis=-1, keepdims=True) * u) / r
    dw2 = h.T @ df
    dh = df @ w2.T
    dz = dh * (z > 0.0)
    dw1 = x.T @ dz
    return dw1, dw2


def _loss_and_grads(
    xm: np.ndarray,
    xe: np.ndarray,
    w1m: np.ndarray,
    w2m: np.ndarray,
    w1e: np.ndarray,
    w2e: np.ndarray,
    tau: float,
) -> tuple[float, dict[str, np.ndarray]]:
    um, cache_m = _side_forward(xm, w1m, w2m)
    ue, cache_e = _side_forward(xe, w1e, w2e)
    s = um @ ue.T
    loss = contrastive_loss(s, tau)
    ds = contrastive_loss_grad(s, tau)
    dum = ds @ ue
    due = ds.T @ um
    dw1m, dw2m = _side_backward(dum, cache_m, w2m)
    dw1e, dw2e = _side_backward(due, cache_e, w2e)
    return loss, {"w1m": dw1m, "w2m": dw2m, "w1e": dw1e, "w2e": dw2e}


def batch_loss_and_grads(
    mention_raw: np.ndarray,
    entity_raw: np.ndarray,
    heads: HeadPair,
    tau: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Forward + backward for one batch of aligned mention/entity pairs.

    Row i of both matrices belongs to the same gold pair; every other row is
    a negative. Returns the scalar loss and gradients for all four weights.
    """
    return _loss_and_grads(
        np.asarray(mention_raw, dtype=np.float64),
        np.asarray(entity_raw, dtype=np.float64),
        heads.mention.w1.astype(np.float64),
        heads.mention.w2.astype(np.float64),
        heads.entity.w1.astype(np.float64),
        heads.entity.w2.astype(np.float64),
        tau,
    )


def score_pipeline_grads(
    f_mention: np.ndarray,
    f_entity: np.ndarray,
    heads: HeadPair,
) -> tuple[float, dict[str, np.ndarray]]:
    """Score of one adapted+normalized pair plus its weight gradients.

    Used to validate the analytic backward pass of adapt -> normalize ->
    score against finite differences.
    """
    xm = np.asarray(f_mention, dtype=np.float64)[None, :]
    xe = np.asarray(f_entity, dtype=np.float64)[None, :]
    w2m = heads.mention.w2.astype(np.float64)
    w2e = heads.entity.w2.astype(np.float64)
    um, cache_m = _side_forward(xm, heads.mention.w1.astype(np.float64), w2m)
    ue, cache_e = _side_forward(xe, heads.entity.w1.astype(np.float64), w2e)
    value = float((um * ue).sum())
    dw1m, dw2m = _side_backward(ue, cache_m, w2m)
    dw1e, dw2e = _side_backward(um, cache_e, w2e)
    return value, {"w1m": dw1m, "w2m": dw2m, "w1e": dw1e, "w2e": dw2e}


class AdamW:
    """Decoupled-weight-decay adaptive gradient update, float64 state."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lrs: dict[str, float]) -> None:
        cfg = self.cfg
        self._t += 1
        bc1 = 1.0 - cfg.beta1 ** self._t
        bc2 = 1.0 - cfg.beta2 ** self._t
        for key, g in grads.items():
            if key not in self._m:
                self._m[key] = np.zeros_like(params[key])
                self._v[key] = np.zeros_like(params[key])
            m = self._m[key]
            v = self._v[key]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            lr = lrs[key]
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
            params[key] -= lr * (update + cfg.weight_decay * params[key])


def make_batches(
    gold_ids: list[str], batch_size: int, rng: np.random.Generator
) -> list[list[int]]:
    """Greedy partition into batches with pairwise-distinct gold entities.

    Mentions are shuffled, then each goes to the first open batch that has
    room and does not already contain its gold entity. Batches that end up
    with a single member cannot supply negatives and are dropped for the
    epoch.
    """
    order = rng.permutation(len(gold_ids))
    batches: list[list[int]] = []
    batch_golds: list[set[str]] = []
    for idx in order:
        gold = gold_ids[idx]
        for b, golds in zip(batches, batch_golds):
            if len(b) < batch_size and gold not in golds:
                b.append(int(idx))
                golds.add(gold)
                break
        else:
            batches.append([int(idx)])
            batch_golds.append({gold})
    return [b for b in batches if len(b) >= 2]


def train_embeddings(
    mention_embs: EmbeddingMatrix,
    gold: dict[str, str],
    entity_embs: EmbeddingMatrix,
    heads: HeadPair,
    cfg: TrainConfig,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> tuple[HeadPair, list[float]]:
    """Fine-tune both heads on precomputed raw embeddings.

    `gold` maps every training mention_id to its entity_id; each epoch
    reports its mention-weighted mean batch loss. Returns fresh heads, the
    inputs are not mutated.
    """
    mention_ids = [mid for mid in mention_embs.row_keys]
    missing_gold = [mid for mid in mention_ids if mid not in gold]
    if missing_gold:
        raise DataContractError(f"mention {missing_gold[0]} has no gold entity")
    gold_ids = [gold[mid] for mid in mention_ids]
    missing_entity = [g for g in gold_ids if g not in entity_embs]
    if missing_entity:
        raise DataContractError(
            f"gold entity {missing_entity[0]} has no embedding for this sub-task"
        )
    if len(set(gold_ids)) < 2:
        raise ConfigError("training needs at least 2 distinct gold entities")

    xm_all = mention_embs.data.astype(np.float64)
    xe_all = np.stack([entity_embs.row(g) for g in gold_ids]).astype(np.float64)

    params = {
        "w1m": heads.mention.w1.astype(np.float64),
        "w2m": heads.mention.w2.astype(np.float64),
        "w1e": heads.entity.w1.astype(np.float64),
        "w2e": heads.entity.w2.astype(np.float64),
    }
    lrs = {
        "w1m": cfg.lr_mention,
        "w2m": cfg.lr_mention,
        "w1e": cfg.lr_entity,
        "w2e": cfg.lr_entity,
    }
    optimizer = AdamW(cfg)
    rng = np.random.default_rng(cfg.seed)
    history: list[float] = []
    for epoch in range(cfg.max_epochs):
        started = time.monotonic()
        batches = make_batches(gold_ids, cfg.batch_size, rng)
        if not batches:
            raise ConfigError("no usable batches; too few mentions with distinct golds")
        total_loss = 0.0
        total_n = 0
        for batch in batches:
            loss, grads = _loss_and_grads(
                xm_all[batch],
                xe_all[batch],
                params["w1m"],
                params["w2m"],
                params["w1e"],
                params["w2e"],
                cfg.temperature,
            )
            optimizer.step(params, grads, lrs)
            total_loss += loss * len(batch)
            total_n += len(batch)
        mean_loss = total_loss / total_n
        history.append(mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, time.monotonic() - started)

    trained = HeadPair(
        AdapterHead(params["w1m"].astype(np.float32), params["w2m"].astype(np.float32)),
        AdapterHead(params["w1e"].astype(np.float32), params["w2e"].astype(np.float32)),
    )
    return trained, history


def train_subtask(
    dataset: MentionDataset,
    kb: KnowledgeBase,
    mention_encoder: Encoder,
    entity_encoder: Encoder,
    heads: HeadPair,
    cfg: TrainConfig,
    mode: str = MODE_CROP,
    modality: str = "visual",
    text_mode: str = "name",
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> tuple[HeadPair, list[float]]:
    """Encode a labeled dataset once, then fine-tune the heads on it."""
    unlabeled = [m.mention_id for m in dataset if m.gold_entity_id is None]
    if unlabeled:
        raise DataContractError(f"training mention {unlabeled[0]} has no gold entity")
    mention_embs = embed_mentions(dataset, mention_encoder, mode)
    entity_embs, _ = embed_entities(kb, entity_encoder, modality, text_mode)
    return train_embeddings(
        mention_embs, dataset.gold_map(), entity_embs, heads, cfg, on_epoch=on_epoch
    )

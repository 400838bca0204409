from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import finite_difference, relative_error
from vislink.adapter import HeadPair, init_head
from vislink.container import EmbeddingMatrix
from vislink.errors import ConfigError, DataContractError
from vislink.trainer import (
    AdamW,
    TrainConfig,
    batch_loss_and_grads,
    contrastive_loss,
    contrastive_loss_grad,
    default_lr,
    make_batches,
    train_embeddings,
)


class TestContrastiveLoss:
    def test_uniform_scores_give_ln_n(self):
        for n in (2, 4, 8, 64):
            s = np.full((n, n), 0.37)
            for tau in (0.07, 0.5, 1.0):
                assert contrastive_loss(s, tau) == pytest.approx(math.log(n), abs=1e-9)

    def test_saturated_positives(self):
        s = np.array([[10.0, -10.0], [-10.0, 10.0]])
        assert contrastive_loss(s, 1.0) == pytest.approx(2.061153620314381e-09, rel=1e-6)

    def test_hand_computed_two_by_two(self):
        # softmax by hand: mean(log1p(e^-1.6), log1p(e^-1.2)) for tau = 0.5
        s = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert contrastive_loss(s, 0.5) == pytest.approx(0.22359160411318496, abs=1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(DataContractError):
            contrastive_loss(np.zeros((2, 3)), 1.0)

    def test_non_positive_tau_rejected(self):
        with pytest.raises(ConfigError):
            contrastive_loss(np.zeros((2, 2)), 0.0)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
    def test_lower_bound_and_uniform_condition(self, seed, n):
        r = np.random.default_rng(seed)
        s = r.standard_normal((n, n))
        loss = contrastive_loss(s, 0.3)
        assert loss >= 0.0
        # rows with equal scores everywhere are the ln N case, exactly
        uniform = np.tile(r.standard_normal((n, 1)), (1, n))
        assert contrastive_loss(uniform, 0.3) == pytest.approx(math.log(n), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.05, 20.0))
    def test_joint_rescaling_invariance(self, seed, c):
        r = np.random.default_rng(seed)
        s = r.standard_normal((4, 4))
        assert contrastive_loss(s, 0.7) == pytest.approx(
            contrastive_loss(c * s, c * 0.7), abs=1e-6
        )

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
    def test_grad_matches_finite_differences(self, seed, n):
        r = np.random.default_rng(seed)
        s = r.standard_normal((n, n))
        tau = 0.4
        analytic = contrastive_loss_grad(s, tau)
        fd = finite_difference(lambda: contrastive_loss(s, tau), [s])[0]
        assert relative_error(analytic, fd) < 1e-3


class TestBatchGrads:
    def test_full_pipeline_grads_match_finite_differences(self, rng):
        n, dim, hidden = 5, 4, 8
        xm = rng.standard_normal((n, dim))
        xe = rng.standard_normal((n, dim))
        heads = HeadPair(
            init_head(dim, hidden, seed=1, w1_scale=0.5),
            init_head(dim, hidden, seed=2, w1_scale=0.5),
        )
        heads.mention.w2 = rng.standard_normal((hidden, dim)).astype(np.float32) * 0.3
        heads.entity.w2 = rng.standard_normal((hidden, dim)).astype(np.float32) * 0.3
        _, grads = batch_loss_and_grads(xm, xe, heads, tau=0.2)

        params = [
            heads.mention.w1.astype(np.float64),
            heads.mention.w2.astype(np.float64),
            heads.entity.w1.astype(np.float64),
            heads.entity.w2.astype(np.float64),
        ]

        def value():
            fm = xm + np.maximum(xm @ params[0], 0) @ params[1]
            fe = xe + np.maximum(xe @ params[2], 0) @ params[3]
            um = fm / np.linalg.norm(fm, axis=1, keepdims=True)
            ue = fe / np.linalg.norm(fe, axis=1, keepdims=True)
            return contrastive_loss(um @ ue.T, 0.2)

        fd = finite_difference(value, params)
        for got, want in zip((grads["w1m"], grads["w2m"], grads["w1e"], grads["w2e"]), fd):
            assert relative_error(got, want) < 1e-3


class TestBatching:
    def test_distinct_golds_within_batch(self):
        golds = ["A", "A", "B", "B", "C", "C", "D"]
        batches = make_batches(golds, 4, np.random.default_rng(0))
        for batch in batches:
            ids = [golds[i] for i in batch]
            assert len(set(ids)) == len(ids)

    def test_all_mentions_used_when_possible(self):
        golds = [f"E{i}" for i in range(10)]
        batches = make_batches(golds, 4, np.random.default_rng(0))
        used = sorted(i for b in batches for i in b)
        assert used == list(range(10))

    def test_deterministic_given_seed(self):
        golds = ["A", "B", "C"] * 7
        a = make_batches(golds, 4, np.random.default_rng(42))
        b = make_batches(golds, 4, np.random.default_rng(42))
        assert a == b


def make_training_setup(rng, n_entities=8, n_mentions=24, dim=6, hidden=12):
    ent = rng.standard_normal((n_entities, dim)).astype(np.float32)
    ids = [f"E{i}" for i in range(n_entities)]
    golds = [ids[i % n_entities] for i in range(n_mentions)]
    noise = rng.standard_normal((n_mentions, dim)).astype(np.float32)
    men = np.stack([ent[i % n_entities] for i in range(n_mentions)]) + 0.3 * noise
    mention_ids = tuple(f"m{i}" for i in range(n_mentions))
    mention_embs = EmbeddingMatrix(men.astype(np.float32), mention_ids)
    entity_embs = EmbeddingMatrix(ent, tuple(ids))
    gold = dict(zip(mention_ids, golds))
    heads = HeadPair(init_head(dim, hidden, seed=5), init_head(dim, hidden, seed=6))
    return mention_embs, gold, entity_embs, heads


class TestTrain:
    def test_loss_decreases_on_separable_data(self, rng):
        mention_embs, gold, entity_embs, heads = make_training_setup(rng)
        cfg = TrainConfig(batch_size=8, max_epochs=15, lr_mention=3e-3, lr_entity=3e-3, seed=0)
        _, history = train_embeddings(mention_embs, gold, entity_embs, heads, cfg)
        assert history[-1] < history[0]

    def test_zero_lr_leaves_heads_unchanged(self, rng):
        mention_embs, gold, entity_embs, heads = make_training_setup(rng)
        cfg = TrainConfig(batch_size=8, max_epochs=5, lr_mention=0.0, lr_entity=0.0, seed=0)
        trained, history = train_embeddings(mention_embs, gold, entity_embs, heads, cfg)
        assert trained.equals(heads)
        assert all(h == pytest.approx(history[0], abs=1e-12) for h in history)

    def test_bit_deterministic(self, rng):
        mention_embs, gold, entity_embs, heads = make_training_setup(rng)
        cfg = TrainConfig(batch_size=8, max_epochs=6, lr_mention=1e-3, lr_entity=1e-3, seed=3)
        a, hist_a = train_embeddings(mention_embs, gold, entity_embs, heads.copy(), cfg)
        b, hist_b = train_embeddings(mention_embs, gold, entity_embs, heads.copy(), cfg)
        assert a.equals(b)
        assert hist_a == hist_b

    def test_inputs_not_mutated(self, rng):
        mention_embs, gold, entity_embs, heads = make_training_setup(rng)
        before = heads.copy()
        cfg = TrainConfig(batch_size=8, max_epochs=3, lr_mention=1e-3, lr_entity=1e-3, seed=0)
        train_embeddings(mention_embs, gold, entity_embs, heads, cfg)
        assert heads.equals(before)

    def test_missing_gold_label_rejected(self, rng):
        mention_embs, gold, entity_embs, heads = make_training_setup(rng)
        gold.pop("m0")
        cfg = TrainConfig(batch_size=8, max_epochs=1)
        with pytest.raises(DataContractError, match="m0"):
            train_embeddings(mention_embs, gold, entity_embs, heads, cfg)

    def test_gold_without_embedding_rejected(self, rng):
        mention_embs, gold, entity_embs, heads = make_training_setup(rng)
        gold["m0"] = "Eghost"
        cfg = TrainConfig(batch_size=8, max_epochs=1)
        with pytest.raises(DataContractError, match="Eghost"):
            train_embeddings(mention_embs, gold, entity_embs, heads, cfg)

    def test_single_distinct_entity_is_config_error(self, rng):
        mention_embs, gold, entity_embs, heads = make_training_setup(rng)
        gold = {m: "E0" for m in gold}
        cfg = TrainConfig(batch_size=8, max_epochs=1)
        with pytest.raises(ConfigError):
            train_embeddings(mention_embs, gold, entity_embs, heads, cfg)


class TestConfig:
    def test_tau_positive(self):
        with pytest.raises(ConfigError):
            TrainConfig(temperature=0.0)

    def test_batch_size_two_minimum(self):
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=1)

    def test_default_lr_convention(self):
        assert default_lr("stub", "visual") == pytest.approx(2e-4)
        assert default_lr("stub", "textual") == pytest.approx(2e-6)


class TestAdamW:
    def test_decoupled_decay_scales_with_lr(self):
        cfg = TrainConfig(weight_decay=0.5)
        opt = AdamW(cfg)
        params = {"w": np.ones((2, 2))}
        opt.step(params, {"w": np.zeros((2, 2))}, {"w": 0.0})
        assert np.array_equal(params["w"], np.ones((2, 2)))

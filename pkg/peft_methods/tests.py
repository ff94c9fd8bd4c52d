import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from core.exceptions import ConfigError, NumericError
from log_pipeline.records import concat_sequence_text
from log_pipeline.synthetic import synthetic_sequences
from model_core.config import ModelConfig
from model_core.layers import LinearLayer
from model_core.transformer import NO_PEFT, Transformer
from peft_methods.config import PREFIX, SUFFIX, LoraConfig, ReftConfig
from peft_methods.factory import build_attachment, peft_config_for, trainable_param_count
from peft_methods.lora import LoraAdapter, LoraAttachment, lora_delta, lora_forward, lora_scale, merge_lora
from peft_methods.reft import (
    ReftAttachment,
    ReftIntervention,
    intervention_positions,
    reft_forward,
    reorthonormalize,
)
from tensor_engine.tensor import Tensor, precision
from tokenizer.vocabulary import AUTOREGRESSIVE, MASKED, build_vocab, collate
from training.optim import TrainConfig
from training.trainer import Trainer, build_detector


def tiny(style=MASKED):
    return ModelConfig(style=style, layers=2, hidden=8, heads=2, ffn_dim=16, vocab_size=40, max_len=16, seed=3)


def sample_batch(count=64):
    seqs = synthetic_sequences(count - count // 4, count // 4, length=2, seed=8)
    vocab = build_vocab((concat_sequence_text(seq) for seq in seqs), max_len=32)
    return seqs, vocab


class LoraScaleTests(SimpleTestCase):
    def test_rank_stabilized_scale(self):
        self.assertEqual(lora_scale(1, 256.0), 256.0)
        self.assertEqual(lora_scale(1, 3.5), 3.5)
        self.assertAlmostEqual(lora_scale(128, 256.0), 256 / math.sqrt(128), delta=1e-9)
        self.assertAlmostEqual(lora_scale(128, 256.0), 22.62741699, places=8)
        self.assertEqual(lora_scale(4, 2.0), 1.0)

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            lora_scale(0, 1.0)
        with self.assertRaises(ConfigError):
            lora_scale(2, 0.0)


class LoraTests(SimpleTestCase):
    def test_zero_adapter_is_the_base_layer(self):
        rng = np.random.default_rng(0)
        base = LinearLayer.initialise(rng, 6, 6, "base")
        adapter = LoraAdapter.initialise(rng, 6, 6, rank=2, alpha=4.0)
        x = Tensor(rng.normal(size=(3, 6)))
        assert_array_equal(lora_forward(x, base, adapter).data, base(x).data)

    def test_scalar_arithmetic(self):
        base = LinearLayer(Tensor([[2.0]]), Tensor([0.0]))
        adapter = LoraAdapter(Tensor([[1.0]]), Tensor([[3.0]]), lora_scale(1, 1.0))
        self.assertEqual(lora_forward(Tensor([[1.0]]), base, adapter).item(), 5.0)

    def test_rank_above_hidden(self):
        with self.assertRaises(ConfigError):
            LoraConfig(rank=9).resolve(tiny())
        with self.assertRaises(ConfigError):
            LoraAdapter.initialise(np.random.default_rng(0), 4, 4, rank=5, alpha=1.0)

    def test_update_is_low_rank(self):
        rng = np.random.default_rng(3)
        adapter = LoraAdapter.initialise(rng, 12, 12, rank=3, alpha=6.0)
        adapter.B.data[...] = rng.normal(size=adapter.B.shape)
        delta = lora_delta(adapter)
        self.assertEqual(delta.shape, (12, 12))
        self.assertEqual(np.linalg.matrix_rank(delta), 3)

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            LoraConfig(targets=("output",))
        with self.assertRaises(ConfigError):
            LoraConfig(rank=2, layers=(5,)).resolve(tiny())

    def test_attachment_parameters(self):
        attachment = LoraAttachment.initialise(tiny(), LoraConfig(rank=2, targets=("query", "value")), seed=1)
        params = attachment.named_parameters()
        self.assertEqual(len(params), 8)
        self.assertEqual(params["lora.1.value.B"].shape, (8, 2))
        self.assertEqual(params["lora.0.query.A"].shape, (2, 8))
        self.assertFalse(params["lora.0.query.B"].data.any())
        self.assertTrue(all(tensor.requires_grad for tensor in params.values()))

    def test_init_equivalence_on_a_fixed_batch(self):
        seqs, vocab = sample_batch(64)
        base = build_detector(vocab, tiny(), None, seed=4)
        adapted = build_detector(vocab, tiny(), LoraConfig(rank=4, alpha=8.0), seed=4)
        batch = collate(base.encode(seqs))
        self.assertEqual(len(batch), 64)
        assert_allclose(adapted.logits(batch).data, base.logits(batch).data, rtol=0, atol=1e-6)

    def test_merged_weights_match_the_adapter(self):
        with precision("float64"):
            model = Transformer.initialise(tiny())
            attachment = LoraAttachment.initialise(tiny(), LoraConfig(rank=2, alpha=4.0), seed=1)
            rng = np.random.default_rng(2)
            for adapter in attachment.adapters.values():
                adapter.B.data[...] = rng.normal(size=adapter.B.shape)
            ids, mask = np.array([[2, 5, 9, 4]]), np.ones((1, 4))
            merged = merge_lora(model, attachment)
            assert_allclose(merged.forward(ids, mask).final.data, model.forward(ids, mask, attachment).final.data, atol=1e-10)
            # the original keeps its frozen weights
            self.assertFalse(np.allclose(model.forward(ids, mask).final.data, merged.forward(ids, mask).final.data))


class ReftTests(SimpleTestCase):
    def test_w_equal_r_is_a_no_op(self):
        rng = np.random.default_rng(0)
        iv = ReftIntervention.initialise(rng, hidden=6, rank=3)
        iv.W.data[...] = iv.R.data
        h = Tensor(rng.normal(size=(4, 6)).astype(np.float32))
        assert_allclose(reft_forward(h, iv).data, h.data, atol=1e-6)

    def test_scalar_arithmetic(self):
        iv = ReftIntervention(Tensor([[1.0]]), Tensor([[2.0]]), Tensor([1.0]))
        self.assertEqual(reft_forward(Tensor([[3.0]]), iv).item(), 7.0)

    def test_full_rank_orthogonal(self):
        with precision("float64"):
            rng = np.random.default_rng(1)
            iv = ReftIntervention.initialise(rng, hidden=5, rank=5)
            iv.b.data[...] = rng.normal(size=5)
            h = rng.normal(size=(3, 5))
            expected = (h @ iv.W.data.T + iv.b.data) @ iv.R.data
            assert_allclose(reft_forward(Tensor(h), iv).data, expected, atol=1e-6)

    def test_rank_above_hidden(self):
        with self.assertRaises(ConfigError):
            ReftIntervention.initialise(np.random.default_rng(0), hidden=4, rank=5)
        with self.assertRaises(ConfigError):
            build_attachment(tiny(), ReftConfig(rank=9), seed=0)

    def test_positions(self):
        mask = np.array([[1, 1, 1, 0], [1, 0, 0, 0]])
        assert_array_equal(intervention_positions(mask, PREFIX), [0, 0])
        assert_array_equal(intervention_positions(mask, SUFFIX), [2, 0])
        self.assertEqual(ReftConfig().position_for(MASKED), PREFIX)
        self.assertEqual(ReftConfig().position_for(AUTOREGRESSIVE), SUFFIX)
        self.assertEqual(ReftConfig(position=PREFIX).position_for(AUTOREGRESSIVE), PREFIX)

    def test_only_the_intervention_row_changes(self):
        with precision("float64"):
            model = Transformer.initialise(tiny(AUTOREGRESSIVE))
            attachment = ReftAttachment.initialise(tiny(AUTOREGRESSIVE), ReftConfig(rank=2, layers=(1,)), seed=2)
            attachment.interventions[1].b.data[...] = 1.0
            ids, mask = np.array([[4, 5, 6, 0]]), np.array([[1, 1, 1, 0]])
            base = model.forward(ids, mask).final.data
            edited = model.forward(ids, mask, attachment).final.data
        assert_array_equal(edited[0, :2], base[0, :2])
        self.assertFalse(np.allclose(edited[0, 2], base[0, 2]))

    def test_w_equal_r_reproduces_base_hidden_states(self):
        model = Transformer.initialise(tiny())
        attachment = ReftAttachment.initialise(tiny(), ReftConfig(rank=4), seed=5)
        for iv in attachment.interventions.values():
            iv.W.data[...] = iv.R.data
        ids, mask = np.array([[2, 7, 8, 9], [2, 4, 0, 0]]), np.array([[1, 1, 1, 1], [1, 1, 0, 0]])
        base = model.forward(ids, mask)
        edited = model.forward(ids, mask, attachment)
        for layer in range(len(base)):
            assert_allclose(edited[layer].data, base[layer].data, atol=1e-6)


class ReorthonormalizeTests(SimpleTestCase):
    def test_orthonormal_rows_are_unchanged(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(6, 3)))
        R = q.T
        assert_allclose(reorthonormalize(R), R, atol=1e-12)

    def test_hand_gram_schmidt(self):
        out = reorthonormalize(np.array([[3.0, 4.0], [1.0, 0.0]]))
        assert_allclose(out[0], [0.6, 0.8], atol=1e-12)
        self.assertAlmostEqual(float(out[0] @ out[1]), 0.0, places=12)
        self.assertAlmostEqual(float(np.linalg.norm(out[1])), 1.0, places=12)

    def test_dependent_rows(self):
        with self.assertRaises(NumericError) as ctx:
            reorthonormalize(np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]))
        self.assertIn("row 1", str(ctx.exception))

    def test_orthonormality_holds_through_training(self):
        seqs, vocab = sample_batch(200)
        config = TrainConfig(learning_rate=1e-2, batch_size=2, epochs=1, seed=6)
        detector = build_detector(vocab, tiny(), ReftConfig(rank=4), seed=6)
        trainer = Trainer(detector, config)
        trainer.fit(detector.encode(seqs))
        self.assertEqual(len(trainer.orthonormality), 100)
        self.assertLess(max(trainer.orthonormality), 1e-5)


class BudgetTests(SimpleTestCase):
    def test_closed_form_counts(self):
        model = ModelConfig(hidden=64, layers=2)
        lora = trainable_param_count(model, LoraConfig(rank=8))
        self.assertEqual(lora.adapter, 4096)
        self.assertEqual(lora.head, 130)
        self.assertEqual(trainable_param_count(model, ReftConfig(rank=8)).adapter, 2064)
        self.assertEqual(trainable_param_count(model, None).total, 130)

    def test_counts_match_the_built_attachments(self):
        for config in (LoraConfig(rank=3, targets=("query", "key", "value")), ReftConfig(rank=2, layers=(0,))):
            attachment = build_attachment(tiny(), config, seed=0)
            actual = sum(tensor.data.size for tensor in attachment.named_parameters().values())
            self.assertEqual(actual, trainable_param_count(tiny(), config).adapter)

    def test_factory(self):
        self.assertIs(build_attachment(tiny(), None, seed=0), NO_PEFT)
        self.assertEqual(peft_config_for("reft", rank=4), ReftConfig(rank=4))
        with self.assertRaises(ConfigError):
            peft_config_for("prefix-tuning")

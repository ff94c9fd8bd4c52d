import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from core.exceptions import ConfigError, InputError
from model_core.config import ModelConfig
from model_core.layers import LayerNorm, LinearLayer
from model_core.transformer import Transformer, attention_bias, init_parameters
from tensor_engine.tensor import MASK_VALUE, Tensor, precision
from tokenizer.vocabulary import AUTOREGRESSIVE, MASKED


def tiny(style=MASKED, seed=5, **kwargs):
    return ModelConfig(style=style, layers=2, hidden=8, heads=2, ffn_dim=16, vocab_size=12, max_len=10, seed=seed, **kwargs)


class ModelConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = ModelConfig()
        self.assertEqual((config.layers, config.hidden, config.heads, config.head_dim), (2, 64, 4, 16))

    def test_validation(self):
        with self.assertRaises(ConfigError):
            ModelConfig(hidden=10, heads=4)
        with self.assertRaises(ConfigError):
            ModelConfig(style="encoder-decoder")
        with self.assertRaises(ConfigError):
            ModelConfig(activation="tanh")
        with self.assertRaises(ConfigError):
            ModelConfig(dropout=1.0)


class LayerTests(SimpleTestCase):
    def test_linear(self):
        layer = LinearLayer(Tensor([[2.0, 0.0], [1.0, 1.0]]), Tensor([0.5, -1.0]))
        assert_allclose(layer(Tensor([[1.0, 3.0]])).data, [[2.5, 3.0]])
        self.assertEqual((layer.in_dim, layer.out_dim), (2, 2))

    def test_frozen_layers_hold_no_trainable_tensors(self):
        layer = LinearLayer.initialise(np.random.default_rng(0), 4, 3, "layer")
        self.assertFalse(layer.weight.requires_grad or layer.bias.requires_grad)
        self.assertTrue(LinearLayer.initialise(np.random.default_rng(0), 4, 3, "layer", frozen=False).weight.requires_grad)

    def test_layer_norm_starts_as_identity_affine(self):
        norm = LayerNorm.initialise(4, "norm")
        out = norm(Tensor([[1.0, 2.0, 3.0, 4.0]])).data
        self.assertAlmostEqual(float(out.mean()), 0.0, places=6)


class InitialisationTests(SimpleTestCase):
    def test_same_seed_is_bitwise_identical(self):
        first, second = init_parameters(tiny()), init_parameters(tiny())
        self.assertEqual(first.keys(), second.keys())
        for name in first:
            assert_array_equal(first[name].data, second[name].data)

    def test_different_seeds_differ(self):
        first, second = init_parameters(tiny(seed=1)), init_parameters(tiny(seed=2))
        self.assertTrue(any(not np.array_equal(first[name].data, second[name].data) for name in first))

    def test_parameter_names_and_frozen_state(self):
        params = init_parameters(tiny())
        self.assertIn("tokens.table", params)
        self.assertIn("positions.table", params)
        self.assertIn("blocks.1.attention.value.weight", params)
        self.assertIn("blocks.0.ffn_norm.gain", params)
        self.assertEqual(params["blocks.0.ffn.up.weight"].shape, (16, 8))
        self.assertFalse(any(tensor.requires_grad for tensor in params.values()))

    def test_precision_follows_context(self):
        with precision("float64"):
            params = init_parameters(tiny())
        self.assertTrue(all(tensor.dtype == np.float64 for tensor in params.values()))


class ForwardTests(SimpleTestCase):
    def test_attention_bias(self):
        bias = attention_bias(np.array([[1, 1, 0]]), AUTOREGRESSIVE, np.float64)
        self.assertEqual(bias.shape, (1, 1, 3, 3))
        self.assertEqual(bias[0, 0, 0, 1], MASK_VALUE)
        self.assertEqual(bias[0, 0, 1, 0], 0.0)
        self.assertTrue((bias[0, 0, :, 2] <= MASK_VALUE).all())
        masked = attention_bias(np.array([[1, 1, 0]]), MASKED, np.float64)
        self.assertEqual(masked[0, 0, 0, 1], 0.0)

    def test_single_token_attention_is_its_value_projection(self):
        with precision("float64"):
            model = Transformer.initialise(tiny())
            x = Tensor(np.random.default_rng(4).normal(size=(1, 1, 8)))
            attention = model.blocks[0].attention
            context = attention.attend(x, attention_bias(np.ones((1, 1)), MASKED, np.float64), 0)
            assert_array_equal(context.data, attention.value(x).data)

    def test_hidden_states_per_layer(self):
        model = Transformer.initialise(tiny())
        hidden = model.forward(np.array([[2, 5, 7]]), np.ones((1, 3)))
        self.assertEqual(len(hidden), 3)
        self.assertEqual(hidden.final.shape, (1, 3, 8))
        self.assertEqual(hidden.select(np.array([2])).shape, (1, 8))

    def test_input_errors(self):
        model = Transformer.initialise(tiny())
        with self.assertRaises(InputError):
            model.forward(np.array([[2, 12]]), np.ones((1, 2)))
        with self.assertRaises(InputError):
            model.forward(np.full((1, 11), 3), np.ones((1, 11)))

    def test_causal_prefix_independence(self):
        rng = np.random.default_rng(11)
        model = Transformer.initialise(tiny(AUTOREGRESSIVE))
        rows, length = 1000, 6
        ids = rng.integers(3, 12, size=(rows, length))
        cut = rng.integers(0, length - 1, size=rows)
        perturbed = ids.copy()
        for row, t in enumerate(cut):
            perturbed[row, t + 1 :] = rng.integers(3, 12, size=length - t - 1)
        mask = np.ones((rows, length))
        original = model.forward(ids, mask)
        changed = model.forward(perturbed, mask)
        for layer in range(len(original)):
            for row, t in enumerate(cut):
                assert_array_equal(original[layer].data[row, : t + 1], changed[layer].data[row, : t + 1])

    def test_padding_invariance(self):
        rng = np.random.default_rng(12)
        for style in (MASKED, AUTOREGRESSIVE):
            with precision("float64"):
                model = Transformer.initialise(tiny(style))
                ids = rng.integers(3, 12, size=(500, 5))
                padded = np.concatenate([ids, np.zeros((500, 3), dtype=np.int64)], axis=1)
                mask = np.concatenate([np.ones((500, 5)), np.zeros((500, 3))], axis=1)
                short = model.forward(ids, np.ones((500, 5)))
                long = model.forward(padded, mask)
            assert_allclose(long.final.data[:, :5], short.final.data, rtol=0, atol=1e-10)

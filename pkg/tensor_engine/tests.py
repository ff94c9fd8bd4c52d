import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from core.exceptions import DimensionError, InputError, NumericError
from tensor_engine.gradcheck import grad_check, grad_check_parameter
from tensor_engine.tensor import (
    Tensor,
    absolute,
    add_rows,
    cross_entropy,
    default_dtype,
    gelu,
    log,
    matmul,
    normalize,
    precision,
    relu,
    softmax,
    take,
    take_rows,
)


class TensorOpsTests(SimpleTestCase):
    def test_identity_matmul(self):
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert_array_equal(matmul(Tensor(np.eye(2)), m).data, [[1, 2], [3, 4]])

    def test_matmul_by_hand(self):
        out = matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]), Tensor([[5.0], [7.0]]))
        assert_array_equal(out.data, [[5], [0]])

    def test_matmul_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(DimensionError) as ctx:
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        self.assertIn("(2, 3)", str(ctx.exception))

    def test_incompatible_broadcast(self):
        with self.assertRaises(DimensionError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))

    def test_softmax_symmetric(self):
        assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_layer_norm_of_constant_is_zero(self):
        assert_array_equal(normalize(Tensor([[3.0, 3.0, 3.0, 3.0]])).data, np.zeros((1, 4)))

    def test_default_precision_is_float32(self):
        self.assertEqual(default_dtype(), np.float32)
        self.assertEqual(Tensor([1, 2]).dtype, np.float32)
        with precision("float64"):
            self.assertEqual(Tensor([1, 2]).dtype, np.float64)
        self.assertEqual(Tensor([1, 2]).dtype, np.float32)

    def test_unknown_precision(self):
        with self.assertRaises(InputError):
            with precision("float16"):
                pass

    def test_gradients_accumulate_over_reused_inputs(self):
        with precision("float64"):
            x = Tensor([2.0, -1.0], requires_grad=True)
            (x * x + x).sum().backward()
        assert_allclose(x.grad, [5.0, -1.0])

    def test_frozen_tensors_receive_no_gradient(self):
        w = Tensor([[1.0, 2.0]])
        x = Tensor([[3.0], [4.0]], requires_grad=True)
        matmul(w, x).sum().backward()
        self.assertIsNone(w.grad)
        assert_allclose(x.grad, [[1.0], [2.0]])

    def test_take_and_row_ops(self):
        table = Tensor(np.arange(12.0).reshape(4, 3))
        assert_array_equal(take(table, np.array([[3, 0]])).data, [[[9, 10, 11], [0, 1, 2]]])

        h = Tensor(np.zeros((2, 3, 2)))
        rows = take_rows(Tensor(np.arange(12.0).reshape(2, 3, 2)), np.array([0, 2]))
        assert_array_equal(rows.data, [[0, 1], [10, 11]])
        edited = add_rows(h, np.array([1, 0]), Tensor([[1.0, 1.0], [2.0, 2.0]]))
        assert_array_equal(edited.data[0], [[0, 0], [1, 1], [0, 0]])
        assert_array_equal(edited.data[1], [[2, 2], [0, 0], [0, 0]])


class CrossEntropyTests(SimpleTestCase):
    def test_uniform_logits(self):
        with precision("float64"):
            value = cross_entropy(Tensor([[0.0, 0.0]]), np.array([1])).item()
        self.assertAlmostEqual(value, math.log(2), places=6)

    def test_saturated_correct_prediction(self):
        with precision("float64"):
            value = cross_entropy(Tensor([[20.0, -20.0]]), np.array([0])).item()
        self.assertLess(value, 1e-8)

    def test_label_outside_classes(self):
        with self.assertRaises(InputError):
            cross_entropy(Tensor([[0.0, 0.0]]), np.array([2]))

    def test_batch_loss_is_mean_of_example_losses(self):
        rng = np.random.default_rng(0)
        with precision("float64"):
            logits = rng.normal(size=(6, 2))
            labels = rng.integers(0, 2, size=6)
            batch = cross_entropy(Tensor(logits), labels).item()
            each = [cross_entropy(Tensor(logits[i : i + 1]), labels[i : i + 1]).item() for i in range(6)]
            total = cross_entropy(Tensor(logits), labels, reduction="sum").item()
        self.assertAlmostEqual(batch * 6, sum(each), delta=1e-6)
        self.assertAlmostEqual(total, sum(each), delta=1e-6)

    def test_equal_class_weights_match_the_plain_mean(self):
        rng = np.random.default_rng(4)
        with precision("float64"):
            logits = Tensor(rng.normal(size=(5, 2)))
            labels = rng.integers(0, 2, size=5)
            plain = cross_entropy(logits, labels).item()
            weighted = cross_entropy(logits, labels, class_weights=np.array([2.5, 2.5])).item()
        self.assertAlmostEqual(plain, weighted, places=10)

    def test_weighted_loss_by_hand(self):
        with precision("float64"):
            logits = Tensor([[0.0, 0.0], [0.0, math.log(3.0)]])
            value = cross_entropy(logits, np.array([0, 1]), class_weights=np.array([1.0, 3.0])).item()
        self.assertAlmostEqual(value, (math.log(2.0) + 3.0 * math.log(4.0 / 3.0)) / 4.0, places=10)

    def test_bad_class_weights(self):
        for weights in (np.array([1.0]), np.array([1.0, -1.0])):
            with self.assertRaises(InputError):
                cross_entropy(Tensor([[0.0, 0.0]]), np.array([0]), class_weights=weights)


class GradCheckTests(SimpleTestCase):
    def test_polynomial(self):
        self.assertLess(grad_check(lambda x: x * x, np.array(3.0)), 1e-9)

    def test_matmul_sum(self):
        rng = np.random.default_rng(1)
        b = rng.normal(size=(4, 2))
        self.assertLess(grad_check(lambda a: matmul(a, Tensor(b)).sum(), rng.normal(size=(3, 4))), 1e-6)

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(0, 2, size=5)
        self.assertLess(grad_check(lambda z: cross_entropy(z, labels), rng.normal(size=(5, 2))), 1e-6)
        weights = np.array([0.7, 2.0])
        self.assertLess(grad_check(lambda z: cross_entropy(z, labels, class_weights=weights), rng.normal(size=(5, 2))), 1e-6)

    def test_batched_input_times_shared_weight(self):
        rng = np.random.default_rng(5)
        x, w = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 2))
        self.assertLess(grad_check(lambda a: (matmul(a, Tensor(w)) * matmul(a, Tensor(w))).sum(), x), 1e-6)
        self.assertLess(grad_check(lambda b: (matmul(Tensor(x), b) * matmul(Tensor(x), b)).sum(), w), 1e-6)

    def test_activations_and_norm(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 5))
        weights = Tensor(rng.normal(size=(2, 5)))
        for op in (gelu, normalize, lambda t: softmax(t, axis=-1)):
            self.assertLess(grad_check(lambda t: (op(t) * weights).sum(), x), 1e-6)
        # away from the kink
        self.assertLess(grad_check(lambda t: relu(t).sum(), np.abs(x) + 0.1), 1e-6)

    def test_kink_is_reported(self):
        self.assertEqual(grad_check(lambda x: absolute(x).sum(), np.array([0.0])), float("inf"))

    def test_non_finite_value(self):
        with self.assertRaises(NumericError):
            grad_check(lambda x: log(x).sum(), np.array([-1.0]))

    def test_non_scalar_output(self):
        with self.assertRaises(InputError):
            grad_check(lambda x: x * 2.0, np.ones(3))

    def test_parameter_is_restored(self):
        class Owner:
            weight = Tensor(np.array([[0.5, -0.25]]))

        owner = Owner()
        original = owner.weight
        x = Tensor(np.array([[1.0], [2.0]]))
        error = grad_check_parameter(lambda: (matmul(owner.weight, x) * matmul(owner.weight, x)).sum(), owner, "weight")
        self.assertLess(error, 1e-6)
        self.assertIs(owner.weight, original)

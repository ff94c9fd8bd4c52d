import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_array_equal

from core.exceptions import ConfigError, LoadError, MissingArtifactError, NumericError
from eval_harness.metrics import compute_metrics
from log_pipeline.bundle import prepare_sequences
from log_pipeline.grouping import chronological_split, group_windows
from log_pipeline.parsing import LABELED_LINES, parse_line
from log_pipeline.records import LogEvent, LogSequence
from log_pipeline.synthetic import synthesize_corpus, synthetic_sequences
from model_core.config import ModelConfig
from model_core.transformer import Transformer
from peft_methods.config import LoraConfig, ReftConfig
from peft_methods.lora import lora_delta
from tensor_engine.tensor import Tensor
from tokenizer.vocabulary import AUTOREGRESSIVE, MASKED
from training.checkpoint import Checkpoint, predict
from training.gradient_suite import run_gradient_suite
from training.head import ClassifierHead, anomaly_score, labels_from_scores, scores_from_logits
from training.optim import AdamState, AdamW, TrainConfig, adamw_step
from training.trainer import class_weights, train


def small_model(style=MASKED):
    return ModelConfig(style=style, layers=2, hidden=16, heads=2, ffn_dim=32, seed=21)


def small_train(**kwargs):
    options = {"learning_rate": 5e-3, "batch_size": 16, "epochs": 3, "seed": 9, **kwargs}
    return TrainConfig(**options)


def corpus():
    return chronological_split(synthetic_sequences(150, 50, length=3, seed=4), 0.8)


def windowed_corpus(windows, window=10, anomaly_rate=0.2, seed=6):
    lines = synthesize_corpus(windows, window=window, anomaly_rate=anomaly_rate, seed=seed)
    events = [parse_line(line, LABELED_LINES, index) for index, line in enumerate(lines, start=1)]
    return chronological_split(group_windows(events, window=window), 0.8)


class HeadTests(SimpleTestCase):
    def test_tie_is_normal(self):
        scores = scores_from_logits(np.array([[0.0, 0.0]]))
        self.assertEqual(scores[0], 0.5)
        self.assertEqual(labels_from_scores(scores)[0], 0)

    def test_softmax_score(self):
        scores = scores_from_logits(np.array([[0.0, math.log(3)]]))
        self.assertAlmostEqual(scores[0], 0.75, places=12)
        self.assertEqual(labels_from_scores(scores)[0], 1)

    def test_anomaly_score_of_one_row(self):
        head = ClassifierHead(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([0.0, 0.0]))
        self.assertAlmostEqual(anomaly_score(Tensor([[0.0, math.log(3)]]), head), 0.75, places=6)

    def test_balanced_weights(self):
        assert_array_equal(class_weights([0, 0, 0, 1], "balanced"), [4 / 6, 2.0])
        assert_array_equal(class_weights([0, 0], "balanced"), [1.0, 1.0])
        self.assertIsNone(class_weights([0, 1], None))

    def test_extreme_margins_stay_finite(self):
        scores = scores_from_logits(np.array([[1000.0, -1000.0], [-1000.0, 1000.0]]))
        assert_array_equal(scores, [0.0, 1.0])


class OptimizerTests(SimpleTestCase):
    def test_single_step_by_hand(self):
        theta = Tensor(np.array([1.0]))
        config = TrainConfig(learning_rate=0.1, weight_decay=0.01)
        adamw_step({"theta": theta}, {"theta": np.array([1.0])}, AdamState(), config)
        self.assertAlmostEqual(float(theta.data[0]), 0.899, places=6)

    def test_zero_gradient_without_decay_is_a_fixed_point(self):
        theta = Tensor(np.array([0.3, -2.0]))
        adamw_step({"theta": theta}, {"theta": np.zeros(2)}, AdamState(), TrainConfig(weight_decay=0.0))
        assert_array_equal(theta.data, [0.3, -2.0])

    def test_non_finite_gradient_aborts_the_whole_step(self):
        good, bad = Tensor(np.array([1.0])), Tensor(np.array([1.0]))
        state = AdamState()
        with self.assertRaises(NumericError) as ctx:
            adamw_step({"good": good, "bad": bad}, {"good": np.array([1.0]), "bad": np.array([np.nan])}, state, TrainConfig())
        self.assertIn("'bad'", str(ctx.exception))
        self.assertEqual(good.data[0], 1.0)
        self.assertEqual(state.step, 0)

    def test_step_clears_gradients(self):
        theta = Tensor(np.array([1.0]), requires_grad=True)
        (theta * theta).sum().backward()
        optimizer = AdamW({"theta": theta}, TrainConfig())
        optimizer.step()
        self.assertIsNone(theta.grad)
        self.assertEqual(optimizer.state.step, 1)

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            TrainConfig(learning_rate=0)
        with self.assertRaises(ConfigError):
            TrainConfig(beta2=1.0)
        with self.assertRaises(ConfigError):
            TrainConfig(precision="bfloat16")
        with self.assertRaises(ConfigError):
            TrainConfig(class_weight="inverse")


class TrainerTests(SimpleTestCase):
    def test_epoch_records_and_decreasing_loss(self):
        result = train(corpus(), small_model(), LoraConfig(rank=4, alpha=8.0), small_train())
        self.assertEqual([record.epoch for record in result.epochs], [1, 2, 3])
        losses = [record.mean_loss for record in result.epochs]
        self.assertTrue(all(later < earlier for earlier, later in zip(losses, losses[1:])), losses)
        self.assertEqual(result.epochs[0].steps, math.ceil(160 / 16))

    def test_loss_decreases_with_the_default_configuration(self):
        # default model, optimizer and LoRA settings (rank clamped to the hidden size)
        result = train(windowed_corpus(320), ModelConfig(), LoraConfig(rank=ModelConfig().hidden), TrainConfig())
        losses = [record.mean_loss for record in result.epochs]
        self.assertEqual(len(losses), 3)
        self.assertTrue(all(later < earlier for earlier, later in zip(losses, losses[1:])), losses)

    def test_balanced_loss_trains(self):
        result = train(corpus(), small_model(), ReftConfig(rank=2), small_train(class_weight="balanced"))
        losses = [record.mean_loss for record in result.epochs]
        self.assertTrue(all(np.isfinite(losses)))
        self.assertLess(losses[-1], losses[0])

    def test_frozen_base_is_bitwise_unchanged(self):
        for peft in (LoraConfig(rank=4), ReftConfig(rank=4)):
            result = train(corpus(), small_model(), peft, small_train(epochs=1))
            config = result.detector.model.config
            before = Transformer.initialise(config).snapshot()
            after = result.detector.model.snapshot()
            self.assertEqual(before.keys(), after.keys())
            for name in before:
                assert_array_equal(after[name], before[name], err_msg=name)
            actual = sum(tensor.data.size for tensor in result.detector.trainable_parameters().values())
            self.assertEqual(actual, result.budget.total)

    def test_same_seed_is_bitwise_reproducible(self):
        first = train(corpus(), small_model(), ReftConfig(rank=2), small_train(epochs=2))
        second = train(corpus(), small_model(), ReftConfig(rank=2), small_train(epochs=2))
        a, b = first.detector.trainable_parameters(), second.detector.trainable_parameters()
        for name in a:
            assert_array_equal(a[name].data, b[name].data, err_msg=name)

    def test_empty_split(self):
        with self.assertRaises(ConfigError):
            train([], small_model(), LoraConfig(rank=2), small_train())

    def test_single_class_only_warns(self):
        normal = [seq for seq in corpus().train if seq.label == 0]
        with self.assertLogs("training.trainer", "WARNING"):
            result = train(normal, small_model(), LoraConfig(rank=2), small_train(epochs=1))
        self.assertEqual(len(result.epochs), 1)

    def test_predictions(self):
        result = train(corpus(), small_model(AUTOREGRESSIVE), ReftConfig(rank=2), small_train(epochs=1))
        seq = corpus().test[0]
        self.assertEqual(result.detector.predict(seq), result.detector.predict(seq))
        label, score = result.detector.predict(LogSequence("oov", (LogEvent("zzz qqq xyzzy", 1),), 0))
        self.assertIn(label, (0, 1))
        self.assertTrue(0.0 <= score <= 1.0)


class CheckpointTests(SimpleTestCase):
    def test_roundtrip_scores_are_bitwise_identical(self):
        split = corpus()
        for peft in (LoraConfig(rank=4, alpha=8.0), ReftConfig(rank=2)):
            result = train(split, small_model(), peft, small_train(epochs=1))
            expected = result.detector.predict_sequences(split.test)[1]
            with tempfile.TemporaryDirectory() as tmp:
                Checkpoint.from_detector(result.detector, fingerprint="abc123", seed=9).save(tmp)
                loaded = Checkpoint.load(tmp)
            assert_array_equal(loaded.detector.predict_sequences(split.test)[1], expected)
            self.assertEqual(loaded.fingerprint, "abc123")
            self.assertEqual(predict(split.test[0], loaded), result.detector.predict(split.test[0]))

    def test_weights_are_stored_as_float32(self):
        result = train(corpus(), small_model(), ReftConfig(rank=2), small_train(epochs=1, precision="float64"))
        params = result.detector.trainable_parameters()
        with tempfile.TemporaryDirectory() as tmp:
            Checkpoint.from_detector(result.detector, seed=9).save(tmp)
            raw = (Path(tmp) / "weights.bin").read_bytes()
            loaded = Checkpoint.load(tmp)
        self.assertEqual(len(raw), 4 * sum(tensor.data.size for tensor in params.values()))
        first = next(iter(params.values()))
        self.assertEqual(raw[: 4 * first.data.size], np.asarray(first.data, dtype="<f4").tobytes())
        self.assertEqual(loaded.precision, "float64")
        for name, tensor in loaded.detector.trainable_parameters().items():
            self.assertEqual(tensor.dtype, np.float64)
            assert_array_equal(tensor.data, params[name].data.astype(np.float32).astype(np.float64), err_msg=name)

    def test_trained_lora_update_stays_low_rank(self):
        rank = 2
        result = train(corpus(), small_model(), LoraConfig(rank=rank, alpha=4.0), small_train(epochs=2))
        with tempfile.TemporaryDirectory() as tmp:
            Checkpoint.from_detector(result.detector, seed=9).save(tmp)
            loaded = Checkpoint.load(tmp)
        for key, adapter in loaded.detector.attachment.adapters.items():
            delta = lora_delta(adapter).astype(np.float64)
            self.assertTrue(np.any(delta != 0), key)
            self.assertLessEqual(np.linalg.matrix_rank(delta), rank, key)

    def test_missing_pieces(self):
        result = train(corpus(), small_model(), LoraConfig(rank=2), small_train(epochs=1))
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(MissingArtifactError):
                Checkpoint.load(Path(tmp) / "nothing")
            Checkpoint.from_detector(result.detector, seed=9).save(tmp)
            (Path(tmp) / "vocab.json").unlink()
            with self.assertRaises(LoadError):
                Checkpoint.load(tmp)


class GradientSuiteTests(SimpleTestCase):
    def test_every_check_passes(self):
        results = run_gradient_suite()
        self.assertGreater(len(results), 20)
        names = {result.name for result in results}
        for style in (MASKED, AUTOREGRESSIVE):
            for check in ("attention key", "attention value", "layer norm shift", "position embedding"):
                self.assertIn(f"{style}: {check}", names)
        for result in results:
            self.assertTrue(result.passed, f"{result.name}: {result.max_relative_error:.3e}")


@tag("slow")
class SyntheticDetectionTests(SimpleTestCase):
    """
    5,000 windows of 50 lines, 5% carrying the planted template, split 80/20,
    on the default model and token limit. Both classes weigh the same in the loss.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        log = Path(cls.tmp.name) / "synthetic.log"
        log.write_text("\n".join(synthesize_corpus(5000, window=50, anomaly_rate=0.05, seed=42)) + "\n", encoding="utf-8")
        sequences, _ = prepare_sequences(log, "labeled-lines", "window", window=50)
        cls.split = chronological_split(sequences, 0.8)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def run_method(self, peft, learning_rate):
        config = TrainConfig(learning_rate=learning_rate, epochs=5, seed=42, class_weight="balanced")
        result = train(self.split, ModelConfig(), peft, config)
        self.assertEqual(result.detector.vocab.max_len, 256)
        predictions, _ = result.detector.predict_sequences(self.split.test, batch_size=64)
        return result, compute_metrics(predictions, [seq.label for seq in self.split.test])

    def test_lora(self):
        result, metrics = self.run_method(LoraConfig(rank=8), 1e-4)
        self.assertGreaterEqual(metrics.f1, 0.95)
        self.assertLess(result.mean_epoch_seconds * len(result.epochs), 300)

    def test_reft(self):
        result, metrics = self.run_method(ReftConfig(rank=8), 2e-3)
        self.assertGreaterEqual(metrics.f1, 0.95)
        self.assertLess(result.mean_epoch_seconds * len(result.epochs), 300)

import dataclasses
import itertools
import json
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, TestCase

from core.exceptions import ConfigError, InputError, MissingArtifactError
from eval_harness.metrics import compute_metrics
from eval_harness.models import ExperimentRun
from eval_harness.protocols import (
    ExperimentConfig,
    benchmark,
    cross_eval,
    derive_seed,
    evaluate_checkpoint,
    point_seed,
    run_points,
    sweep_injection,
    sweep_rank,
    sweep_train_ratio,
)
from eval_harness.reports import ExperimentReport, ReportRow
from eval_harness.unstable import SynonymLexicon, inject_unstable, injection_targets, load_lexicon, pick_action_words
from log_pipeline.grouping import chronological_split
from log_pipeline.records import LogEvent, LogSequence
from log_pipeline.synthetic import synthetic_sequences
from model_core.config import ModelConfig
from peft_methods.config import LoraConfig, ReftConfig
from training.checkpoint import Checkpoint
from training.optim import TrainConfig
from training.trainer import train

LEXICON = Path(__file__).resolve().parent / "fixtures" / "synonyms.csv"
ACTION_WORDS = ["open", "close", "read", "write", "send", "receive", "start", "stop", "connect", "update"]


def counts(tp, fp, fn, tn):
    predictions = [1] * tp + [1] * fp + [0] * fn + [0] * tn
    labels = [1] * tp + [0] * fp + [1] * fn + [0] * tn
    return predictions, labels


def experiment(**kwargs):
    options = {
        "model": ModelConfig(layers=1, hidden=8, heads=2, ffn_dim=16, seed=13),
        "peft": LoraConfig(rank=2, alpha=4.0),
        "train": TrainConfig(learning_rate=5e-3, batch_size=16, epochs=1),
        "seed": 42,
        "max_len": 32,
        "fingerprint": "0123456789abcdef",
        **kwargs,
    }
    return ExperimentConfig(**options)


def small_corpus():
    return synthetic_sequences(60, 20, length=2, seed=5)


class MetricsTests(SimpleTestCase):
    def test_reported_f1_from_counts(self):
        # P = 0.9738, R = 0.9643
        metrics = compute_metrics(*counts(tp=9643, fp=259, fn=357, tn=0))
        self.assertAlmostEqual(metrics.precision, 0.9738, delta=1e-4)
        self.assertAlmostEqual(metrics.recall, 0.9643, delta=1e-4)
        self.assertAlmostEqual(metrics.f1, 0.9690, delta=1e-4)
        # P = 1.0, R = 0.9697
        metrics = compute_metrics(*counts(tp=9697, fp=0, fn=303, tn=50))
        self.assertEqual(metrics.precision, 1.0)
        self.assertAlmostEqual(metrics.f1, 0.9846, delta=1e-4)

    def test_zero_division(self):
        metrics = compute_metrics(*counts(tp=0, fp=0, fn=0, tn=5))
        self.assertEqual((metrics.precision, metrics.recall, metrics.f1), (0.0, 0.0, 0.0))
        self.assertEqual(compute_metrics([], []).total, 0)

    def test_matches_brute_force_counts(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            size = int(rng.integers(1, 12))
            predictions, labels = rng.integers(0, 2, size).tolist(), rng.integers(0, 2, size).tolist()
            metrics = compute_metrics(predictions, labels)
            pairs = list(zip(predictions, labels))
            tp, fp = pairs.count((1, 1)), pairs.count((1, 0))
            fn, tn = pairs.count((0, 1)), pairs.count((0, 0))
            self.assertEqual((metrics.tp, metrics.fp, metrics.fn, metrics.tn), (tp, fp, fn, tn))
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            self.assertAlmostEqual(metrics.f1, f1, places=12)

    def test_degenerate_predictions(self):
        self.assertTrue(compute_metrics([1, 1, 1], [0, 1, 0]).degenerate)
        self.assertFalse(compute_metrics([1, 0, 1], [0, 1, 0]).degenerate)

    def test_bad_input(self):
        with self.assertRaises(InputError):
            compute_metrics([1, 0], [1])
        with self.assertRaises(InputError):
            compute_metrics([2, 0], [1, 0])


class LexiconTests(SimpleTestCase):
    def test_sample_lexicon(self):
        lexicon = load_lexicon(LEXICON)
        self.assertEqual(len(lexicon), 20)
        self.assertEqual(lexicon.top("open"), ("unfold", "unseal", "expose"))

    def test_errors(self):
        with self.assertRaises(MissingArtifactError):
            load_lexicon("/nonexistent/lexicon.csv")
        with self.assertRaises(ConfigError):
            SynonymLexicon({"open": ()})
        with self.assertRaises(ConfigError):
            SynonymLexicon({"open": ("open",)})


class ActionWordTests(SimpleTestCase):
    def test_most_frequent_first(self):
        texts = ["open file <*> open", "open socket", "close file"] + [f"w{chr(97 + i)} x{chr(97 + i)}" for i in range(8)]
        words = pick_action_words(texts)
        self.assertEqual(words[0], "open")
        self.assertEqual(words[1:3], ["file", "close"])
        self.assertNotIn("<*>", words)

    def test_everything_stopped(self):
        with self.assertRaises(ConfigError):
            pick_action_words(["the and of", "is it"])

    def test_manual_override(self):
        self.assertEqual(pick_action_words(["ignored"], override=ACTION_WORDS), ACTION_WORDS)
        with self.assertRaises(ConfigError):
            pick_action_words(["ignored"], override=ACTION_WORDS[:3])

    def test_candidates_narrow_the_pool(self):
        texts = [" ".join(sequence.templates) for sequence in small_corpus()]
        words = pick_action_words(texts, candidates=load_lexicon(LEXICON).synonyms)
        self.assertEqual(len(words), 10)
        self.assertTrue(set(words) <= set(load_lexicon(LEXICON).synonyms))


class InjectionTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.lexicon = load_lexicon(LEXICON)

    def test_rate_one_percent_of_51000(self):
        # 50,000 normal and 1,000 anomalous sequences, each carrying one action word
        test = [
            LogSequence(f"s{i}", (LogEvent(f"{ACTION_WORDS[i % 10]} block <*>", i + 1),), int(i >= 50000))
            for i in range(51000)
        ]
        result = inject_unstable(test, self.lexicon, ACTION_WORDS, 0.01, seed=7)
        self.assertEqual(len(result.selected), 510)
        self.assertEqual(result.changed, 510)
        self.assertEqual(len(result.sequences), len(test))
        self.assertEqual([seq.label for seq in result.sequences], [seq.label for seq in test])
        differing = [i for i, (a, b) in enumerate(zip(test, result.sequences)) if a != b]
        self.assertEqual(tuple(differing), result.changed_indices)

    def test_rate_zero_is_identical(self):
        test = small_corpus()
        result = inject_unstable(test, self.lexicon, ACTION_WORDS, 0.0, seed=7)
        self.assertEqual(result.sequences, test)
        self.assertEqual(json.dumps([s.to_dict() for s in result.sequences]), json.dumps([s.to_dict() for s in test]))

    def test_replacement_is_seeded(self):
        test = [LogSequence("s0", (LogEvent("open file", 1),), 0)]
        first = inject_unstable(test, self.lexicon, ACTION_WORDS, 1.0, seed=3)
        second = inject_unstable(test, self.lexicon, ACTION_WORDS, 1.0, seed=3)
        replaced = first.sequences[0].templates[0]
        self.assertEqual(replaced, second.sequences[0].templates[0])
        word, rest = replaced.split(" ", 1)
        self.assertIn(word, self.lexicon.top("open"))
        self.assertEqual(rest, "file")

        rng = np.random.default_rng([3, 1])
        self.assertEqual(word, self.lexicon.top("open")[int(rng.integers(3))])

    def test_selection_count_follows_rounding(self):
        self.assertEqual(len(injection_targets(51000, 0.3, seed=0)), 15300)
        self.assertEqual(len(set(injection_targets(200, 0.5, seed=0).tolist())), 100)

    def test_errors(self):
        with self.assertRaises(ConfigError):
            inject_unstable(small_corpus(), self.lexicon, ACTION_WORDS, 1.5, seed=0)
        with self.assertRaises(ConfigError):
            inject_unstable(small_corpus(), self.lexicon, ACTION_WORDS[:9] + ["frobnicate"], 0.1, seed=0)


class ProtocolTests(TestCase):
    def test_derived_seeds(self):
        self.assertEqual(derive_seed(42, "rank=8"), derive_seed(42, "rank=8"))
        self.assertNotEqual(derive_seed(42, "rank=8"), derive_seed(42, "rank=16"))
        self.assertNotEqual(derive_seed(42, "rank=8"), derive_seed(43, "rank=8"))
        self.assertLess(derive_seed(42, "x"), 2**63)
        self.assertEqual(point_seed(42), 42)
        self.assertEqual(point_seed(42, "rank=8"), derive_seed(42, "rank=8"))

    def test_run_points_keeps_order(self):
        tasks = [lambda value=value: ReportRow(str(value), value) for value in range(6)]
        self.assertEqual([row.axis for row in run_points(3, tasks)], [str(value) for value in range(6)])

    def test_rank_sweep_has_a_row_per_rank(self):
        split = chronological_split(small_corpus(), 0.8)
        report = sweep_rank(experiment(), split, [1, 2, 4, 8, 16, 32, 64, 128])
        self.assertEqual([row.axis for row in report.rows], ["1", "2", "4", "8", "16", "32", "64", "128"])
        self.assertEqual([row.failed for row in report.rows], [False] * 4 + [True] * 4)
        self.assertIn("exceeds the hidden size", report.rows[-1].error)
        self.assertTrue(all(row.init_checksum for row in report.rows[:4]))
        self.assertEqual(len({row.init_checksum for row in report.rows[:4]}), 4)

    def test_rank_sweep_single_rank_and_order(self):
        split = chronological_split(small_corpus(), 0.8)
        self.assertEqual(len(sweep_rank(experiment(peft=ReftConfig(rank=2)), split, [4])), 1)
        with self.assertRaises(ConfigError):
            sweep_rank(experiment(), split, [4, 2])

    def test_reports_are_reproducible(self):
        split = chronological_split(small_corpus(), 0.8)
        first = sweep_rank(experiment(jobs=2), split, [1, 2])
        second = sweep_rank(experiment(), split, [1, 2])
        self.assertEqual(first.reproducible_view(), second.reproducible_view())

    def test_ratio_sweep_fixes_the_test_partition(self):
        sequences = small_corpus()
        ratios = [round(0.1 * step, 1) for step in range(1, 9)]
        report = sweep_train_ratio(experiment(), sequences, ratios)
        self.assertEqual(len(report), 8)
        self.assertEqual({row.extra["test_size"] for row in report.rows}, {16})
        self.assertEqual([row.extra["train_size"] for row in report.rows], [8, 16, 24, 32, 40, 48, 56, 64])
        with self.assertRaises(ConfigError):
            sweep_train_ratio(experiment(), sequences, [0.9])

    def test_ratio_sweep_scores_every_point_on_the_same_tail(self):
        sequences = small_corpus()
        seen = []

        def record(config, axis, train_seqs, test, seed):
            seen.append((axis, [seq.key for seq in train_seqs], [seq.key for seq in test], seed))
            return ReportRow(str(axis), seed)

        ratios = [round(0.1 * step, 1) for step in range(1, 9)]
        with mock.patch("eval_harness.protocols.run_point", side_effect=record):
            sweep_train_ratio(experiment(), sequences, ratios)

        tail = [seq.key for seq in chronological_split(sequences, 0.8).test]
        self.assertEqual([axis for axis, *_ in seen], ratios)
        for axis, train_keys, test_keys, _ in seen:
            self.assertEqual(test_keys, tail, axis)
            self.assertFalse(set(train_keys) & set(tail), axis)
        seeds = [seed for *_, seed in seen]
        self.assertEqual(seeds[-1], 42)
        self.assertEqual(len(set(seeds)), 8)

    def test_ratio_sweep_main_point_reproduces_train(self):
        config = experiment()
        sequences = small_corpus()
        report = sweep_train_ratio(config, sequences, [0.8])
        split = chronological_split(sequences, 0.8)
        result = train(split, config.model, config.peft, config.train, min_count=config.min_count, max_len=config.max_len)
        predictions, _ = result.detector.predict_sequences(split.test)
        self.assertEqual(report.rows[0].seed, config.seed)
        self.assertEqual(report.rows[0].metrics, compute_metrics(predictions, [seq.label for seq in split.test]))

    def test_cross_eval_on_itself_reproduces_train_and_evaluate(self):
        config = experiment(train=TrainConfig(learning_rate=5e-3, batch_size=16, epochs=2, seed=7), seed=7)
        split = chronological_split(small_corpus(), 0.8)
        other = chronological_split(synthetic_sequences(30, 10, length=2, seed=99), 0.5)
        report = cross_eval(config, "synthetic", split, {"synthetic": split, "other": other})
        self.assertEqual([row.axis for row in report.rows], ["synthetic->synthetic", "synthetic->other"])
        self.assertEqual(report.rows[0].seed, 7)

        # what `train` followed by `evaluate` does with the same run config
        train_config = dataclasses.replace(config.train, seed=config.seed)
        result = train(split, config.model, config.peft, train_config, min_count=config.min_count, max_len=config.max_len)
        with tempfile.TemporaryDirectory() as tmp:
            Checkpoint.from_detector(result.detector, seed=train_config.seed).save(tmp)
            evaluated = evaluate_checkpoint(Checkpoint.load(tmp), "synthetic", split.test)
        self.assertEqual(report.rows[0].metrics, evaluated.rows[0].metrics)
        self.assertIsNotNone(report.rows[0].init_checksum)

    def test_injection_sweep(self):
        split = chronological_split(small_corpus(), 0.8)
        report = sweep_injection(experiment(), split, [0.05, 0.5], load_lexicon(LEXICON))
        self.assertEqual([row.axis for row in report.rows], ["0.0", "0.05", "0.5"])
        self.assertEqual(len(report.config["action_words"]), 10)
        self.assertTrue(0 < report.rows[2].extra["perturbed"] <= 8)
        self.assertEqual(report.rows[0].extra["perturbed"], 0)

    def test_benchmark_grid(self):
        split = chronological_split(small_corpus(), 0.8)
        methods = {"lora": LoraConfig(rank=2), "reft": ReftConfig(rank=2)}
        report = benchmark(experiment(), split, methods)
        self.assertEqual(
            [row.axis for row in report.rows],
            [f"{style}/{method}" for style, method in itertools.product(("masked", "autoregressive"), methods)],
        )
        self.assertFalse(report.failures)


class ReportTests(TestCase):
    def report(self):
        metrics = compute_metrics([1, 0, 1, 0], [1, 0, 0, 0])
        rows = [
            ReportRow("1", 11, metrics, epoch_seconds=0.5, compute_seconds=0.4, init_checksum="aa"),
            ReportRow("2", 12, error="LoRA rank 2 exceeds the hidden size 1"),
        ]
        return ExperimentReport("sweep_rank", rows, 42, "0123456789abcdef", {"ranks": [1, 2]})

    def test_write_csv_json_and_ledger(self):
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, json_path = self.report().write(tmp)
            frame = pd.read_csv(csv_path)
            for column in ("axis", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "epoch_seconds", "seed"):
                self.assertIn(column, frame.columns)
            self.assertEqual(len(frame), 2)
            summary = json.loads(Path(json_path).read_text(encoding="utf-8"))

        self.assertEqual(summary["fingerprint"], "0123456789abcdef")
        self.assertEqual([point["axis"] for point in summary["points"]], ["1", "2"])
        self.assertEqual(summary["points"][0]["tp"], 1)
        self.assertIsNone(summary["points"][1]["f1"])

        run = ExperimentRun.objects.get()
        self.assertEqual(run.protocol, "sweep_rank")
        self.assertEqual(run.points.count(), 2)

    def test_reproducible_view_drops_timing(self):
        view = self.report().reproducible_view()
        self.assertNotIn("epoch_seconds", view[0])
        self.assertEqual(view[0]["init_checksum"], "aa")

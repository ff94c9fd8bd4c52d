import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings
from rest_framework import serializers

from core.config import fingerprint, resolve_run_config
from core.exceptions import ConfigError
from core.management.commands.train import Command as TrainCommand
from eval_harness.models import ExperimentRun
from peft_methods.config import ReftConfig

TINY = ["--hidden", "8", "--heads", "2", "--layers", "1", "--ffn-dim", "16", "--epochs", "1", "--lr", "5e-3"]


class RunConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = resolve_run_config()
        self.assertEqual(config.seed, settings.PEFT_LAD["SEED"])
        self.assertEqual(config.method, "lora")
        # the default LoRA rank is clamped to the default hidden size
        self.assertEqual(config.data["lora"]["rank"], 64)
        self.assertEqual(config.train_config().learning_rate, 1e-4)

    def test_flag_beats_file_beats_default(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.json"
            path.write_text(json.dumps({"seed": 7, "train": {"epochs": 9, "batch_size": 4}}), encoding="utf-8")
            config = resolve_run_config(path, {"train": {"epochs": 2}})
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.data["train"]["epochs"], 2)
        self.assertEqual(config.data["train"]["batch_size"], 4)
        self.assertEqual(config.data["train"]["learning_rate"], 1e-4)

    def test_rank_follows_the_selected_method(self):
        config = resolve_run_config(overrides={"peft": "reft"}, rank=4)
        self.assertEqual(config.peft_config(), ReftConfig(rank=4))
        self.assertEqual(config.data["lora"]["rank"], 64)

    def test_explicit_rank_above_hidden_is_rejected(self):
        with self.assertRaises(serializers.ValidationError):
            resolve_run_config(overrides={"model": {"hidden": 8, "heads": 2}}, rank=16)

    def test_invalid_values(self):
        for overrides in ({"model": {"heads": 3}}, {"dataset": {"format": "syslog"}}, {"sweep": {"ranks": [4, 2]}}):
            with self.assertRaises(serializers.ValidationError, msg=overrides):
                resolve_run_config(overrides=overrides)

    def test_class_weight(self):
        self.assertIsNone(resolve_run_config().train_config().class_weight)
        config = resolve_run_config(overrides={"train": {"class_weight": "balanced"}})
        self.assertEqual(config.train_config().class_weight, "balanced")
        with self.assertRaises(serializers.ValidationError):
            resolve_run_config(overrides={"train": {"class_weight": "inverse"}})
        options = TrainCommand().create_parser("manage.py", "train").parse_args(["--bundle", "b", "--balance-classes"])
        self.assertEqual(vars(options)["class_weight"], "balanced")

    def test_missing_or_malformed_file(self):
        with self.assertRaises(ConfigError):
            resolve_run_config("/nonexistent/run.json")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.json"
            path.write_text("[1, 2]", encoding="utf-8")
            with self.assertRaises(ConfigError):
                resolve_run_config(path)

    def test_fingerprint(self):
        base = resolve_run_config()
        self.assertEqual(len(base.fingerprint), 16)
        self.assertEqual(base.fingerprint, resolve_run_config().fingerprint)
        self.assertEqual(base.fingerprint, resolve_run_config(overrides={"out": "elsewhere", "sweep": {"jobs": 4}}).fingerprint)
        self.assertNotEqual(base.fingerprint, resolve_run_config(overrides={"seed": 1}).fingerprint)
        self.assertEqual(fingerprint({"a": 1, "b": 2}), fingerprint({"b": 2, "a": 1}))

    def test_seed_from_settings(self):
        conf = {**settings.PEFT_LAD, "SEED": 5}
        with override_settings(PEFT_LAD=conf):
            self.assertEqual(resolve_run_config().seed, 5)

    def test_help_lists_the_defaults(self):
        parser = TrainCommand().create_parser("manage.py", "train")
        actions = {action.dest: action for action in parser._actions}
        self.assertTrue(actions["bundle"].required)
        self.assertIn("3", actions["epochs"].help)
        self.assertIn("clamped", actions["rank"].help)
        self.assertIsNone(actions["epochs"].default)


class CommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.out = str(self.root / "runs")
        self.log = self.root / "synthetic.log"

    def call(self, *args):
        stdout = StringIO()
        call_command(*args, "--out", self.out, stdout=stdout, stderr=StringIO())
        return stdout.getvalue()

    def prepare(self, name="synth", seed=3):
        log = self.root / f"{name}.log"
        call_command(
            "synthesize", "--output", str(log), "--windows", "40", "--window", "10",
            "--anomaly-rate", "0.25", "--seed", str(seed), stdout=StringIO(),
        )
        self.call("prepare", "--input", str(log), "--window", "10", "--name", name)
        return str(Path(self.out) / name)

    def report(self, stem):
        frame = pd.read_csv(Path(self.out) / f"{stem}.csv")
        payload = json.loads((Path(self.out) / f"{stem}.json").read_text(encoding="utf-8"))
        return frame, payload

    def test_pipeline(self):
        bundle = self.prepare()
        output = self.call("train", "--bundle", bundle, *TINY)
        self.assertIn("Trainable parameters", output)
        checkpoint = Path(self.out) / "checkpoint"
        self.assertTrue((checkpoint / "manifest.json").is_file())
        self.assertEqual(len(pd.read_csv(checkpoint / "epochs.csv")), 1)

        output = self.call("evaluate", "--checkpoint", str(checkpoint), "--bundle", bundle, *TINY)
        self.assertIn("f1", output)
        report = pd.read_csv(Path(self.out) / "evaluate.csv")
        self.assertEqual(len(report), 1)
        self.assertTrue(0.0 <= report["f1"][0] <= 1.0)
        payload = json.loads((Path(self.out) / "evaluate.json").read_text(encoding="utf-8"))
        self.assertEqual(payload["protocol"], "evaluate")
        self.assertEqual(ExperimentRun.objects.count(), 1)

    def test_rank_sweep_defaults_to_eight_points(self):
        bundle = self.prepare()
        self.call("sweep_rank", "--bundle", bundle, *TINY)
        report = pd.read_csv(Path(self.out) / "sweep_rank.csv")
        self.assertEqual(report["axis"].astype(str).tolist(), ["1", "2", "4", "8", "16", "32", "64", "128"])
        self.assertEqual(report["error"].notna().tolist(), [False] * 4 + [True] * 4)

    def test_cross(self):
        bundle, other = self.prepare(), self.prepare("other", seed=8)
        self.call("cross", "--train-bundle", bundle, "--test-bundles", bundle, other, *TINY)
        frame, payload = self.report("cross")
        self.assertEqual(frame["axis"].tolist(), ["synth->synth", "synth->other"])
        self.assertEqual(frame["seed"].tolist(), [settings.PEFT_LAD["SEED"]] * 2)
        self.assertEqual(payload["protocol"], "cross")
        run = ExperimentRun.objects.get(protocol="cross")
        self.assertEqual(run.points.count(), 2)
        with self.assertRaises(CommandError) as ctx:
            self.call("cross", "--train-bundle", bundle, "--test-bundles", str(self.root / "nothing"), *TINY)
        self.assertEqual(ctx.exception.returncode, 3)

    def test_inject(self):
        bundle = self.prepare()
        output = self.call("inject", "--bundle", bundle, "--rates", "0.1", "0.5", *TINY)
        self.assertIn("Action words:", output)
        frame, payload = self.report("inject")
        self.assertEqual(frame["axis"].tolist(), [0.0, 0.1, 0.5])
        # 8 test windows, every one of them carrying action words
        self.assertEqual(frame["perturbed"].tolist(), [0, 1, 4])
        self.assertEqual(len(payload["config"]["action_words"]), 10)
        self.assertEqual(ExperimentRun.objects.get(protocol="inject").points.count(), 3)
        with self.assertRaises(CommandError) as ctx:
            self.call("inject", "--bundle", bundle, "--lexicon", str(self.root / "missing.csv"), *TINY)
        self.assertEqual(ctx.exception.returncode, 3)

    def test_sweep_data(self):
        bundle = self.prepare()
        self.call("sweep_data", "--bundle", bundle, "--ratios", "0.4", "0.8", *TINY)
        frame, _ = self.report("sweep_data")
        self.assertEqual(frame["axis"].tolist(), [0.4, 0.8])
        self.assertEqual(frame["train_size"].tolist(), [16, 32])
        self.assertEqual(frame["test_size"].tolist(), [8, 8])
        self.assertEqual(int(frame["seed"][1]), settings.PEFT_LAD["SEED"])
        self.assertEqual(ExperimentRun.objects.get(protocol="sweep_data").points.count(), 2)
        with self.assertRaises(CommandError) as ctx:
            self.call("sweep_data", "--bundle", bundle, "--ratios", "0.9", *TINY)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_benchmark(self):
        bundle = self.prepare()
        output = self.call("benchmark", "--bundle", bundle, *TINY)
        self.assertIn("masked/lora", output)
        frame, payload = self.report("benchmark")
        self.assertEqual(
            frame["axis"].tolist(), ["masked/lora", "masked/reft", "autoregressive/lora", "autoregressive/reft"]
        )
        self.assertTrue(frame["error"].isna().all())
        self.assertEqual(payload["protocol"], "benchmark")
        self.assertEqual(ExperimentRun.objects.get(protocol="benchmark").points.count(), 4)
        with self.assertRaises(CommandError) as ctx:
            self.call("benchmark", "--bundle", bundle, "--repeats", "0", *TINY)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_invalid_configuration_exits_2(self):
        bundle = self.prepare()
        with self.assertRaises(CommandError) as ctx:
            self.call("train", "--bundle", bundle, "--hidden", "10", "--heads", "3")
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("heads", str(ctx.exception))

    def test_unknown_format_exits_2(self):
        self.log.write_text("- hello\n", encoding="utf-8")
        with self.assertRaises(CommandError) as ctx:
            self.call("prepare", "--input", str(self.log), "--format", "syslog")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_artifacts_exit_3(self):
        bundle = self.prepare()
        with self.assertRaises(CommandError) as ctx:
            self.call("evaluate", "--checkpoint", str(self.root / "nothing"), "--bundle", bundle)
        self.assertEqual(ctx.exception.returncode, 3)
        with self.assertRaises(CommandError) as ctx:
            self.call("train", "--bundle", str(self.root / "nothing"))
        self.assertEqual(ctx.exception.returncode, 3)

    def test_gradcheck(self):
        stdout = StringIO()
        call_command("gradcheck", stdout=stdout)
        self.assertIn("gradient checks passed", stdout.getvalue())

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigError, GroupingError, InputError, LoadError, LogParseError, MissingArtifactError
from log_pipeline.bundle import prepare_sequences, read_bundle, write_bundle
from log_pipeline.grouping import chronological_split, group_sessions, group_windows
from log_pipeline.parsing import HDFS, LABELED_LINES, WILDCARD, load_session_labels, mask_parameters, parse_line, read_log_file
from log_pipeline.records import ANOMALOUS, NORMAL, LogEvent, LogSequence, class_balance, concat_sequence_text
from log_pipeline.synthetic import ANOMALY_LABEL, synthesize_corpus, synthetic_sequences
from tokenizer.vocabulary import DEFAULT_MAX_LEN, MASKED, build_vocab, encode


def events(count, anomalous=()):
    return [LogEvent(f"event {i % 3}", i + 1, ANOMALOUS if i in anomalous else NORMAL) for i in range(count)]


def sequences(count):
    return [LogSequence(f"s{i}", (LogEvent("x", i + 1),), NORMAL) for i in range(count)]


class ParsingTests(SimpleTestCase):
    def test_hdfs_line(self):
        event = parse_line("Receiving block blk_3587 src: /10.0.0.1:50010", HDFS)
        self.assertEqual(event.template_text, "Receiving block <*> src: <*>")
        self.assertEqual(event.session_key, "blk_3587")
        self.assertEqual(event.label, NORMAL)

    def test_hdfs_header_is_stripped(self):
        event = parse_line("081109 203615 148 INFO dfs.DataNode$PacketResponder: Received block blk_-1608999687919862906 of size 91178", HDFS)
        self.assertEqual(event.template_text, "Received block <*> of size <*>")
        self.assertEqual(event.session_key, "blk_-1608999687919862906")

    def test_hdfs_line_naming_two_blocks(self):
        event = parse_line("BLOCK* ask 10.250.14.224:50010 to replicate blk_7 to datanode(s) blk_9 blk_7", HDFS)
        self.assertEqual(event.session_keys, ("blk_7", "blk_9"))
        self.assertEqual(event.session_key, "blk_7")
        self.assertEqual(LogEvent.from_dict(event.to_dict()), event)

    def test_labeled_lines(self):
        self.assertEqual(parse_line("- instruction cache parity error corrected", LABELED_LINES).label, NORMAL)
        self.assertEqual(parse_line("KERNDTLB data TLB error interrupt", LABELED_LINES).label, ANOMALOUS)

    def test_header_fields_are_skipped(self):
        event = parse_line("- 1117838570 2005.06.03 R02-M1 ciod: generated core 42", LABELED_LINES, header_fields=3)
        self.assertEqual(event.template_text, "ciod: generated core <*>")

    def test_masking_leaves_no_digits(self):
        template = mask_parameters("worker7 wrote 0xdeadbeef to /var/log/app.log in 12.5ms")
        self.assertFalse(any(ch.isdigit() for ch in template))
        self.assertIn(WILDCARD, template)

    def test_bad_lines(self):
        with self.assertRaises(LogParseError):
            parse_line("   ", LABELED_LINES)
        with self.assertRaises(LogParseError):
            parse_line("-", LABELED_LINES)
        with self.assertRaises(InputError):
            parse_line("- hello", "syslog")

    def test_read_log_file_counts_rejections(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "app.log"
            path.write_bytes(b"- open file 1\n\n- close \xff file\nFATAL\n")
            found, report = read_log_file(path, LABELED_LINES)
        self.assertEqual([event.line_index for event in found], [1, 3])
        self.assertEqual(report.accepted, 2)
        self.assertEqual(report.rejected, 2)
        self.assertEqual(report.replaced_sequences, 1)

    def test_truncated_multibyte_character_is_one_replacement(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "app.log"
            path.write_bytes(b"- cost \xe2\x82 here\n- ok\n")
            found, report = read_log_file(path, LABELED_LINES)
        self.assertEqual(report.replaced_sequences, 1)
        self.assertEqual(found[0].template_text, "cost \ufffd here")

    def test_parsing_twice_is_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "corpus.log"
            path.write_text("\n".join(synthesize_corpus(30, window=10, anomaly_rate=0.2, seed=8)) + "\n", encoding="utf-8")
            first, first_report = read_log_file(path, LABELED_LINES)
            second, second_report = read_log_file(path, LABELED_LINES)
        self.assertEqual(first, second)
        self.assertEqual(first_report, second_report)
        self.assertEqual(len(first), 300)

    def test_missing_log_file(self):
        with self.assertRaises(MissingArtifactError):
            read_log_file("/nonexistent/app.log", HDFS)

    def test_session_labels(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "labels.csv"
            path.write_text("BlockId,Label\nblk_1,Anomaly\nblk_2,Normal\n", encoding="utf-8")
            self.assertEqual(load_session_labels(path), {"blk_1": 1, "blk_2": 0})
            path.write_text("BlockId,Label\nblk_1,Broken\n", encoding="utf-8")
            with self.assertRaises(InputError):
                load_session_labels(path)


class GroupingTests(SimpleTestCase):
    def test_sessions_partition_by_key(self):
        found = group_sessions([LogEvent("a", 1, session_key="blk_1"), LogEvent("b", 2, session_key="blk_2"), LogEvent("c", 3, session_key="blk_1")])
        self.assertEqual([seq.key for seq in found], ["blk_1", "blk_2"])
        self.assertEqual([event.line_index for event in found[0].events], [1, 3])
        self.assertEqual([event.line_index for event in found[1].events], [2])

    def test_event_joins_every_named_session(self):
        shared = LogEvent("replicate <*> to <*>", 2, session_key="blk_1", other_sessions=("blk_2",))
        found = group_sessions([LogEvent("a", 1, session_key="blk_1"), shared, LogEvent("b", 3, session_key="blk_2")])
        self.assertEqual([seq.key for seq in found], ["blk_1", "blk_2"])
        self.assertEqual([event.line_index for event in found[0].events], [1, 2])
        self.assertEqual([event.line_index for event in found[1].events], [2, 3])

    def test_sessions_empty_input(self):
        self.assertEqual(group_sessions([]), [])

    def test_session_labels_lookup(self):
        found = group_sessions(
            [LogEvent("a", 1, session_key="blk_1"), LogEvent("b", 2, session_key="blk_2")], {"blk_1": 1}
        )
        self.assertEqual([seq.label for seq in found], [1, 0])

    def test_session_key_missing(self):
        with self.assertRaises(GroupingError) as ctx:
            group_sessions([LogEvent("a", 7)])
        self.assertIn("line 7", str(ctx.exception))

    def test_tumbling_windows(self):
        self.assertEqual([len(seq) for seq in group_windows(events(120), window=50)], [50, 50, 20])
        self.assertEqual([len(seq) for seq in group_windows(events(1), window=50)], [1])

    def test_window_labels(self):
        found = group_windows(events(120, anomalous={55}), window=50)
        self.assertEqual([seq.label for seq in found], [0, 1, 0])

    def test_window_label_is_the_max_of_its_line_labels(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            count = int(rng.integers(1, 120))
            labels = (rng.random(count) < 0.03).astype(int)
            stream = [LogEvent("e", i + 1, int(label)) for i, label in enumerate(labels)]
            window = int(rng.integers(1, 60))
            stride = int(rng.integers(1, window + 1))
            for seq in group_windows(stream, window=window, stride=stride):
                start = seq.events[0].line_index - 1
                self.assertEqual(seq.label, int(labels[start : start + len(seq)].max()))

    def test_overlapping_windows_stop_at_the_end(self):
        found = group_windows(events(10), window=4, stride=3)
        self.assertEqual([seq.events[0].line_index for seq in found], [1, 4, 7])
        self.assertEqual(len(found[-1]), 4)

    def test_chronological_split(self):
        split = chronological_split(sequences(10), 0.8)
        self.assertEqual((len(split.train), len(split.test)), (8, 2))
        split = chronological_split(sequences(10), 0.1)
        self.assertEqual((len(split.train), len(split.test)), (1, 9))
        self.assertEqual(split.train[0].key, "s0")

    def test_split_errors(self):
        with self.assertRaises(ConfigError):
            chronological_split(sequences(1), 0.8)
        with self.assertRaises(ConfigError):
            chronological_split(sequences(10), 1.0)
        with self.assertRaises(InputError):
            chronological_split(list(reversed(sequences(3))), 0.5)


class RecordsTests(SimpleTestCase):
    def test_concat_sequence_text(self):
        seq = LogSequence("k", (LogEvent("open <*>", 1), LogEvent("close", 2)), NORMAL)
        self.assertEqual(concat_sequence_text(seq), "open <*> close")
        self.assertEqual(concat_sequence_text(LogSequence("k", (LogEvent("open", 1),), NORMAL)), "open")
        self.assertEqual(concat_sequence_text(LogSequence("k", (), NORMAL)), "")

    def test_order_key_is_first_line(self):
        seq = LogSequence("k", (LogEvent("a", 9), LogEvent("b", 4)), NORMAL)
        self.assertEqual(seq.order_key, 4)
        self.assertEqual(seq.with_templates(["x", "y"]).order_key, 4)


class BundleTests(SimpleTestCase):
    def test_prepare_and_reload(self):
        with tempfile.TemporaryDirectory() as tmp:
            log = Path(tmp) / "corpus.log"
            log.write_text("\n".join(synthesize_corpus(20, window=10, anomaly_rate=0.25, seed=3)) + "\n", encoding="utf-8")
            found, report = prepare_sequences(log, LABELED_LINES, "window", window=10)
            self.assertEqual(report.accepted, 200)
            self.assertEqual(class_balance(found), {"normal": 15, "anomalous": 5})

            write_bundle(Path(tmp) / "bundle", "corpus", found, train_ratio=0.8)
            bundle = read_bundle(Path(tmp) / "bundle")
            self.assertEqual(bundle.name, "corpus")
            self.assertEqual(bundle.sequences, found)
            self.assertEqual(len(bundle.split().train), 16)

    def test_hdfs_needs_labels_for_sessions(self):
        with self.assertRaises(ConfigError):
            prepare_sequences("/nonexistent.log", HDFS, "session")

    def test_missing_or_truncated_bundle(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(MissingArtifactError):
                read_bundle(tmp)
            write_bundle(tmp, "x", sequences(3))
            (Path(tmp) / "sequences.jsonl").unlink()
            with self.assertRaises(LoadError):
                read_bundle(tmp)


class SyntheticTests(SimpleTestCase):
    def test_corpus_plants_the_requested_anomalies(self):
        lines = synthesize_corpus(100, window=50, anomaly_rate=0.05, seed=1)
        self.assertEqual(len(lines), 5000)
        self.assertEqual(sum(line.startswith(ANOMALY_LABEL) for line in lines), 5)
        self.assertEqual(lines, synthesize_corpus(100, window=50, anomaly_rate=0.05, seed=1))

    def test_windows_fit_the_default_token_limit(self):
        with tempfile.TemporaryDirectory() as tmp:
            log = Path(tmp) / "corpus.log"
            log.write_text("\n".join(synthesize_corpus(200, window=50, anomaly_rate=0.1, seed=7)) + "\n", encoding="utf-8")
            found, _ = prepare_sequences(log, LABELED_LINES, "window", window=50)
        vocab = build_vocab(concat_sequence_text(seq) for seq in found)
        self.assertEqual(vocab.max_len, DEFAULT_MAX_LEN)
        fatal = vocab.lookup("fatal")
        for seq in found:
            text = concat_sequence_text(seq)
            self.assertLess(len(text.split()), DEFAULT_MAX_LEN, seq.key)
            encoded = encode(text, vocab, MASKED, seq.label)
            self.assertEqual(fatal in encoded.ids, seq.label == ANOMALOUS, seq.key)

    def test_normal_lines_follow_the_workflow(self):
        lines = synthesize_corpus(10, window=50, anomaly_rate=0.0, seed=4)
        counts = {}
        for line in lines:
            template = mask_parameters(line.split(" ", 1)[1])
            counts[template] = counts.get(template, 0) + 1
        self.assertEqual(len(counts), 19)
        self.assertTrue(all(len(template.split()) == 3 for template in counts))

    def test_sequences(self):
        found = synthetic_sequences(30, 10, length=3, seed=2)
        self.assertEqual(class_balance(found), {"normal": 30, "anomalous": 10})
        self.assertTrue(all(len(seq) == 3 for seq in found))

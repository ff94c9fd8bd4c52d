import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from core.exceptions import ConfigError, EncodingError, LoadError, MissingArtifactError
from tokenizer.vocabulary import AUTOREGRESSIVE, CLS, MASKED, PAD, UNK, Vocabulary, build_vocab, collate, encode


class VocabularyTests(SimpleTestCase):
    def test_frequency_then_lexicographic_order(self):
        vocab = build_vocab(["a b", "b c"])
        self.assertEqual(vocab.token_to_id, {"[PAD]": 0, "[UNK]": 1, "[CLS]": 2, "b": 3, "a": 4, "c": 5})

    def test_min_count(self):
        vocab = build_vocab(["a b", "b c"], min_count=2)
        self.assertEqual(len(vocab), 4)
        self.assertEqual(vocab.lookup("b"), 3)
        self.assertEqual(vocab.lookup("a"), UNK)

    def test_single_token_corpus(self):
        self.assertEqual(len(build_vocab(["x"])), 4)

    def test_empty_corpus(self):
        with self.assertRaises(ConfigError):
            build_vocab(["", "   "])

    def test_save_and_load(self):
        vocab = build_vocab(["open <*> close", "open file"], max_len=16)
        with tempfile.TemporaryDirectory() as tmp:
            path = vocab.save(Path(tmp) / "vocab.json")
            self.assertEqual(Vocabulary.load(path), vocab)

    def test_load_errors(self):
        with self.assertRaises(MissingArtifactError):
            Vocabulary.load("/nonexistent/vocab.json")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vocab.json"
            path.write_text(json.dumps({"[PAD]": 0, "[UNK]": 1, "[CLS]": 2}), encoding="utf-8")
            with self.assertRaises(LoadError):
                Vocabulary.load(path)
            path.write_text(json.dumps({"[PAD]": 0, "[UNK]": 1, "[CLS]": 2, "a": 7, "max_len": 8}), encoding="utf-8")
            with self.assertRaises(LoadError):
                Vocabulary.load(path)


class EncodeTests(SimpleTestCase):
    def setUp(self):
        self.vocab = build_vocab(["a b", "b c"], max_len=4)

    def test_masked_prepends_cls(self):
        item = encode("a b", self.vocab, MASKED)
        self.assertEqual(item.ids, (CLS, 4, 3))
        self.assertEqual(item.selected_index, 0)

    def test_autoregressive_selects_last_token(self):
        item = encode("a b", self.vocab, AUTOREGRESSIVE)
        self.assertEqual(item.ids, (4, 3))
        self.assertEqual(item.selected_index, 1)

    def test_out_of_vocabulary(self):
        self.assertEqual(encode("z z", self.vocab, AUTOREGRESSIVE).ids, (UNK, UNK))

    def test_truncation_keeps_prefix_and_cls(self):
        self.assertEqual(encode("a b c a b", self.vocab, MASKED).ids, (CLS, 4, 3, 5))
        item = encode("a b c a b", self.vocab, AUTOREGRESSIVE)
        self.assertEqual(item.ids, (4, 3, 5, 4))
        self.assertEqual(item.selected_index, 3)

    def test_empty_text(self):
        with self.assertRaises(EncodingError):
            encode("  ", self.vocab, MASKED)

    def test_unknown_style(self):
        with self.assertRaises(ConfigError):
            encode("a", self.vocab, "seq2seq")

    def test_collate_pads_right(self):
        batch = collate([encode("a", self.vocab, MASKED, 1), encode("a b c", self.vocab, MASKED, 0)])
        assert_array_equal(batch.ids, [[CLS, 4, PAD, PAD], [CLS, 4, 3, 5]])
        assert_array_equal(batch.mask, [[1, 1, 0, 0], [1, 1, 1, 1]])
        assert_array_equal(batch.positions, [0, 0])
        assert_array_equal(batch.labels, [1, 0])

    def test_collate_errors(self):
        with self.assertRaises(EncodingError):
            collate([])
        with self.assertRaises(EncodingError):
            collate([encode("a b", self.vocab, MASKED)], length=2)

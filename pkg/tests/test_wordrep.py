import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semrec.text import BOUNDARY, build_vocab, context_windows
from semrec.wordrep import (
    PretrainedRepr,
    PretrainedTable,
    TriLetterRepr,
    embed_window,
    featurize,
    load_pretrained,
    save_pretrained,
)


def write(tmp_path, text):
    p = tmp_path / "vec.txt"
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadPretrained:
    def test_direct_parse(self, tmp_path):
        t = load_pretrained(write(tmp_path, "2 3\ncat 1 0 0\ndog 0 1 0\n"))
        assert t.dim == 3 and len(t) == 2
        np.testing.assert_array_equal(t.get("cat"), [1, 0, 0])
        np.testing.assert_array_equal(t.get("dog"), [0, 1, 0])

    def test_row_length_error(self, tmp_path):
        with pytest.raises(ValueError, match="row length 3 ≠ dim 2 at line 2"):
            load_pretrained(write(tmp_path, "1 2\ncat 1 0 0"))

    def test_malformed_header(self, tmp_path):
        with pytest.raises(ValueError, match="malformed header at line 1"):
            load_pretrained(write(tmp_path, "two 3\ncat 1 0 0\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(ValueError, match="non-numeric field at line 3"):
            load_pretrained(write(tmp_path, "2 2\na 1 2\nb 1 x\n"))

    def test_non_finite(self, tmp_path):
        with pytest.raises(ValueError, match="non-finite value at line 2"):
            load_pretrained(write(tmp_path, "1 2\na 1 nan\n"))

    def test_count_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="declares 3 rows"):
            load_pretrained(write(tmp_path, "3 1\na 1\nb 2\n"))

    def test_duplicate_last_wins(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            t = load_pretrained(write(tmp_path, "2 1\na 1\na 5\n"))
        assert t.get("a")[0] == 5.0 and len(t) == 1
        assert "duplicate" in caplog.text

    def test_200_dim(self, tmp_path):
        rng = np.random.default_rng(0)
        table = PretrainedTable(200, {f"w{i}": rng.standard_normal(200) for i in range(4)})
        p = tmp_path / "v200.txt"
        save_pretrained(table, p)
        back = load_pretrained(p)
        assert back.dim == 200
        np.testing.assert_array_equal(back.matrix, table.matrix)

    def test_bad_dim(self):
        with pytest.raises(ValueError):
            PretrainedTable(0)


class TestEmbedWord:
    def test_triletter(self):
        r = TriLetterRepr(build_vocab(["cat"]))
        np.testing.assert_array_equal(r.embed_word("cat"), [1, 1, 1])
        assert r.word_dim == 3

    def test_triletter_oov_trigrams_counted(self):
        r = TriLetterRepr(build_vocab(["cat"]))
        np.testing.assert_array_equal(r.embed_word("cab"), [1, 0, 0])
        assert r.oov_tri_letters == 2

    def test_pretrained_lookup(self):
        r = PretrainedRepr(PretrainedTable(3, {"cat": [1, 0, 0]}))
        np.testing.assert_array_equal(r.embed_word("cat"), [1, 0, 0])
        assert r.oov_count == 0

    def test_pretrained_oov_zero(self):
        r = PretrainedRepr(PretrainedTable(3, {"cat": [1, 0, 0]}))
        np.testing.assert_array_equal(r.embed_word("zebra"), np.zeros(3))
        assert r.oov_count == 1

    def test_random_policy_is_deterministic(self):
        table = PretrainedTable(4, {"cat": [1, 0, 0, 0]})
        a = PretrainedRepr(table, "random").embed_word("zebra")
        b = PretrainedRepr(table, "random").embed_word("zebra")
        np.testing.assert_array_equal(a, b)
        assert np.any(a != 0)
        assert not np.array_equal(a, PretrainedRepr(table, "random").embed_word("okapi"))

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            PretrainedRepr(PretrainedTable(2), "mean")

    def test_boundary_is_zero_and_not_oov(self):
        r = PretrainedRepr(PretrainedTable(2, {"a": [1, 1]}))
        np.testing.assert_array_equal(r.embed_word(BOUNDARY), [0, 0])
        assert r.oov_count == 0

    def test_oov_counter_under_threads(self):
        r = PretrainedRepr(PretrainedTable(2, {"a": [1, 1]}))
        words = [f"x{i % 7}" for i in range(4000)]
        with ThreadPoolExecutor(8) as pool:
            list(pool.map(r.embed_word, words))
        assert r.oov_count == 4000


class TestEmbedWindow:
    @pytest.fixture
    def repr2(self):
        return PretrainedRepr(PretrainedTable(2, {"a": [1, 0], "b": [0, 1], "c": [1, 1]}))

    def test_concatenation(self, repr2):
        np.testing.assert_array_equal(embed_window(("a", "b", "c"), repr2), [1, 0, 0, 1, 1, 1])

    def test_boundary_zeros(self, repr2):
        np.testing.assert_array_equal(embed_window((BOUNDARY, "b", BOUNDARY), repr2), [0, 0, 0, 1, 0, 0])

    def test_k0_identity(self, repr2):
        np.testing.assert_array_equal(embed_window(("b",), repr2), repr2.embed_word("b"))

    @given(st.lists(st.sampled_from(["a", "b", "c", "zz"]), min_size=1, max_size=12), st.integers(0, 3))
    def test_featurize_matches_dense_oracle(self, toks, k):
        r = PretrainedRepr(PretrainedTable(2, {"a": [1, 0], "b": [0, 1], "c": [1, 1]}))
        feats = featurize(toks, r, k)
        oracle = np.array([embed_window(w, r) for w in context_windows(toks, k)])
        assert oracle.shape[1] == (2 * k + 1) * r.word_dim == feats.width
        np.testing.assert_array_equal(feats.dense(), oracle)

    def test_featurize_triletter(self):
        words = ["ram", "loves", "playing", "cricket"]
        r = TriLetterRepr(build_vocab(words))
        feats = featurize(words, r, 1)
        oracle = np.array([embed_window(w, r) for w in context_windows(words, 1)])
        np.testing.assert_array_equal(feats.dense(), oracle)
        assert feats.n_windows == 2

import json
from collections import Counter
from itertools import product

import pytest
from hypothesis import given, strategies as st

from semrec.text import (
    BOUNDARY,
    CollisionReport,
    TriLetterVocab,
    build_vocab,
    collision_report,
    context_windows,
    hash_word,
    read_corpus_jsonl,
    tokenize,
    tri_letters,
)

WORDS = st.text(alphabet="abcdefgxyz019", min_size=1, max_size=12)


def scan_tokens(text):
    """Character-scan oracle for the tokenizer."""
    out, cur = [], []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


class TestTokenize:
    def test_example_sentence(self):
        assert tokenize("Ram loves playing cricket") == ["ram", "loves", "playing", "cricket"]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_and_digits(self):
        assert tokenize("C-DSSM, 2016!") == ["c", "dssm", "2016"] == scan_tokens("C-DSSM, 2016!")

    def test_underscore_is_a_separator(self):
        assert tokenize("snake_case") == ["snake", "case"]

    @given(st.text(alphabet=st.sampled_from("abcXYZ019 -_,.!?\téßÅ\n"), max_size=40))
    def test_matches_scan_oracle(self, text):
        assert tokenize(text) == scan_tokens(text)


class TestTriLetters:
    def test_cat(self):
        assert tri_letters("cat") == ["#ca", "cat", "at#"]

    def test_single_char(self):
        assert tri_letters("a") == ["#a#"]

    def test_dssm(self):
        assert tri_letters("dssm") == ["#ds", "dss", "ssm", "sm#"]

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="empty token"):
            tri_letters("")

    @given(WORDS)
    def test_count_and_shape(self, w):
        tris = tri_letters(w)
        assert len(tris) == len(w)
        for t in tris:
            assert len(t) == 3
            assert "#" not in t[1]


class TestBuildVocab:
    def test_cat(self):
        assert build_vocab(["cat"]).entries == {"#ca": 0, "at#": 1, "cat": 2}

    def test_empty(self):
        assert len(build_vocab([])) == 0

    def test_duplicates_ignored(self):
        assert build_vocab(["cat", "cat"]) == build_vocab(["cat"])

    def test_round_trip_list(self):
        v = build_vocab(["ram", "loves", "cricket"])
        assert TriLetterVocab.from_list(v.to_list()) == v

    def test_from_list_rejects_unsorted(self):
        with pytest.raises(ValueError):
            TriLetterVocab.from_list(["cat", "#ca"])


class TestHashWord:
    def test_cat(self):
        assert hash_word("cat", build_vocab(["cat"])) == {0: 1, 1: 1, 2: 1}

    def test_empty_vocab(self):
        assert hash_word("cat", build_vocab([])) == {}

    def test_aaa(self):
        vocab = TriLetterVocab(["#aa", "aaa", "aa#"])
        assert hash_word("aaa", vocab) == {0: 1, 1: 1, 2: 1}

    def test_repeated_trigram_counts(self):
        # "#aaaa#" has windows #aa, aaa, aaa, aa#
        counts = hash_word("aaaa", build_vocab(["aaaa"]))
        assert sorted(counts.values()) == [1, 1, 2]

    def test_empty_word_raises(self):
        with pytest.raises(ValueError):
            hash_word("", build_vocab(["cat"]))

    @given(st.lists(WORDS, min_size=1, max_size=5))
    def test_full_vocab_sum_is_length(self, words):
        vocab = build_vocab(words)
        for w in words:
            counts = hash_word(w, vocab)
            assert sum(counts.values()) == len(w)
            assert all(c >= 1 for c in counts.values())
            assert counts == hash_word(w, vocab)


def find_collision_pair():
    """Brute-force two distinct words with the same tri-letter multiset."""
    seen = {}
    for n in range(1, 9):
        for chars in product("ab", repeat=n):
            w = "".join(chars)
            key = frozenset(Counter(tri_letters(w)).items())
            if key in seen:
                return seen[key], w
            seen[key] = w
    raise AssertionError("no colliding pair found")


class TestCollisionReport:
    def test_disjoint(self):
        words = ["cat", "dog"]
        assert collision_report(words, build_vocab(words)) == CollisionReport(2, 2, 0)

    def test_empty(self):
        assert collision_report([], build_vocab([])) == CollisionReport(0, 0, 0)

    def test_constructed_collision(self):
        a, b = find_collision_pair()
        assert a != b
        assert Counter(tri_letters(a)) == Counter(tri_letters(b))
        report = collision_report([a, b], build_vocab([a, b]))
        assert report.collisions == 1
        assert report.unique_hashed_vectors == 1

    @given(st.lists(WORDS, max_size=20, unique=True))
    def test_unique_plus_collisions(self, words):
        r = collision_report(words, build_vocab(words[: len(words) // 2]))
        assert r.unique_hashed_vectors + r.collisions == r.vocab_size == len(words)
        assert r.collisions >= 0


class TestContextWindows:
    def test_example_sentence(self):
        toks = ["ram", "loves", "playing", "cricket"]
        assert context_windows(toks, 1) == [("ram", "loves", "playing"), ("loves", "playing", "cricket")]

    def test_k0_identity(self):
        assert context_windows(["hello"], 0) == [("hello",)]

    def test_short_sentence_padded(self):
        assert context_windows(["hi"], 1) == [(BOUNDARY, "hi", BOUNDARY)]

    def test_short_sentence_centered(self):
        assert context_windows(["a", "b"], 2) == [(BOUNDARY, "a", "b", BOUNDARY, BOUNDARY)]

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="empty sentence"):
            context_windows([], 1)

    def test_negative_k(self):
        with pytest.raises(ValueError):
            context_windows(["a"], -1)

    def test_boundary_is_not_a_token(self):
        assert tokenize(BOUNDARY) != [BOUNDARY]

    @given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=30), st.integers(0, 4))
    def test_window_count_and_width(self, toks, k):
        wins = context_windows(toks, k)
        s = len(toks)
        assert len(wins) == (s - 2 * k if s >= 2 * k + 1 else 1)
        assert all(len(w) == 2 * k + 1 for w in wins)


class TestReadCorpus:
    def test_reads_in_order(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text("\n".join(json.dumps({"doc_id": d, "text": t}) for d, t in [("b", "x y"), ("a", "z")]) + "\n")
        assert list(read_corpus_jsonl(p).items()) == [("b", "x y"), ("a", "z")]

    def test_bad_line_reports_line_number(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"doc_id": "a", "text": "x"}\nnot json\n')
        with pytest.raises(ValueError, match="line 2"):
            read_corpus_jsonl(p)

    def test_duplicate_doc_id(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"doc_id": "a", "text": "x"}\n{"doc_id": "a", "text": "y"}\n')
        with pytest.raises(ValueError, match="duplicate doc_id"):
            read_corpus_jsonl(p)

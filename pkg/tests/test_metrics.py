from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autosign.errors import UndefinedWERError
from autosign.metrics import (MATCH, SUB, corpus_wer, edit_alignment, error_report, error_table,
                              sentence_mean_wer, wer)
from autosign.pose_data import Vocabulary

INSERTION = ("QUESTION HE", "INQUIRY QUESTION HE")
DELETION = ("QUESTION HE FRIEND SCHOOL", "QUESTION HE SCHOOL")
SUBSTITUTION = ("HE FRIEND SCHOOL", "HE FRIEND HOUSE")


def naive_distance(a, b):
    """Plain recursive Levenshtein, memoised on suffix offsets."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(d(i + 1, j + 1) + (a[i] != b[j]), d(i + 1, j) + 1, d(i, j + 1) + 1)

    return d(0, 0)


def test_worked_error_cases():
    s = edit_alignment(*INSERTION)
    assert (s.n_ins, s.n_sub, s.n_del) == (1, 0, 0)
    s = edit_alignment(*DELETION)
    assert (s.n_ins, s.n_sub, s.n_del) == (0, 0, 1)
    s = edit_alignment(*SUBSTITUTION)
    assert (s.n_ins, s.n_sub, s.n_del) == (0, 1, 0)
    assert wer(*INSERTION) == 0.5
    assert wer(*DELETION) == 0.25
    assert wer(*SUBSTITUTION) == 1 / 3


def test_identity_and_empty_hyp():
    s = edit_alignment("A B C", "A B C")
    assert s.errors == 0 and all(op == MATCH for op, _, _ in s.alignment)
    assert wer("A B C", "") == 1.0


def test_empty_reference_raises():
    with pytest.raises(UndefinedWERError):
        wer("", "A")
    with pytest.raises(UndefinedWERError):
        corpus_wer([])
    with pytest.raises(UndefinedWERError):
        sentence_mean_wer([])


def test_tie_break_prefers_substitution_over_indel():
    s = edit_alignment("A B", "A C")
    assert [op for op, _, _ in s.alignment] == [MATCH, SUB]


def test_corpus_pooling():
    pairs = [("A B", "A C"), ("C D", "C D")]
    assert corpus_wer(pairs) == 0.25
    assert sentence_mean_wer(pairs) == 0.25
    assert corpus_wer([("A B C", "A")]) == wer("A B C", "A")
    assert corpus_wer(pairs * 2) == corpus_wer(pairs)
    # pooled differs from per-sentence mean when lengths differ
    uneven = [("A", "B"), ("A B C D", "A B C D")]
    assert corpus_wer(uneven) == 0.2 and sentence_mean_wer(uneven) == 0.5


def test_matches_naive_oracle_1000_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        r = [str(t) for t in rng.integers(0, 5, size=int(rng.integers(1, 9)))]
        h = [str(t) for t in rng.integers(0, 5, size=int(rng.integers(0, 9)))]
        s = edit_alignment(r, h)
        assert s.errors == naive_distance(r, h)
        assert s.n_sub + s.n_del <= s.ref_len == len(r)


words = st.lists(st.sampled_from("ABCDE"), min_size=1, max_size=8)


@given(words, words, words)
@settings(max_examples=200, deadline=None)
def test_triangle_inequality(a, b, c):
    d = lambda x, y: edit_alignment(x, y).errors
    assert d(a, c) <= d(a, b) + d(b, c)


@given(words, st.lists(st.sampled_from("ABCDE"), max_size=8))
@settings(max_examples=200, deadline=None)
def test_alignment_reconstructs_both_sides(r, h):
    s = edit_alignment(r, h)
    assert [x for _, x, _ in s.alignment if x is not None] == r
    assert [y for _, _, y in s.alignment if y is not None] == h
    assert s.wer * s.ref_len == s.errors


@given(st.lists(st.tuples(words, st.lists(st.sampled_from("ABCDE"), max_size=8)), min_size=1, max_size=6),
       st.randoms())
@settings(max_examples=100, deadline=None)
def test_corpus_wer_order_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert corpus_wer(pairs) == corpus_wer(shuffled)


def test_error_report_tags_each_case_once():
    pairs = [("ins", *INSERTION), ("del", *DELETION), ("sub", *SUBSTITUTION)]
    rep = error_report(pairs)
    assert "# ins\tS=0\tI=1\tD=0" in rep
    assert "# del\tS=0\tI=0\tD=1" in rep
    assert "# sub\tS=1\tI=0\tD=0" in rep
    assert "SCHOOL -> HOUSE\t1" in rep
    assert rep == error_report(pairs)


def test_error_report_all_correct():
    rep = error_report([("a", "X Y", "X Y"), ("b", "Z", "Z")])
    assert "substitutions\t0" in rep and "insertions\t0" in rep and "deletions\t0" in rep
    assert "wer_pooled\t0.000000" in rep


def test_error_table_with_vocab_ids():
    vocab = Vocabulary(sorted(["HE", "SCHOOL", "HOUSE", "FRIEND"]))
    ref = vocab.encode("HE FRIEND SCHOOL")
    hyp = vocab.encode("HE FRIEND HOUSE")
    tab = error_table([("s0", ref, hyp)], vocab)
    assert tab.splitlines() == ["sample_id\tref\thyp\tsub\tins\tdel",
                                "s0\tHE FRIEND SCHOOL\tHE FRIEND HOUSE\t1\t0\t0"]

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tokenleak.metrics import (
    EvalResult,
    HashingEmbedder,
    TermFrequencyEmbedder,
    Thresholds,
    cosine_phi,
    edit_distance_norm,
    evaluate_batch,
    evaluate_pair,
    levenshtein,
    rouge1_precision,
    rougeL,
    summarize,
    thresholds_from_mapping,
    words,
)

TRADE = "As an AI language model, I don't have access to the latest trade statistics,"
CRIME = TRADE.replace("trade", "crime")


def test_trade_crime_pair():
    # three substitutions over 76 characters; 13 of 14 words shared
    assert edit_distance_norm(CRIME, TRADE) == pytest.approx(3 / 76)
    assert rouge1_precision(CRIME, TRADE) == pytest.approx(13 / 14)
    assert round(edit_distance_norm(CRIME, TRADE), 2) == 0.04
    assert round(rouge1_precision(CRIME, TRADE), 2) == 0.93


def test_edit_distance_trivial():
    assert edit_distance_norm("abc", "abc") == 0.0
    assert edit_distance_norm("abc", "") == 1.0
    assert edit_distance_norm("", "") == 0.0
    assert levenshtein("kitten", "sitting") == 3


def test_words():
    assert words("Hello, World! don't") == ["hello", "world", "dont"]


def test_rouge_trivial():
    s = "The cat sat on the mat."
    assert rouge1_precision(s, s) == rougeL(s, s) == 1.0
    assert rouge1_precision("dog runs", "cat sits") == rougeL("dog runs", "cat sits") == 0.0
    assert rouge1_precision("", s) == 0.0


def test_rougeL_order_matters():
    assert rouge1_precision("mat the on sat cat", "cat sat on the mat") == 1.0
    assert rougeL("mat the on sat cat", "cat sat on the mat") == pytest.approx(1 / 5)


def test_phi_trivial():
    assert cosine_phi("a b c", "a b c") == pytest.approx(1.0)
    assert cosine_phi("dog runs", "cat sits") == 0.0
    assert cosine_phi("", "cat") == 0.0


def test_embedders():
    tf = TermFrequencyEmbedder().embed(["a b a", "b"])
    assert tf.tolist() == [[2.0, 1.0], [0.0, 1.0]]
    h = HashingEmbedder(16).embed(["a b a"])
    assert h.shape == (1, 16) and h.sum() == 3
    with pytest.raises(ValueError):
        HashingEmbedder(0)


texts = st.text(alphabet="ab c.", max_size=12)


@given(texts, texts)
def test_ed_symmetric(a, b):
    assert edit_distance_norm(a, b) == edit_distance_norm(b, a)
    assert 0.0 <= edit_distance_norm(a, b) <= 1.0


@given(texts, texts, texts)
def test_levenshtein_triangle(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


@given(st.text(alphabet="abc de", max_size=30), st.text(alphabet="xyz ", max_size=20))
def test_rouge1_superset(cand, extra):
    if words(cand):
        assert rouge1_precision(cand, cand) == 1.0
        assert rouge1_precision(cand, cand + " " + extra) == 1.0


@given(st.text(alphabet="abc de", min_size=1, max_size=30))
def test_phi_self(text):
    if words(text):
        for emb in (TermFrequencyEmbedder(), HashingEmbedder()):
            assert cosine_phi(text, text, emb) == pytest.approx(1.0)


def test_success_flag():
    r = evaluate_pair("a b", "a b")
    assert isinstance(r, EvalResult) and r.success == (r.phi > 0.5)
    assert not evaluate_pair("a", "b").success


def test_batch_identical_and_disjoint():
    same = evaluate_batch([("the cat", "the cat")] * 4)
    assert all(v == 100.0 for v in same.columns.values())
    assert evaluate_batch([("dog", "cat")] * 3).columns["ASR"] == 0.0
    with pytest.raises(ValueError):
        evaluate_batch([])


def test_batch_mixed_counts():
    pairs = [
        ("the cat sat", "the cat sat"),       # exact
        ("the cat sat", "the cat sits"),      # partial
        ("a b c d e f g h i j", "a b c d e f g h i k"),
        ("dog", "cat"),                       # miss
    ]
    s = evaluate_batch(pairs)
    # hand counts: phi > 0.5 for the first three; only the first is exact
    assert s.columns["ASR"] == 75.0
    assert s.columns["phi=1.0"] == 25.0
    assert s.columns["ED=0.0"] == 25.0
    assert s.columns["R1>=0.9"] == 50.0
    assert s.columns["ED<=0.1"] == 50.0
    assert s.n == 4
    assert list(s.columns) == [
        "ASR", "phi>0.9", "phi=1.0", "R1>=0.9", "R1=1.0", "RL>=0.9", "RL=1.0", "ED<=0.1", "ED=0.0",
    ]
    assert "mean_phi" in s.render()
    json.dumps(s.as_dict())


def test_micro_vs_macro_ed():
    results = [evaluate_pair("aaaa", "aaab"), evaluate_pair("", "bbbbbbbbbbbb")]
    s = summarize(results)
    assert s.mean_ed == pytest.approx((0.25 + 1.0) / 2)
    assert s.micro_ed == pytest.approx(13 / 16)


def test_thresholds_mapping():
    th = thresholds_from_mapping({"phi_high": "0.8"})
    assert th == Thresholds(phi_high=0.8)
    assert "phi>0.8" in summarize([evaluate_pair("a", "a")], th).columns
    np.testing.assert_allclose(th.phi_success, 0.5)

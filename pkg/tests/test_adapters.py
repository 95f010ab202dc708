import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tokenleak.adapters import (
    ExternalEmbedder,
    ExternalReconstructor,
    ProtocolError,
    embedder_from_spec,
    escape,
    format_candidates,
    format_request_first,
    format_request_inner,
    handle_request,
    parse_candidate,
    parse_lengths,
    unescape,
)
from tokenleak.metrics import HashingEmbedder, TermFrequencyEmbedder
from tokenleak.reconstruct import (
    NGramReconstructor,
    OracleReconstructor,
    ScoredCandidate,
    reconstruct_response,
    save_models,
    train_ngram,
)
from tokenleak.tokenizer import token_lengths

RASH = "I need more details about your rash."
FOLLOW = "Where is it, and what does it look like?"


@given(st.text())
def test_escape_round_trip(text):
    esc = escape(text)
    assert "\n" not in esc and "\r" not in esc and "|" not in esc
    assert unescape(esc) == text


def test_request_lines():
    assert format_request_first([5, 5, 1], hidden_prefix=2) == "FIRST 0 0 5 5 1"
    assert format_request_inner([4, 1], "a|b\nc") == "INNER 4 1 | a\\pb\\nc"
    assert parse_lengths("0 0 5 5 1") == ([5, 5, 1], 2)
    with pytest.raises(ProtocolError):
        parse_lengths("5 x")
    with pytest.raises(ProtocolError):
        parse_lengths("5 0 3")


def test_candidate_lines(vocab):
    lines = format_candidates([ScoredCandidate("Hi\nthere", -1.5)])
    assert lines == ["CAND -1.5 Hi\\nthere", "END"]
    got = parse_candidate(lines[0], vocab, token_lengths("Hi\nthere", vocab), 0)
    assert got == ScoredCandidate("Hi\nthere", -1.5, True)
    assert not parse_candidate("CAND 0.0 Hi", vocab, [9], 0).exact_length_match
    with pytest.raises(ProtocolError):
        parse_candidate("WHAT 1 x", None, [1], 0)


def test_handle_request_oracle(vocab):
    rec = OracleReconstructor([RASH], vocab)
    T = token_lengths(RASH, vocab)
    assert handle_request("FIRST " + " ".join(map(str, T)), rec) == [f"CAND 0.0 {RASH}", "END"]
    assert handle_request("BOGUS 1", rec)[0].startswith("ERR")
    assert handle_request("INNER 0 3 | x", rec)[0].startswith("ERR")
    vec = handle_request("EMBED a b a", embedder=HashingEmbedder(8))
    assert vec[0].startswith("VEC ") and len(vec[0].split()) == 9


@pytest.fixture
def model_file(tmp_path, vocab):
    first = train_ngram([RASH], vocab)
    inner = train_ngram([(RASH, FOLLOW)], vocab)
    path = tmp_path / "model.json"
    save_models(path, first, inner)
    return path


def test_external_matches_inprocess(model_file, vocab):
    cmd = [sys.executable, "-m", "tokenleak.adapters", "ngram", str(model_file), "--k", "2"]
    local = NGramReconstructor.train([RASH], vocab, k=2)
    T = token_lengths(RASH, vocab)
    with ExternalReconstructor(cmd, vocab) as ext:
        first = ext.reconstruct_first(T)
        assert first[0].text == RASH and first[0].exact_length_match
        assert first[0].log_score == pytest.approx(local.reconstruct_first(T)[0].log_score)
        inner = ext.reconstruct_inner(token_lengths(FOLLOW, vocab), RASH)
        assert inner[0].text == FOLLOW
        text, _ = reconstruct_response(ext, [T, token_lengths(FOLLOW, vocab)])
        assert text == RASH + FOLLOW


def test_external_error_surfaces(model_file, vocab):
    cmd = [sys.executable, "-m", "tokenleak.adapters", "ngram", str(model_file)]
    with ExternalReconstructor(cmd, vocab) as ext:
        with pytest.raises(ProtocolError):
            ext.send("NOPE")
            ext.recv()
        # the server keeps going after an error
        assert ext.reconstruct_first(token_lengths(RASH, vocab))[0].text == RASH


def test_external_process_dies():
    ext = ExternalReconstructor([sys.executable, "-c", "pass"])
    ext.proc.wait()
    with pytest.raises(ProtocolError):
        ext.reconstruct_first([3])
    ext.close()


def test_external_embedder():
    cmd = [sys.executable, "-m", "tokenleak.adapters", "hash-embed", "--dim", "32"]
    texts = ["the cat sat", "a | b\nc"]
    with ExternalEmbedder(cmd) as emb:
        got = emb.embed(texts)
    assert np.array_equal(got, HashingEmbedder(32).embed(texts))


def test_embedder_specs():
    assert isinstance(embedder_from_spec(None), TermFrequencyEmbedder)
    assert isinstance(embedder_from_spec("hash"), HashingEmbedder)
    with pytest.raises(ValueError):
        embedder_from_spec("bert")


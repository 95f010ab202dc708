import pytest
from hypothesis import given
from hypothesis import strategies as st

from tokenleak.tokenizer import (
    PUNCTUATION,
    SPACE_MARK,
    TokenSequence,
    Vocabulary,
    lengths_of,
    load_vocabulary,
    save_vocabulary,
    token_lengths,
    tokenize,
)


def test_highlighted_example(vocab):
    seq = tokenize("Oh no! I'm sorry to hear that. Try applying some cream.", vocab)
    assert seq.tokens == ("Oh", " no", "!", " I", "'m", " sorry", " to", " hear", " that", ".",
                          " Try", " applying", " some", " cream", ".")
    assert list(seq.lengths) == [2, 3, 1, 2, 2, 6, 3, 5, 5, 1, 4, 9, 5, 6, 1]


def test_first_segment_example(vocab):
    assert token_lengths("I need more details about your rash.", vocab) == [1, 5, 5, 8, 6, 5, 5, 1]


def test_inner_segment_example(vocab):
    assert token_lengths("Where is it, and what does it look like?", vocab) == [5, 3, 3, 1, 4, 5, 5, 3, 5, 5, 1]


def test_empty(vocab):
    seq = tokenize("", vocab)
    assert seq.tokens == () and lengths_of(seq) == []


def test_lengths_of_trivial():
    assert lengths_of(TokenSequence(("Hi", "!"), (2, 1))) == [2, 1]


def test_punctuation_always_present():
    v = Vocabulary(frozenset({" cat"}))
    assert PUNCTUATION <= v.tokens


def test_empty_token_rejected():
    with pytest.raises(ValueError):
        Vocabulary(frozenset({""}))


def test_fallback_is_per_character():
    v = Vocabulary(frozenset({" cat"}))
    assert tokenize("zq cat", v).tokens == ("z", "q", " cat")


def test_longest_match_wins():
    v = Vocabulary(frozenset({" car", " carpet", " pet"}))
    assert tokenize(" carpet", v).tokens == (" carpet",)


def test_list_opener_tokens(vocab):
    # ":\n\n" then the item number then "."
    assert token_lengths("tips:\n\n1. Sleep", vocab)[1:4] == [3, 1, 1]


def test_vocab_file_round_trip(tmp_path):
    v = Vocabulary(frozenset({" hello", "world", "\n\n", ":\n"}), "x")
    p = tmp_path / "v.txt"
    save_vocabulary(v, p)
    text = p.read_text(encoding="utf-8")
    assert f"{SPACE_MARK}hello" in text.splitlines()
    assert load_vocabulary(p).tokens == v.tokens


def test_vocab_file_space_mark(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text(f"{SPACE_MARK}rash\nrash\n", encoding="utf-8")
    v = load_vocabulary(p)
    assert " rash" in v and "rash" in v


@given(st.text(max_size=200))
def test_detokenization_identity(vocab, s):
    seq = tokenize(s, vocab)
    assert "".join(seq.tokens) == s
    assert sum(seq.lengths) == len(s)
    assert all(t >= 1 for t in seq.lengths)
    assert all(len(tok) == n for tok, n in zip(seq.tokens, seq.lengths))


@given(st.text(alphabet=" abcdefghijklmnopqrstuvwxyzIA.,!?'\n", max_size=120))
def test_single_char_tokens_are_punctuation_or_unmatched(vocab, s):
    seq = tokenize(s, vocab)
    pos = 0
    for tok in seq.tokens:
        if len(tok) == 1 and tok not in PUNCTUATION:
            # no longer entry matched here, so greedy had to emit one character
            assert not any(s.startswith(v, pos) for v in vocab.tokens if len(v) > 1)
        pos += len(tok)


def test_corpus_single_char_tokens(vocab):
    from tokenleak.corpus import synthetic_corpus

    singles = set()
    for text in synthetic_corpus(200, seed=1) + synthetic_corpus(100, seed=1, style="generic"):
        singles |= {t for t in tokenize(text, vocab).tokens if len(t) == 1}
    assert singles - PUNCTUATION <= {"I"} | set("0123456789")

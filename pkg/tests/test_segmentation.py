import pytest
from hypothesis import given
from hypothesis import strategies as st

from tokenleak.segmentation import (
    LIST_OPENER,
    MIN_SEGMENT_TOKENS,
    BoundaryKind,
    format_segments,
    parse_segments,
    segment,
    segment_text,
)
from tokenleak.tokenizer import token_lengths


def reference_segments(lengths, min_tokens=10):
    """Straight reading of the rules: cut after each run of 1s, hand a
    trailing 3,1,1 to the next piece, merge short pieces forward until none
    is left, and fold a short tail back."""
    n = len(lengths)
    if not n:
        return []
    cut_at = [i + 1 for i in range(n) if lengths[i] == 1 and (i + 1 == n or lengths[i + 1] != 1)]
    edges = [0] + [c for c in cut_at if c < n] + [n]
    pieces = [list(lengths[a:b]) for a, b in zip(edges, edges[1:])]
    for i in range(len(pieces) - 1):
        if pieces[i][-3:] == [3, 1, 1]:
            pieces[i + 1] = pieces[i][-3:] + pieces[i + 1]
            pieces[i] = pieces[i][:-3]
    pieces = [p for p in pieces if p]
    changed = True
    while changed:
        changed = False
        for i in range(len(pieces) - 1):
            if len(pieces[i]) < min_tokens:
                pieces[i:i + 2] = [pieces[i] + pieces[i + 1]]
                changed = True
                break
    if len(pieces) > 1 and len(pieces[-1]) < min_tokens:
        pieces[-2:] = [pieces[-2] + pieces[-1]]
    return [tuple(p) for p in pieces]


lengths_strategy = st.lists(
    st.one_of(st.just(1), st.just(1), st.just(3), st.integers(1, 12)), max_size=90
)


def test_highlighted_sentence_is_one_segment():
    L = [2, 3, 1, 2, 2, 6, 3, 5, 5, 1, 4, 9, 5, 6, 1]
    assert segment(L).segments == (tuple(L),)
    assert reference_segments(L) == [tuple(L)]


def test_single_split_in_25():
    L = [5] * 12 + [1] + [5] * 12
    segs = segment(L)
    assert [len(s) for s in segs.segments] == [13, 12]
    assert segs.boundary_kinds == (BoundaryKind.PUNCTUATION,)


def test_list_opener_moves_forward():
    head = [5] * 11 + list(LIST_OPENER)
    item = [6, 5, 4, 7, 2, 5, 3, 4, 5, 6, 1]
    segs = segment(head + item)
    assert segs.segments == (tuple([5] * 11), tuple(list(LIST_OPENER) + item))
    assert segs.boundary_kinds == (BoundaryKind.LIST_ITEM,)


def test_forced_merge_kind():
    L = [4, 4, 1] + [5] * 10 + [1] + [6] * 10 + [1]
    segs = segment(L)
    assert [len(s) for s in segs.segments] == [14, 11]
    assert segs.boundary_kinds == (BoundaryKind.FORCED_MERGE,)


def test_short_tail_merges_back():
    L = [5] * 11 + [1] + [4, 4, 1]
    assert segment(L).segments == (tuple(L),)


def test_empty_and_invalid():
    assert segment([]).segments == ()
    with pytest.raises(ValueError):
        segment([3, 0, 2])


@given(lengths_strategy)
def test_matches_reference(L):
    assert list(segment(L).segments) == reference_segments(L)


@given(lengths_strategy)
def test_lossless(L):
    assert segment(L).flatten() == L


@given(lengths_strategy)
def test_min_size_except_single(L):
    segs = segment(L).segments
    if len(segs) > 1:
        assert all(len(s) >= MIN_SEGMENT_TOKENS for s in segs)


@given(lengths_strategy)
def test_boundaries_follow_ones_or_openers(L):
    segs = segment(L)
    for cut in segs.cut_points():
        after_one = L[cut - 1] == 1 and (cut == len(L) or L[cut] != 1)
        before_opener = tuple(L[cut:cut + 3]) == LIST_OPENER and L[cut - 1] != 1
        assert after_one or before_opener


@given(lengths_strategy)
def test_no_segment_ends_with_opener(L):
    segs = segment(L).segments
    assert all(s[-3:] != LIST_OPENER for s in segs[:-1])


def test_segment_text_examples(vocab):
    s = "I need more details about your rash."
    assert segment_text(s, vocab) == [s]
    a = "The old museum in Paris was opened last year after many long months."
    b = " Officials in Berlin approved a new station near the river this week."
    assert segment_text(a + b, vocab) == [a, b]


def test_segment_text_list(vocab):
    text = ("Certainly! Here are some practical tips for improving your sleep quality:\n\n"
            "1. Track your routine: It is useful to review your habits every evening.\n\n"
            "2. Limit your screen time: A simple way to stay focused is to plan your tasks.")
    segs = segment_text(text, vocab)
    assert segs[1].startswith(":\n\n1.")
    assert "".join(segs) == text


@given(st.text(alphabet="abc de.fg,!\n:", max_size=200))
def test_segment_text_agrees(vocab, text):
    pieces = segment_text(text, vocab)
    assert "".join(pieces) == text
    expect = segment(token_lengths(text, vocab)).segments
    # each text piece tokenizes, in place, to its length segment
    pos = 0
    flat = token_lengths(text, vocab)
    for piece, seg in zip(pieces, expect):
        assert tuple(flat[pos:pos + len(seg)]) == seg
        assert sum(seg) == len(piece)
        pos += len(seg)


def test_segments_file_round_trip():
    segs = segment([5] * 12 + [1] + [5] * 12)
    text = format_segments(segs, "r1")
    assert text.splitlines()[1] == " ".join(["5"] * 12 + ["1"])
    assert parse_segments(text) == {"r1": list(segs.segments)}

"""Split a token-length sequence into sentence-like segments.

Length-1 tokens are almost always punctuation (words carry a leading space,
so even "a" is two characters), which makes them usable as sentence
boundaries without knowing which punctuation mark they are.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .tokenizer import Vocabulary, tokenize

MIN_SEGMENT_TOKENS = 10
LIST_OPENER = (3, 1, 1)  # ":\n\n" "1" "."


class BoundaryKind(enum.Enum):
    PUNCTUATION = "punctuation"
    LIST_ITEM = "list_item"
    FORCED_MERGE = "forced_merge"


@dataclass(frozen=True)
class SegmentedSequence:
    segments: tuple[tuple[int, ...], ...]
    boundary_kinds: tuple[BoundaryKind, ...]

    def __len__(self) -> int:
        return len(self.segments)

    def flatten(self) -> list[int]:
        return [t for seg in self.segments for t in seg]

    def cut_points(self) -> list[int]:
        """Token index at which each segment after the first begins."""
        out, pos = [], 0
        for seg in self.segments[:-1]:
            pos += len(seg)
            out.append(pos)
        return out


@dataclass
class _Piece:
    tokens: list[int]
    starts_list: bool = False
    merged: bool = False


def _split_pieces(lengths: Sequence[int]) -> list[_Piece]:
    # cut after each run of 1s, so "?!" or ":\n\n1." stay in one piece
    pieces: list[_Piece] = []
    current: list[int] = []
    n = len(lengths)
    for i, t in enumerate(lengths):
        current.append(t)
        if t == 1 and (i + 1 == n or lengths[i + 1] != 1):
            pieces.append(_Piece(current))
            current = []
    if current:
        pieces.append(_Piece(current))
    return pieces


def _relocate_list_openers(pieces: list[_Piece]) -> list[_Piece]:
    k = len(LIST_OPENER)
    i = 0
    while i < len(pieces) - 1:
        piece = pieces[i]
        if tuple(piece.tokens[-k:]) != LIST_OPENER:
            i += 1
            continue
        nxt = pieces[i + 1]
        nxt.tokens[:0] = piece.tokens[-k:]
        nxt.starts_list = True
        del piece.tokens[-k:]
        if not piece.tokens:
            del pieces[i]
        # re-examine position i: the shortened piece may end in another opener
    return pieces


def _merge_short(pieces: list[_Piece], min_tokens: int) -> list[_Piece]:
    merged: list[_Piece] = []
    acc: _Piece | None = None
    for piece in pieces:
        if acc is None:
            acc = _Piece(list(piece.tokens), piece.starts_list, piece.merged)
        else:
            acc.tokens.extend(piece.tokens)
            acc.merged = True
        if len(acc.tokens) >= min_tokens:
            merged.append(acc)
            acc = None
    if acc is not None:
        if merged:
            # short tail has no successor: fold it into the previous segment
            merged[-1].tokens.extend(acc.tokens)
            merged[-1].merged = True
        else:
            merged.append(acc)
    return merged


def segment(lengths: Sequence[int], min_tokens: int = MIN_SEGMENT_TOKENS) -> SegmentedSequence:
    """Cut after length-1 tokens, move list openers ``(3, 1, 1)`` to the
    following segment, then merge segments shorter than *min_tokens* into
    their successor (the last one into its predecessor)."""
    if any(t < 1 for t in lengths):
        raise ValueError("token lengths must be >= 1")
    if not lengths:
        return SegmentedSequence((), ())
    pieces = _relocate_list_openers(_split_pieces(lengths))
    pieces = _merge_short(pieces, min_tokens)
    kinds = []
    for prev, nxt in zip(pieces, pieces[1:]):
        if nxt.starts_list and tuple(nxt.tokens[:3]) == LIST_OPENER:
            kinds.append(BoundaryKind.LIST_ITEM)
        elif prev.merged:
            kinds.append(BoundaryKind.FORCED_MERGE)
        else:
            kinds.append(BoundaryKind.PUNCTUATION)
    return SegmentedSequence(tuple(tuple(p.tokens) for p in pieces), tuple(kinds))


def segment_text(text: str, vocab: Vocabulary, min_tokens: int = MIN_SEGMENT_TOKENS) -> list[str]:
    """Segment plain text the same way its token lengths would be segmented."""
    seq = tokenize(text, vocab)
    segs = segment(seq.lengths, min_tokens)
    offsets = seq.offsets()
    out, tok = [], 0
    for s in segs.segments:
        out.append(text[offsets[tok]:offsets[tok + len(s)]])
        tok += len(s)
    return out


def format_segments(segs: SegmentedSequence, stream_id: str = "") -> str:
    """One segment per line, lengths space-separated."""
    head = f"#stream={stream_id}\n" if stream_id else ""
    return head + "".join(" ".join(map(str, s)) + "\n" for s in segs.segments)


def parse_segments(text: str) -> dict[str, list[tuple[int, ...]]]:
    out: dict[str, list[tuple[int, ...]]] = {}
    sid = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "stream":
                sid = value.strip()
                out.setdefault(sid, [])
            continue
        try:
            seg = tuple(int(x) for x in line.split())
        except ValueError:
            raise ValueError(f"line {lineno}: bad segment {line!r}") from None
        if any(t < 1 for t in seg):
            raise ValueError(f"line {lineno}: lengths must be >= 1")
        out.setdefault(sid, []).append(seg)
    return out

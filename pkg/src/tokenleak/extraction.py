"""Recover token lengths from the packet sizes of one response stream."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from .trace import PacketRecord


class ExtractionError(ValueError):
    pass


class NoResponseFound(ExtractionError):
    pass


class InvalidSequence(ExtractionError):
    pass


class OverheadTooLarge(ExtractionError):
    pass


class Provenance(enum.Enum):
    EXACT = "exact"
    BUFFERED_SUSPECT = "buffered_suspect"


@dataclass(frozen=True)
class IdentifyOptions:
    min_run: int = 3
    max_fragment_payload: int = 0
    fragment_header: int = 0
    # packets inspected ahead of a candidate before accepting it
    lookahead: int = 2


@dataclass(frozen=True)
class MessageSizeSequence:
    sizes: tuple[int, ...]
    start_packet_index: int = 0

    def __len__(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class TokenLengthSequence:
    lengths: tuple[int, ...]
    provenance: Provenance = Provenance.EXACT
    hidden_prefix_count: int = 0

    def __post_init__(self):
        if any(t < 1 for t in self.lengths):
            raise InvalidSequence("token lengths must be >= 1")

    def __len__(self) -> int:
        return len(self.lengths)


def _sizes(packets: Iterable[PacketRecord | int]) -> list[int]:
    return [p.payload_len if isinstance(p, PacketRecord) else int(p) for p in packets]


def defragment(
    packets: Sequence[int], max_payload: int, header: int
) -> tuple[list[int], list[int]]:
    """Reassemble saw-tooth fragments into message sizes.

    A run of ``max_payload`` packets is joined with the packet that follows
    it; every message loses one ``header``. A run at the very end of the
    stream is taken as a message that was an exact multiple of the capacity
    sent without its header-only trailer. Returns the sizes and the index of
    each message's first packet.
    """
    if max_payload <= header:
        raise ValueError("max_payload must exceed header")
    cap = max_payload - header
    sizes: list[int] = []
    starts: list[int] = []
    i, n = 0, len(packets)
    while i < n:
        start = i
        full = 0
        while i < n and packets[i] == max_payload:
            full += 1
            i += 1
        if i < n:
            sizes.append(full * cap + packets[i] - header)
            i += 1
        else:
            sizes.append(full * cap)
        starts.append(start)
    return sizes, starts


def _continuity_run(sizes: Sequence[int], start: int, lookahead: int) -> list[int]:
    """Indices of a strictly increasing run beginning at *start*, skipping
    packets that break continuity."""
    run = [start]
    last = sizes[start]
    for i in range(start + 1, len(sizes)):
        x = sizes[i]
        if x <= last:
            continue
        ahead = sizes[i + 1:i + 1 + lookahead]
        # x overshoots if a following packet fits between last and x while
        # nothing ahead continues past x
        if ahead and any(last < y < x for y in ahead) and not any(y > x for y in ahead):
            continue
        run.append(i)
        last = x
    return run


def identify_messages(
    packets: Sequence[PacketRecord | int], opts: IdentifyOptions | None = None
) -> MessageSizeSequence:
    """Locate the response inside one direction of one stream.

    Fragmented messages are reassembled first. The longest strictly
    increasing run (control packets skipped) is the response; its first
    packet is where the response starts.
    """
    opts = opts or IdentifyOptions()
    raw = _sizes(packets)
    if opts.max_fragment_payload:
        sizes, starts = defragment(raw, opts.max_fragment_payload, opts.fragment_header)
    else:
        sizes, starts = raw, list(range(len(raw)))
    best: list[int] = []
    for s in range(len(sizes)):
        if len(sizes) - s <= len(best):
            break
        run = _continuity_run(sizes, s, opts.lookahead)
        if len(run) > len(best):
            best = run
    if len(best) < max(opts.min_run, 1):
        raise NoResponseFound(
            f"no increasing run of length >= {opts.min_run} (best {len(best)})"
        )
    return MessageSizeSequence(tuple(sizes[i] for i in best), starts[best[0]])


def _provenance(lengths: Sequence[int], threshold: int) -> Provenance:
    if any(t > threshold for t in lengths):
        return Provenance.BUFFERED_SUSPECT
    return Provenance.EXACT


def extract_cumulative(
    sizes: MessageSizeSequence | Sequence[int],
    h: int | None = None,
    buffered_threshold: int = 15,
) -> TokenLengthSequence:
    """Token lengths as successive message-size differences.

    Without a known overhead *h* the first message's token count is unknown,
    reported as ``hidden_prefix_count=1``.
    """
    s = list(sizes.sizes if isinstance(sizes, MessageSizeSequence) else sizes)
    if not s:
        raise InvalidSequence("empty message sequence")
    if any(b <= a for a, b in zip(s, s[1:])):
        raise InvalidSequence("message sizes must be strictly increasing")
    lengths = [b - a for a, b in zip(s, s[1:])]
    hidden = 1
    if h is not None:
        if s[0] - h < 1:
            raise OverheadTooLarge(f"first message {s[0]} <= overhead {h}")
        lengths.insert(0, s[0] - h)
        hidden = 0
    return TokenLengthSequence(tuple(lengths), _provenance(lengths, buffered_threshold), hidden)


def extract_pertoken(
    packets: Sequence[int], h: int, buffered_threshold: int = 15
) -> TokenLengthSequence:
    """Token lengths as packet size minus the fixed metadata overhead."""
    sizes = _sizes(packets)
    bad = [p for p in sizes if p <= h]
    if bad:
        raise OverheadTooLarge(f"packet of {bad[0]} bytes does not exceed overhead {h}")
    lengths = [p - h for p in sizes]
    return TokenLengthSequence(tuple(lengths), _provenance(lengths, buffered_threshold), 0)


def estimate_overhead(packets: Sequence[int]) -> int:
    """Assume the smallest packet carries a one-character token."""
    sizes = _sizes(packets)
    if not sizes:
        raise ValueError("cannot estimate overhead from no packets")
    return min(sizes) - 1


def message_deltas(sizes: Sequence[int]) -> list[int]:
    """Raw successive differences, no validity checks (for leakage scoring)."""
    return [b - a for a, b in zip(sizes, sizes[1:])]


# ---------------------------------------------------------------------------
# lengths files: one integer per line after a ``#hidden_prefix=N`` comment;
# several sequences may share a file, each introduced by ``#stream=ID``


def format_lengths_file(seqs: dict[str, TokenLengthSequence] | TokenLengthSequence) -> str:
    if isinstance(seqs, TokenLengthSequence):
        seqs = {"": seqs}
    lines = []
    for sid, seq in seqs.items():
        if sid:
            lines.append(f"#stream={sid}")
        lines.append(f"#hidden_prefix={seq.hidden_prefix_count}")
        if seq.provenance is not Provenance.EXACT:
            lines.append(f"#provenance={seq.provenance.value}")
        lines.extend(str(t) for t in seq.lengths)
    return "\n".join(lines) + "\n"


def parse_lengths_file(text: str) -> dict[str, TokenLengthSequence]:
    out: dict[str, TokenLengthSequence] = {}
    sid = ""
    lengths: list[int] = []
    hidden = 0
    prov = Provenance.EXACT
    started = False

    def flush():
        if started:
            out[sid] = TokenLengthSequence(tuple(lengths), prov, hidden)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            key = key.strip()
            if key == "stream":
                flush()
                sid, lengths, hidden, prov, started = value.strip(), [], 0, Provenance.EXACT, True
            elif key == "hidden_prefix":
                try:
                    hidden = int(value)
                except ValueError:
                    raise InvalidSequence(f"line {lineno}: bad hidden_prefix {value!r}") from None
                started = True
            elif key == "provenance":
                prov = Provenance(value.strip())
            continue
        try:
            lengths.append(int(line))
        except ValueError:
            raise InvalidSequence(f"line {lineno}: not an integer: {line!r}") from None
        started = True
    flush()
    return out

"""Packet-trace data model and the line-oriented trace file format.

One record per line::

    <timestamp_us> <S2C|C2S> <payload_len> <stream_id>

Lines starting with ``#`` are comments, except ``#meta key=value`` lines,
which are only valid before the first record.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO


class Direction(enum.Enum):
    SERVER_TO_CLIENT = "S2C"
    CLIENT_TO_SERVER = "C2S"


S2C = Direction.SERVER_TO_CLIENT
C2S = Direction.CLIENT_TO_SERVER


class TraceFormatError(ValueError):
    """Raised for malformed trace files."""


@dataclass(frozen=True)
class PacketRecord:
    timestamp_us: int
    direction: Direction
    payload_len: int
    stream_id: str

    def __post_init__(self):
        if self.payload_len < 0:
            raise ValueError(f"payload_len must be >= 0, got {self.payload_len}")
        if not self.stream_id or any(c.isspace() for c in self.stream_id):
            raise ValueError(f"invalid stream_id {self.stream_id!r}")


@dataclass(frozen=True)
class Trace:
    packets: tuple[PacketRecord, ...] = ()
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        _check_stream_order(self.packets)

    def __len__(self) -> int:
        return len(self.packets)

    def stream_ids(self) -> list[str]:
        """Stream ids in order of first appearance."""
        return list(dict.fromkeys(p.stream_id for p in self.packets))

    def streams(self) -> dict[str, list[PacketRecord]]:
        out: dict[str, list[PacketRecord]] = {}
        for p in self.packets:
            out.setdefault(p.stream_id, []).append(p)
        return out


def _check_stream_order(packets: Iterable[PacketRecord], lines: list[int] | None = None):
    last: dict[str, int] = {}
    for i, p in enumerate(packets):
        prev = last.get(p.stream_id)
        if prev is not None and p.timestamp_us < prev:
            where = f" (line {lines[i]})" if lines else ""
            raise TraceFormatError(
                f"non-monotone timestamps in stream {p.stream_id!r}{where}"
            )
        last[p.stream_id] = p.timestamp_us


def filter_stream(trace: Trace, stream_id: str, direction: Direction = S2C) -> list[PacketRecord]:
    """Select the packets of one stream in one direction, order preserved."""
    return [p for p in trace.packets if p.stream_id == stream_id and p.direction is direction]


def payload_sizes(packets: Iterable[PacketRecord]) -> list[int]:
    return [p.payload_len for p in packets]


def merge_traces(traces: Iterable[Trace], meta: dict[str, str] | None = None) -> Trace:
    packets: list[PacketRecord] = []
    merged_meta: dict[str, str] = {}
    for t in traces:
        packets.extend(t.packets)
        merged_meta.update(t.meta)
    if meta:
        merged_meta.update(meta)
    return Trace(tuple(packets), merged_meta)


def parse_trace(stream: TextIO) -> Trace:
    meta: dict[str, str] = {}
    packets: list[PacketRecord] = []
    lines: list[int] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#meta "):
                if packets:
                    raise TraceFormatError(f"line {lineno}: #meta after first record")
                key, sep, value = line[len("#meta "):].partition("=")
                if not sep or not key.strip():
                    raise TraceFormatError(f"line {lineno}: malformed meta entry")
                meta[key.strip()] = value
            continue
        parts = line.split(" ")
        if len(parts) != 4:
            raise TraceFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        ts, d, size, sid = parts
        try:
            direction = Direction(d)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: bad direction {d!r}") from None
        try:
            ts_i, size_i = int(ts), int(size)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: non-integer field") from None
        if size_i < 0:
            raise TraceFormatError(f"line {lineno}: negative payload_len {size_i}")
        if ts_i < 0:
            raise TraceFormatError(f"line {lineno}: negative timestamp {ts_i}")
        try:
            packets.append(PacketRecord(ts_i, direction, size_i, sid))
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
        lines.append(lineno)
    _check_stream_order(packets, lines)
    return Trace(tuple(packets), meta)


def load_trace(path: str | Path) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)


def format_trace(trace: Trace) -> str:
    buf = io.StringIO()
    write_trace(trace, buf)
    return buf.getvalue()


def write_trace(trace: Trace, stream: TextIO) -> None:
    for key, value in trace.meta.items():
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"meta entry {key!r} cannot be serialized")
        stream.write(f"#meta {key}={value}\n")
    for p in trace.packets:
        stream.write(f"{p.timestamp_us} {p.direction.value} {p.payload_len} {p.stream_id}\n")


def save_trace(trace: Trace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_trace(trace, fh)

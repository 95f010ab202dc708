import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tokenleak.trace import (
    C2S,
    S2C,
    PacketRecord,
    Trace,
    TraceFormatError,
    filter_stream,
    format_trace,
    load_trace,
    merge_traces,
    parse_trace,
    save_trace,
)


def test_three_lines(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("0 S2C 100 a\n5 C2S 40 a\n9 S2C 120 a\n")
    t = load_trace(p)
    assert len(t) == 3
    assert [r.payload_len for r in t.packets] == [100, 40, 120]
    assert t.packets[1].direction is C2S


def test_empty_file(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("")
    assert len(load_trace(p)) == 0


def test_negative_payload_reports_line():
    with pytest.raises(TraceFormatError, match="line 2"):
        parse_trace(io.StringIO("0 S2C 1 a\n1 S2C -5 a\n"))


def test_malformed_line_reports_line():
    with pytest.raises(TraceFormatError, match="line 3"):
        parse_trace(io.StringIO("# comment\n0 S2C 1 a\n1 XYZ 4 a\n"))


def test_non_monotone_reports_stream():
    with pytest.raises(TraceFormatError, match="s7"):
        parse_trace(io.StringIO("10 S2C 1 s7\n5 S2C 4 s7\n"))


def test_interleaved_streams_may_interleave_times():
    t = parse_trace(io.StringIO("10 S2C 1 a\n5 S2C 4 b\n11 S2C 2 a\n"))
    assert t.stream_ids() == ["a", "b"]


def test_meta_only_before_records():
    t = parse_trace(io.StringIO("#meta vendor=x\n#meta proto=quic\n0 S2C 1 a\n"))
    assert t.meta == {"vendor": "x", "proto": "quic"}
    with pytest.raises(TraceFormatError):
        parse_trace(io.StringIO("0 S2C 1 a\n#meta late=1\n"))


def test_filter_stream():
    t = Trace((
        PacketRecord(0, S2C, 10, "a"),
        PacketRecord(1, C2S, 11, "a"),
        PacketRecord(2, S2C, 12, "b"),
        PacketRecord(3, S2C, 13, "a"),
    ))
    assert [p.payload_len for p in filter_stream(t, "a")] == [10, 13]
    assert [p.payload_len for p in filter_stream(t, "a", C2S)] == [11]
    assert filter_stream(t, "zzz") == []


def test_merge_keeps_stream_order():
    a = Trace((PacketRecord(0, S2C, 1, "a"), PacketRecord(5, S2C, 2, "a")))
    b = Trace((PacketRecord(3, S2C, 3, "b"),))
    m = merge_traces([a, b])
    assert [p.payload_len for p in filter_stream(m, "a")] == [1, 2]


records = st.lists(
    st.tuples(
        st.integers(0, 10**6),
        st.sampled_from([S2C, C2S]),
        st.integers(0, 70000),
        st.sampled_from(["r0", "r1", "stream-x"]),
    ),
    max_size=40,
)


@given(records, st.dictionaries(st.sampled_from(["vendor", "proto", "note"]), st.text("abcxyz-_", min_size=1, max_size=8)))
def test_round_trip(rows, meta):
    rows = sorted(rows, key=lambda r: r[0])
    t = Trace(tuple(PacketRecord(*r) for r in rows), meta)
    assert parse_trace(io.StringIO(format_trace(t))) == t


@given(records, st.sampled_from(["r0", "r1"]), st.sampled_from([S2C, C2S]))
def test_filter_is_subsequence(rows, sid, direction):
    rows = sorted(rows, key=lambda r: r[0])
    t = Trace(tuple(PacketRecord(*r) for r in rows))
    sub = filter_stream(t, sid, direction)
    it = iter(t.packets)
    assert all(any(p == q for q in it) for p in sub)


def test_save_load(tmp_path):
    t = Trace((PacketRecord(0, S2C, 7, "a"),), {"k": "v"})
    save_trace(t, tmp_path / "x.trace")
    assert load_trace(tmp_path / "x.trace") == t

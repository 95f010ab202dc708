"""Countermeasures against the token-length channel and how much they leak.

Three transforms of a :class:`TransmissionPolicy`:

* :class:`Pad` adds padding to every message (random or bucket rounding);
* :class:`Group` sends a fixed number of tokens per message;
* :class:`Batch` sends the whole response as one message.

:func:`measure_leakage` streams a corpus under the mitigated policy and
scores what an eavesdropper gets back.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Sequence, Union

from .extraction import defragment, estimate_overhead
from .reconstruct import DEFAULT_GUARD, dictionary_tokens
from .segmentation import segment
from .simulator import (
    BufferingModel,
    GroundTruth,
    Mode,
    PaddingKind,
    PaddingModel,
    PolicyError,
    TransmissionPolicy,
    simulate_response,
)
from .tokenizer import Vocabulary


@dataclass(frozen=True)
class NoMitigation:
    def label(self) -> str:
        return "none"


@dataclass(frozen=True)
class Pad:
    padding: PaddingModel

    def label(self) -> str:
        p = self.padding
        if p.kind is PaddingKind.BUCKET_ROUND:
            return f"pad:bucket={p.bucket}"
        if p.kind is PaddingKind.RANDOM_UNIFORM:
            return f"pad:uniform={p.min_bytes}-{p.max_bytes}"
        return "pad:none"


@dataclass(frozen=True)
class Group:
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise PolicyError("group size must be >= 2")

    def label(self) -> str:
        return f"group:{self.n}"


@dataclass(frozen=True)
class Batch:
    def label(self) -> str:
        return "batch"


Mitigation = Union[NoMitigation, Pad, Group, Batch]


def apply_mitigation(policy: TransmissionPolicy, mitigation: Mitigation | None) -> TransmissionPolicy:
    if mitigation is None or isinstance(mitigation, NoMitigation):
        return policy
    if isinstance(mitigation, Pad):
        return replace(policy, padding=mitigation.padding)
    if isinstance(mitigation, Group):
        # fixed grouping replaces whatever buffering the vendor did
        return replace(policy, group_size=mitigation.n, pairing=False, buffering=BufferingModel())
    if isinstance(mitigation, Batch):
        return replace(policy, batch=True)
    raise TypeError(f"not a mitigation: {mitigation!r}")


_PAD_RE = re.compile(r"pad:(bucket=(\d+)|uniform=(\d+)-(\d+))(?:,seed=(\d+))?$")


def parse_mitigation(text: str) -> Mitigation:
    """Parse ``none``, ``batch``, ``group:N``, ``pad:bucket=B`` or
    ``pad:uniform=LO-HI[,seed=S]``."""
    s = text.strip().lower()
    if s in ("", "none"):
        return NoMitigation()
    if s == "batch":
        return Batch()
    if s.startswith("group:"):
        try:
            return Group(int(s[6:]))
        except ValueError:
            raise PolicyError(f"bad group size in {text!r}") from None
    m = _PAD_RE.match(s)
    if m:
        seed = int(m.group(5) or 0)
        if m.group(2):
            return Pad(PaddingModel.bucket_round(int(m.group(2))))
        return Pad(PaddingModel.uniform(int(m.group(3)), int(m.group(4)), seed))
    raise PolicyError(f"unknown mitigation {text!r}")


# ---------------------------------------------------------------------------
# candidate counts from a length histogram


class _LengthCounts:
    """Number of token sequences of a given total byte length."""

    def __init__(self, dictionary: Iterable[str] | Vocabulary):
        hist = Counter(len(t.encode("utf-8")) for t in set(dictionary_tokens(dictionary)))
        self.hist = dict(sorted(hist.items()))
        self._any = [1]

    def exactly(self, k: int, total: int) -> int:
        return _compositions(tuple(self.hist.items()), k, total)

    def any_count(self, total: int) -> int:
        # sequences with any number (>= 1) of tokens
        if total < 1:
            return 0
        while len(self._any) <= total:
            L = len(self._any)
            self._any.append(sum(c * self._any[L - t] for t, c in self.hist.items() if t <= L))
        return self._any[total]


@lru_cache(maxsize=65536)
def _compositions(hist: tuple[tuple[int, int], ...], k: int, total: int) -> int:
    if k == 0:
        return 1 if total == 0 else 0
    if total < k:
        return 0
    return sum(c * _compositions(hist, k - 1, total - t) for t, c in hist if t <= total)


def _payload_range(size: int, policy: TransmissionPolicy, extra: int) -> tuple[int, int]:
    """Unpadded body bytes consistent with an observed message size."""
    base = size - policy.metadata_overhead_h - extra
    pad = policy.padding
    if pad.kind is PaddingKind.RANDOM_UNIFORM:
        return base - pad.max_bytes, base - pad.min_bytes
    if pad.kind is PaddingKind.BUCKET_ROUND:
        return base - pad.bucket + 1, base
    return base, base


def _message_candidates(
    counts: _LengthCounts, lo: int, hi: int, n_tokens: Sequence[int] | None
) -> int:
    total = 0
    for L in range(max(lo, 1), hi + 1):
        if n_tokens is None:
            total += counts.any_count(L)
        else:
            total += sum(counts.exactly(k, L) for k in n_tokens)
    return total


def _tokens_per_message(policy: TransmissionPolicy, j: int, n_msgs: int) -> Sequence[int] | None:
    """What a policy-aware observer knows about message *j*'s token count."""
    if policy.batch or policy.buffering.active:
        return None
    if j == 0 and policy.preamble_tokens_hidden:
        return None
    n = policy.effective_group_size
    if n == 1:
        return (1,)
    return tuple(range(1, n + 1)) if j == n_msgs - 1 else (n,)


# ---------------------------------------------------------------------------
# leakage measurement


@dataclass(frozen=True)
class LeakageReport:
    mitigation: str
    responses: int
    tokens_scored: int
    exact_recovery_rate: float
    residual_entropy_bits: float
    bandwidth_overhead: float
    header_adjusted_overhead: float
    # a segment's candidate count went past the brute-force enumeration guard
    guard_exceeded: bool = False

    def __post_init__(self):
        if not 0.0 <= self.exact_recovery_rate <= 1.0:
            raise ValueError("exact_recovery_rate outside [0, 1]")
        if self.residual_entropy_bits < 0 or self.bandwidth_overhead < 0:
            raise ValueError("entropy and overhead must be >= 0")

    def render(self) -> str:
        rows = [
            ("mitigation", self.mitigation),
            ("responses", self.responses),
            ("tokens_scored", self.tokens_scored),
            ("exact_recovery_rate", f"{self.exact_recovery_rate:.6f}"),
            ("residual_entropy_bits", f"{self.residual_entropy_bits:.4f}"),
            ("bandwidth_overhead", f"{self.bandwidth_overhead:.6f}"),
            ("header_adjusted_overhead", f"{self.header_adjusted_overhead:.6f}"),
            ("guard_exceeded", str(self.guard_exceeded).lower()),
        ]
        return "".join(f"{k}={v}\n" for k, v in rows)


def observed_message_sizes(packets: Sequence[int], policy: TransmissionPolicy) -> list[int]:
    if policy.max_fragment_payload:
        return defragment(packets, policy.max_fragment_payload, policy.fragment_header)[0]
    return list(packets)


def recovered_lengths(sizes: Sequence[int], policy: TransmissionPolicy) -> list[int | None]:
    """One recovered length per message, as the standard extraction sees it.

    Per-token streams subtract an overhead estimated from the smallest
    message; cumulative streams take successive differences, so the first
    message yields nothing.
    """
    if not sizes:
        return []
    if policy.mode is Mode.PER_TOKEN:
        h = estimate_overhead(sizes)
        return [s - h for s in sizes]
    return [None] + [b - a for a, b in zip(sizes, sizes[1:])]


def score_recovery(values: Sequence[int | None], truth: GroundTruth) -> tuple[int, int]:
    """(recovered, scored) token counts.

    A token counts as recovered when it travelled alone and its message gave
    back exactly its byte length. Tokens of a message that yields no value
    are not scored.
    """
    if len(values) != len(truth.groups):
        raise ValueError("recovered values do not align with messages")
    hit = scored = 0
    for value, group in zip(values, truth.groups):
        if value is None:
            continue
        scored += len(group)
        if len(group) == 1 and value == truth.token_bytes[group[0]]:
            hit += 1
    return hit, scored


def segment_entropies(
    sizes: Sequence[int], truth: GroundTruth, policy: TransmissionPolicy, counts: _LengthCounts
) -> list[float]:
    """log2 of the candidate count for each segment of the true response."""
    n_msgs = len(sizes)
    ranges = [
        _payload_range(s, policy, policy.preamble_extra_bytes if j == 0 else 0)
        for j, s in enumerate(sizes)
    ]
    if policy.mode is Mode.CUMULATIVE:
        # prefix bytes lie in [lo_j, hi_j]; the new bytes in between
        ranges = [ranges[0]] + [
            (lo - ranges[j - 1][1], hi - ranges[j - 1][0])
            for j, (lo, hi) in enumerate(ranges) if j
        ]
    cuts = set()
    pos = 0
    for seg in segment(truth.token_lengths).segments:
        cuts.add(pos)
        pos += len(seg)
    bits: list[float] = []
    for j, (group, (lo, hi)) in enumerate(zip(truth.groups, ranges)):
        c = _message_candidates(counts, lo, hi, _tokens_per_message(policy, j, n_msgs))
        b = math.log2(c) if c > 0 else 0.0
        if group[0] in cuts or not bits:
            bits.append(b)
        else:
            bits[-1] += b
    return bits


def measure_leakage(
    corpus: Sequence[str],
    base: TransmissionPolicy,
    mitigation: Mitigation | None,
    vocab: Vocabulary,
    dictionary: Iterable[str] | Vocabulary | None = None,
    guard: int = DEFAULT_GUARD,
) -> LeakageReport:
    """Simulate *corpus* under *base* and under *base* plus *mitigation*.

    Control packets are switched off for both runs so messages line up with
    the ground truth.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    base = replace(base, control_prob=0.0)
    mitigated = apply_mitigation(base, mitigation)
    counts = _LengthCounts(dictionary if dictionary is not None else vocab)
    label = (mitigation or NoMitigation()).label()

    hit = scored = 0
    pad_bytes = unpadded = 0
    wire_base = wire_mit = 0
    seg_bits: list[float] = []
    for i, text in enumerate(corpus):
        sid = f"r{i:04d}"
        trace, truth = simulate_response(text, vocab, mitigated, stream_id=sid)
        packets = [p.payload_len for p in trace.packets]
        sizes = observed_message_sizes(packets, mitigated)
        h, n = score_recovery(recovered_lengths(sizes, mitigated), truth)
        hit += h
        scored += n
        pad_bytes += sum(truth.message_padding)
        unpadded += sum(truth.message_sizes) - sum(truth.message_padding)
        wire_mit += sum(packets)
        base_trace, _ = simulate_response(text, vocab, base, stream_id=sid)
        wire_base += sum(p.payload_len for p in base_trace.packets)
        seg_bits.extend(segment_entropies(sizes, truth, mitigated, counts))

    limit = math.log2(guard)
    return LeakageReport(
        mitigation=label,
        responses=len(corpus),
        tokens_scored=scored,
        exact_recovery_rate=hit / scored if scored else 0.0,
        residual_entropy_bits=sum(seg_bits) / len(seg_bits) if seg_bits else 0.0,
        bandwidth_overhead=pad_bytes / unpadded if unpadded else 0.0,
        header_adjusted_overhead=wire_mit / wire_base - 1.0 if wire_base else 0.0,
        guard_exceeded=any(b > limit for b in seg_bits),
    )

"""Synthetic server-to-client traffic for a known response.

A :class:`TransmissionPolicy` describes how a vendor streams tokens: whole
prefix per message or one token per message, fixed metadata overhead, token
buffering or pairing, a preamble folded into the first message, padding, and
QUIC-style fragmentation of oversized messages. Wire sizes count UTF-8 bytes.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .tokenizer import Vocabulary, tokenize
from .trace import S2C, PacketRecord, Trace


class Mode(enum.Enum):
    CUMULATIVE = "cumulative"
    PER_TOKEN = "pertoken"


class PaddingKind(enum.Enum):
    NONE = "none"
    RANDOM_UNIFORM = "uniform"
    BUCKET_ROUND = "bucket"


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class BufferingModel:
    """Probability that the first two tokens share a message, and that any
    later token joins the message of its predecessor."""

    first_pair_group_prob: float = 0.0
    inner_group_prob: float = 0.0

    def __post_init__(self):
        for p in (self.first_pair_group_prob, self.inner_group_prob):
            if not 0.0 <= p <= 1.0:
                raise PolicyError(f"buffering probability {p} outside [0, 1]")

    @property
    def active(self) -> bool:
        return self.first_pair_group_prob > 0 or self.inner_group_prob > 0


@dataclass(frozen=True)
class PaddingModel:
    kind: PaddingKind = PaddingKind.NONE
    min_bytes: int = 0
    max_bytes: int = 0
    bucket: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind is PaddingKind.RANDOM_UNIFORM and not 0 <= self.min_bytes <= self.max_bytes:
            raise PolicyError("uniform padding needs 0 <= min_bytes <= max_bytes")
        if self.kind is PaddingKind.BUCKET_ROUND and self.bucket < 1:
            raise PolicyError("bucket padding needs bucket >= 1")

    @classmethod
    def uniform(cls, lo: int, hi: int, seed: int = 0) -> "PaddingModel":
        return cls(PaddingKind.RANDOM_UNIFORM, min_bytes=lo, max_bytes=hi, seed=seed)

    @classmethod
    def bucket_round(cls, bucket: int) -> "PaddingModel":
        return cls(PaddingKind.BUCKET_ROUND, bucket=bucket)

    def pad(self, size: int, rng: random.Random) -> int:
        if self.kind is PaddingKind.RANDOM_UNIFORM:
            return size + rng.randint(self.min_bytes, self.max_bytes)
        if self.kind is PaddingKind.BUCKET_ROUND:
            return -(-size // self.bucket) * self.bucket
        return size


@dataclass(frozen=True)
class TransmissionPolicy:
    mode: Mode = Mode.CUMULATIVE
    metadata_overhead_h: int = 0
    max_fragment_payload: int = 0
    fragment_header: int = 0
    buffering: BufferingModel = field(default_factory=BufferingModel)
    pairing: bool = False
    preamble_tokens_hidden: int = 0
    preamble_extra_bytes: int = 0
    padding: PaddingModel = field(default_factory=PaddingModel)
    rng_seed: int = 0
    # deterministic n-token grouping; pairing is group_size == 2
    group_size: int = 1
    # whole response in one message
    batch: bool = False
    # intermittent control packets: sizes drawn from control_sizes, inserted
    # after a data packet with probability control_prob
    control_sizes: tuple[int, ...] = ()
    control_prob: float = 0.0
    # emit a header-only trailing fragment when a message is an exact
    # multiple of the fragment capacity
    zero_remainder_trailer: bool = True
    token_interval_us: int = 50_000

    def __post_init__(self):
        object.__setattr__(self, "control_sizes", tuple(self.control_sizes))
        self.validate()

    def validate(self) -> None:
        if self.metadata_overhead_h < 0:
            raise PolicyError("metadata_overhead_h must be >= 0")
        if self.max_fragment_payload < 0 or self.fragment_header < 0:
            raise PolicyError("fragment sizes must be >= 0")
        if self.max_fragment_payload > 0 and self.fragment_header >= self.max_fragment_payload:
            raise PolicyError("fragment_header must be < max_fragment_payload")
        if self.group_size < 1:
            raise PolicyError("group_size must be >= 1")
        if self.preamble_tokens_hidden < 0 or self.preamble_extra_bytes < 0:
            raise PolicyError("preamble fields must be >= 0")
        if self.buffering.active and (self.pairing or self.group_size > 1):
            raise PolicyError("buffering and pairing/grouping are mutually exclusive")
        if self.pairing and self.group_size not in (1, 2):
            raise PolicyError("pairing conflicts with group_size")
        if not 0.0 <= self.control_prob <= 1.0:
            raise PolicyError("control_prob outside [0, 1]")
        if self.control_prob > 0 and not self.control_sizes:
            raise PolicyError("control_prob > 0 needs control_sizes")

    @property
    def effective_group_size(self) -> int:
        return 2 if self.pairing else self.group_size

    @property
    def fragment_capacity(self) -> int:
        return self.max_fragment_payload - self.fragment_header if self.max_fragment_payload else 0


def policy_to_dict(policy: TransmissionPolicy) -> dict:
    d = asdict(policy)
    d["mode"] = policy.mode.value
    d["padding"]["kind"] = policy.padding.kind.value
    d["control_sizes"] = list(policy.control_sizes)
    return d


def policy_from_dict(d: dict) -> TransmissionPolicy:
    d = dict(d)
    known = set(TransmissionPolicy.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise PolicyError(f"unknown policy fields: {sorted(unknown)}")
    if "mode" in d:
        d["mode"] = Mode(d["mode"])
    if "buffering" in d:
        d["buffering"] = BufferingModel(**d["buffering"])
    if "padding" in d:
        pad = dict(d["padding"])
        if "kind" in pad:
            pad["kind"] = PaddingKind(pad["kind"])
        d["padding"] = PaddingModel(**pad)
    if "control_sizes" in d:
        d["control_sizes"] = tuple(d["control_sizes"])
    try:
        return TransmissionPolicy(**d)
    except TypeError as exc:
        raise PolicyError(str(exc)) from None


def load_policy(path: str | Path) -> TransmissionPolicy:
    with open(path, encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))


def save_policy(policy: TransmissionPolicy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(policy), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class GroundTruth:
    response_text: str
    tokens: tuple[str, ...]
    token_lengths: tuple[int, ...]
    token_bytes: tuple[int, ...]
    # wire size of each message before fragmentation
    message_sizes: tuple[int, ...]
    # padding bytes added to each message
    message_padding: tuple[int, ...]
    # token indices carried (newly) by each message
    groups: tuple[tuple[int, ...], ...]

    @property
    def grouped_indices(self) -> list[tuple[int, ...]]:
        """Groups that merged more than one token."""
        return [g for g in self.groups if len(g) > 1]


def fragment_message(message_size: int, max_payload: int, header: int) -> list[int]:
    """Split one message into packet payload sizes.

    Messages under the capacity ``max_payload - header`` travel in a single
    packet of ``message_size + header``; larger ones become
    ``message_size // capacity`` full packets plus a remainder packet of
    ``message_size % capacity + header``.
    """
    if max_payload <= header:
        raise PolicyError("max_payload must exceed header")
    if message_size < 0:
        raise ValueError("message_size must be >= 0")
    cap = max_payload - header
    if message_size < cap:
        return [message_size + header]
    return [max_payload] * (message_size // cap) + [message_size % cap + header]


def _fragment(size: int, policy: TransmissionPolicy) -> list[int]:
    if not policy.max_fragment_payload:
        return [size]
    pieces = fragment_message(size, policy.max_fragment_payload, policy.fragment_header)
    if not policy.zero_remainder_trailer and len(pieces) > 1 and pieces[-1] == policy.fragment_header:
        pieces.pop()
    return pieces


def group_tokens(
    n_tokens: int,
    policy: TransmissionPolicy,
    rng: random.Random,
) -> list[list[int]]:
    """Partition token indices ``0..n_tokens-1`` into contiguous messages."""
    if n_tokens == 0:
        return []
    if policy.batch:
        return [list(range(n_tokens))]
    groups: list[list[int]] = []
    start = 0
    hidden = min(policy.preamble_tokens_hidden, n_tokens)
    if hidden:
        groups.append(list(range(hidden)))
        start = hidden
    size = policy.effective_group_size
    if size > 1:
        for i in range(start, n_tokens, size):
            groups.append(list(range(i, min(i + size, n_tokens))))
        return groups
    buf = policy.buffering
    for i in range(start, n_tokens):
        # visible tokens never join the hidden preamble message
        if i > start and buf.active:
            p = buf.first_pair_group_prob if i == start + 1 else buf.inner_group_prob
            if rng.random() < p:
                groups[-1].append(i)
                continue
        groups.append([i])
    return groups


def simulate_response(
    text: str,
    vocab: Vocabulary,
    policy: TransmissionPolicy,
    stream_id: str = "r0",
    start_us: int = 0,
) -> tuple[Trace, GroundTruth]:
    """Stream one response under *policy*; return its trace and the truth."""
    if not text:
        raise ValueError("text must be non-empty")
    policy.validate()
    rng = random.Random(f"{policy.rng_seed}:{stream_id}")
    pad_rng = random.Random(f"pad:{policy.padding.seed}:{policy.rng_seed}:{stream_id}")
    seq = tokenize(text, vocab)
    tb = seq.byte_lengths()
    groups = group_tokens(len(tb), policy, rng)

    sizes: list[int] = []
    padding: list[int] = []
    sent = 0
    for j, g in enumerate(groups):
        new = sum(tb[i] for i in g)
        sent += new
        body = sent if policy.mode is Mode.CUMULATIVE else new
        size = policy.metadata_overhead_h + body
        if j == 0:
            size += policy.preamble_extra_bytes
        padded = policy.padding.pad(size, pad_rng)
        sizes.append(padded)
        padding.append(padded - size)

    packets: list[PacketRecord] = []
    t = start_us
    for j, size in enumerate(sizes):
        for piece in _fragment(size, policy):
            packets.append(PacketRecord(t, S2C, piece, stream_id))
        last = j == len(sizes) - 1
        if not last and policy.control_prob and rng.random() < policy.control_prob:
            t += rng.randrange(1, max(2, policy.token_interval_us // 4))
            packets.append(PacketRecord(t, S2C, rng.choice(policy.control_sizes), stream_id))
        t += policy.token_interval_us + rng.randrange(0, max(1, policy.token_interval_us // 5))

    truth = GroundTruth(
        response_text=text,
        tokens=seq.tokens,
        token_lengths=seq.lengths,
        token_bytes=tuple(tb),
        message_sizes=tuple(sizes),
        message_padding=tuple(padding),
        groups=tuple(tuple(g) for g in groups),
    )
    meta = {"mode": policy.mode.value}
    return Trace(tuple(packets), meta), truth


def simulate_corpus(
    texts: Sequence[str],
    vocab: Vocabulary,
    policy: TransmissionPolicy,
    prefix: str = "r",
) -> tuple[Trace, list[GroundTruth]]:
    """Simulate every response as its own stream inside one trace."""
    width = max(4, len(str(max(len(texts) - 1, 0))))
    packets: list[PacketRecord] = []
    truths: list[GroundTruth] = []
    for i, text in enumerate(texts):
        trace, gt = simulate_response(text, vocab, policy, stream_id=f"{prefix}{i:0{width}d}")
        packets.extend(trace.packets)
        truths.append(gt)
    meta = {"mode": policy.mode.value, "responses": str(len(texts))}
    return Trace(tuple(packets), meta), truths


def expected_batch_packets(total_message_size: int, policy: TransmissionPolicy) -> int:
    """Packets a single batched message needs: ceil(size / capacity)."""
    cap = policy.fragment_capacity
    if not cap:
        return 1
    return max(1, math.ceil(total_message_size / cap))


def with_seed(policy: TransmissionPolicy, seed: int) -> TransmissionPolicy:
    return replace(policy, rng_seed=seed)

"""Infer text from token-length segments.

Two pieces live here:

* :func:`count_candidates`, the brute-force size of the search space for a
  length sequence over a word list (no grammar), i.e. what an attacker
  without a language model faces;
* an n-gram reconstructor: one model for opening segments and one for inner
  segments conditioned on the preceding segment's text, searched with a
  length-constrained beam, run *k* times with seeded sampling and ranked by
  model log-probability.

Anything implementing :class:`Reconstructor` can stand in for the n-gram
baseline, e.g. :class:`tokenleak.adapters.ExternalReconstructor`.
"""

from __future__ import annotations

import gzip
import heapq
import json
import logging
import math
import random
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .segmentation import SegmentedSequence, segment
from .tokenizer import Vocabulary, tokenize

log = logging.getLogger(__name__)

BOS = "<s>"
DEFAULT_GUARD = 10**9


class CandidateExplosion(ValueError):
    """The candidate space exceeds the enumeration guard."""

    def __init__(self, message: str, log2_count: float, guard: int):
        super().__init__(message)
        self.log2_count = log2_count
        self.guard = guard


class EmptyCorpus(ValueError):
    pass


# ---------------------------------------------------------------------------
# brute-force candidate counting


def dictionary_tokens(dictionary: Iterable[str] | Vocabulary) -> list[str]:
    """Surface tokens for a word list: words gain a leading space, while
    punctuation and entries already carrying whitespace are kept as is."""
    if isinstance(dictionary, Vocabulary):
        return sorted(dictionary.tokens)
    out = []
    for w in dictionary:
        if not w:
            continue
        if w[0].isspace() or not any(c.isalnum() for c in w):
            out.append(w)
        else:
            out.append(" " + w)
    return out


def slot_counts(
    lengths: Sequence[int],
    dictionary: Iterable[str] | Vocabulary,
    pinned: Mapping[int, str] | None = None,
) -> list[int]:
    by_len = Counter(len(t) for t in set(dictionary_tokens(dictionary)))
    pinned = pinned or {}
    counts = []
    for i, t in enumerate(lengths):
        if i in pinned:
            counts.append(1 if len(pinned[i]) == t else 0)
        else:
            counts.append(by_len.get(t, 0))
    return counts


def count_candidates(
    lengths: Sequence[int],
    dictionary: Iterable[str] | Vocabulary,
    pinned: Mapping[int, str] | None = None,
    guard: int = DEFAULT_GUARD,
) -> int:
    """Number of token sequences drawn from *dictionary* whose lengths match.

    *pinned* fixes known tokens at given slots, leaving only the blanks
    free. Raises :class:`CandidateExplosion` when the count
    exceeds *guard*.
    """
    counts = slot_counts(lengths, dictionary, pinned)
    if any(c == 0 for c in counts):
        return 0
    log2_total = sum(math.log2(c) for c in counts)
    if log2_total > math.log2(guard):
        raise CandidateExplosion(
            f"candidate count 2^{log2_total:.1f} exceeds guard {guard}", log2_total, guard
        )
    return math.prod(counts)


# ---------------------------------------------------------------------------
# reconstructor interface


@dataclass(frozen=True)
class ScoredCandidate:
    text: str
    log_score: float
    exact_length_match: bool = True


class Reconstructor(Protocol):
    def reconstruct_first(
        self, lengths: Sequence[int], *, k: int | None = None, hidden_prefix: int = 0
    ) -> list[ScoredCandidate]: ...

    def reconstruct_inner(
        self, lengths: Sequence[int], context: str, *, k: int | None = None
    ) -> list[ScoredCandidate]: ...


def reconstruct_response(
    reconstructor: Reconstructor,
    segments: SegmentedSequence | Sequence[Sequence[int]],
    k: int | None = None,
    hidden_prefix: int = 0,
) -> tuple[str, list[ScoredCandidate]]:
    """Reconstruct segments in order, each inner one conditioned on the best
    text chosen for its predecessor, and concatenate the winners."""
    segs = segments.segments if isinstance(segments, SegmentedSequence) else segments
    if not segs:
        raise ValueError("need at least one segment")
    chosen: list[ScoredCandidate] = []
    context = ""
    for i, seg in enumerate(segs):
        if i == 0:
            cands = reconstructor.reconstruct_first(seg, k=k, hidden_prefix=hidden_prefix)
        else:
            cands = reconstructor.reconstruct_inner(seg, context, k=k)
        best = cands[0] if cands else ScoredCandidate("", float("-inf"), False)
        chosen.append(best)
        context = best.text
    return "".join(c.text for c in chosen), chosen


class OracleReconstructor:
    """Returns the true text of any segment it has seen; for testing pipelines."""

    def __init__(self, responses: Iterable[str], vocab: Vocabulary):
        self._first: dict[tuple[int, ...], str] = {}
        self._inner: dict[tuple[int, ...], str] = {}
        for text in responses:
            for j, (lens, seg_text) in enumerate(_segment_pairs(text, vocab)):
                table = self._first if j == 0 else self._inner
                table.setdefault(tuple(lens), seg_text)
                if j == 0:
                    for drop in range(1, 3):
                        table.setdefault(("hidden", drop) + tuple(lens[drop:]), seg_text)

    def reconstruct_first(self, lengths, *, k=None, hidden_prefix=0):
        key = tuple(lengths) if not hidden_prefix else ("hidden", hidden_prefix) + tuple(lengths)
        text = self._first.get(key)
        return [ScoredCandidate(text, 0.0, True)] if text is not None else []

    def reconstruct_inner(self, lengths, context, *, k=None):
        text = self._inner.get(tuple(lengths))
        return [ScoredCandidate(text, 0.0, True)] if text is not None else []


def _segment_pairs(text: str, vocab: Vocabulary) -> list[tuple[list[int], str]]:
    seq = tokenize(text, vocab)
    segs = segment(seq.lengths)
    out = []
    pos = 0
    for s in segs.segments:
        toks = seq.tokens[pos:pos + len(s)]
        out.append((list(s), "".join(toks)))
        pos += len(s)
    return out


def _segment_tokens(text: str, vocab: Vocabulary) -> list[tuple[str, ...]]:
    seq = tokenize(text, vocab)
    out, pos = [], 0
    for s in segment(seq.lengths).segments:
        out.append(seq.tokens[pos:pos + len(s)])
        pos += len(s)
    return out


# ---------------------------------------------------------------------------
# n-gram model


@dataclass
class NGramModel:
    """Token n-gram counts for every context length ``0..order-1``.

    Each order is add-k smoothed toward the next-lower order, so every
    conditional distribution sums to one over the model vocabulary.
    """

    order: int
    counts: dict[tuple[str, ...], Counter] = field(default_factory=dict)
    corpus_label: str = ""
    k: float = 0.01

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("order must be >= 2")
        self._finalize()

    def _finalize(self) -> None:
        unigram = self.counts.get((), Counter())
        self.vocab_tokens = sorted(unigram)
        self.totals = {ctx: sum(c.values()) for ctx, c in self.counts.items()}
        by_len: dict[int, list[str]] = defaultdict(list)
        for tok in sorted(unigram, key=lambda t: (-unigram[t], t)):
            by_len[len(tok)].append(tok)
        self.length_index = dict(by_len)
        self._succ: dict[tuple[str, ...], dict[int, list[str]]] = {}
        self._cache: dict[tuple[tuple[str, ...], str], float] = {}
        self._alpha = self.k * max(len(self.vocab_tokens), 1)

    # -- probabilities ------------------------------------------------------

    def prob(self, history: Sequence[str], token: str) -> float:
        ctx = tuple(history[len(history) - (self.order - 1):]) if self.order > 1 else ()
        return self._prob(ctx, token)

    def _prob(self, ctx: tuple[str, ...], token: str) -> float:
        if not ctx:
            n = self.totals.get((), 0)
            c = self.counts.get((), {}).get(token, 0)
            return (c + self.k) / (n + self._alpha)
        lower = self._prob(ctx[1:], token)
        counts = self.counts.get(ctx)
        if not counts:
            return lower
        return (counts.get(token, 0) + self._alpha * lower) / (self.totals[ctx] + self._alpha)

    def logprob(self, history: Sequence[str], token: str) -> float:
        ctx = tuple(history[max(0, len(history) - (self.order - 1)):])
        key = (ctx, token)
        lp = self._cache.get(key)
        if lp is None:
            lp = math.log(self._prob(ctx, token))
            self._cache[key] = lp
        return lp

    def sequence_logprob(self, tokens: Sequence[str], context: Sequence[str] = ()) -> float:
        hist = list(self.initial_history(context))
        total = 0.0
        for tok in tokens:
            total += self.logprob(hist, tok)
            hist.append(tok)
        return total

    def initial_history(self, context_tokens: Sequence[str] = ()) -> tuple[str, ...]:
        need = self.order - 1
        hist = tuple(context_tokens)[-need:] if need else ()
        return (BOS,) * (need - len(hist)) + hist

    # -- candidate generation ----------------------------------------------

    def successors(self, history: Sequence[str], length: int | None) -> list[str]:
        """Tokens seen after any suffix of *history*, longest context first."""
        ctx_full = tuple(history[max(0, len(history) - (self.order - 1)):])
        out: list[str] = []
        seen = set()
        for j in range(len(ctx_full), 0, -1):
            ctx = ctx_full[-j:]
            table = self._succ.get(ctx)
            if table is None:
                table = defaultdict(list)
                counts = self.counts.get(ctx, {})
                for tok in sorted(counts, key=lambda t: (-counts[t], t)):
                    table[len(tok)].append(tok)
                    table[None].append(tok)
                self._succ[ctx] = table
            for tok in table.get(length, ()):
                if tok not in seen:
                    seen.add(tok)
                    out.append(tok)
        return out

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        rows = []
        for ctx, counter in self.counts.items():
            for tok, n in counter.items():
                rows.append([list(ctx), tok, n])
        rows.sort(key=lambda r: (len(r[0]), r[0], r[1]))
        return {"order": self.order, "k": self.k, "corpus_label": self.corpus_label, "ngrams": rows}

    @classmethod
    def from_dict(cls, d: dict) -> "NGramModel":
        counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
        for ctx, tok, n in d["ngrams"]:
            counts[tuple(ctx)][tok] = n
        return cls(order=d["order"], counts=dict(counts), corpus_label=d.get("corpus_label", ""), k=d.get("k", 0.01))


def _add_sequence(counts, order: int, context: Sequence[str], tokens: Sequence[str]) -> None:
    need = order - 1
    hist = list((BOS,) * max(0, need - len(context)) + tuple(context)[-need:])
    for tok in tokens:
        for j in range(0, order):
            ctx = tuple(hist[len(hist) - j:]) if j else ()
            counts[ctx][tok] += 1
        hist.append(tok)


def train_ngram(
    corpus: Iterable[str | tuple[str, str]],
    vocab: Vocabulary,
    order: int = 3,
    corpus_label: str = "",
    k: float = 0.01,
) -> NGramModel:
    """Count n-grams over segment texts.

    Items may be plain segment strings (history starts empty) or
    ``(context, segment)`` pairs, in which case the context's last tokens
    seed the history but are not themselves counted.
    """
    counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    n_items = 0
    for item in corpus:
        context, text = ("", item) if isinstance(item, str) else item
        ctx_tokens = tokenize(context, vocab).tokens if context else ()
        _add_sequence(counts, order, ctx_tokens, tokenize(text, vocab).tokens)
        n_items += 1
    if not n_items:
        raise EmptyCorpus("cannot train on an empty corpus")
    return NGramModel(order=order, counts=dict(counts), corpus_label=corpus_label, k=k)


def train_pair(
    responses: Sequence[str], vocab: Vocabulary, order: int = 3, corpus_label: str = "", k: float = 0.01
) -> tuple[NGramModel, NGramModel]:
    """Opening-segment model and context-conditioned inner-segment model."""
    if not responses:
        raise EmptyCorpus("cannot train on an empty corpus")
    first: list[tuple[str, str]] = []
    inner: list[tuple[str, str]] = []
    for text in responses:
        segs = ["".join(toks) for toks in _segment_tokens(text, vocab)]
        if not segs:
            continue
        first.append(("", segs[0]))
        inner.extend(zip(segs, segs[1:]))
    first_model = train_ngram(first, vocab, order, corpus_label, k)
    # a corpus of single-segment responses still needs an inner model
    inner_model = train_ngram(inner or first, vocab, order, corpus_label, k)
    return first_model, inner_model


# ---------------------------------------------------------------------------
# beam search


@dataclass(frozen=True)
class _Beam:
    score: float
    tokens: tuple[str, ...]
    history: tuple[str, ...]
    exact: bool = True


def _candidates(
    model: NGramModel, history: Sequence[str], length: int | None, fallback: int
) -> list[str]:
    cands = model.successors(history, length)
    pool = model.length_index.get(length, ()) if length is not None else model.vocab_tokens
    extra = 0
    seen = set(cands)
    for tok in pool:
        if extra >= fallback:
            break
        if tok not in seen:
            cands.append(tok)
            seen.add(tok)
            extra += 1
    return cands


def _nearest_lengths(model: NGramModel, length: int) -> list[int]:
    have = sorted(model.length_index)
    if not have:
        return []
    best = min(abs(L - length) for L in have)
    return [L for L in have if abs(L - length) == best]


def _select(expansions: list[_Beam], width: int, rng: random.Random | None, temperature: float) -> list[_Beam]:
    if len(expansions) <= width:
        return sorted(expansions, key=lambda b: -b.score)
    if rng is None or temperature <= 0:
        return heapq.nlargest(width, expansions, key=lambda b: b.score)
    # Gumbel top-k: a sample without replacement proportional to exp(score / T)
    keyed = [(b.score / temperature - math.log(-math.log(rng.random() or 1e-300)), b) for b in expansions]
    chosen = heapq.nlargest(width, keyed, key=lambda kb: kb[0])
    return sorted((b for _, b in chosen), key=lambda b: -b.score)


def beam_reconstruct(
    model: NGramModel,
    lengths: Sequence[int],
    context: str | None = None,
    beam_width: int = 16,
    k: int = 8,
    seed: int = 0,
    *,
    vocab: Vocabulary | None = None,
    temperature: float = 1.0,
    fallback: int = 8,
    hidden_prefix: int = 0,
    split_threshold: int | None = None,
    length_penalty: float = 10.0,
    length_normalize: bool = False,
) -> list[ScoredCandidate]:
    """Length-constrained beam search, repeated *k* times.

    Step *i* may only emit tokens of length ``lengths[i]``. The first run is
    a plain beam; the others sample the surviving beams (seeded) so repeated
    runs explore different hypotheses. *hidden_prefix* unknown-length slots
    are searched before the first length. A length above *split_threshold*
    may also be covered by two tokens, for deltas that merged buffered
    tokens. Lengths the model has never seen are replaced by the nearest
    known length at a cost of *length_penalty* nats and the candidate is
    flagged inexact.
    """
    if beam_width < 1 or k < 1:
        raise ValueError("beam_width and k must be >= 1")
    vocab = vocab or Vocabulary.default()
    ctx_tokens = tokenize(context, vocab).tokens if context else ()
    start = model.initial_history(ctx_tokens)
    slots: list[int | None] = [None] * hidden_prefix + list(lengths)
    pool: dict[str, float] = {}
    exact_of: dict[str, bool] = {}
    for run in range(k):
        rng = random.Random(f"{seed}:{run}") if run else None
        beams = [_Beam(0.0, (), start)]
        for L in slots:
            expansions: list[_Beam] = []
            for b in beams:
                expansions.extend(_expand(model, b, L, fallback, split_threshold, length_penalty))
            if not expansions:
                break
            beams = _select(expansions, beam_width, rng, temperature)
        else:
            for b in beams:
                text = "".join(b.tokens)
                score = b.score / max(len(b.tokens), 1) if length_normalize else b.score
                if text not in pool or score > pool[text]:
                    pool[text] = score
                    exact_of[text] = b.exact
    out = []
    for text, score in pool.items():
        exact = exact_of[text] and _retokenizes_to(text, lengths, hidden_prefix, vocab)
        out.append(ScoredCandidate(text, score, exact))
    out.sort(key=lambda c: (-c.log_score, c.text))
    return out


def _retokenizes_to(text: str, lengths: Sequence[int], hidden_prefix: int, vocab: Vocabulary) -> bool:
    got = tokenize(text, vocab).lengths
    return tuple(got[hidden_prefix:]) == tuple(lengths) and len(got) == len(lengths) + hidden_prefix


def _expand(
    model: NGramModel,
    beam: _Beam,
    length: int | None,
    fallback: int,
    split_threshold: int | None,
    penalty: float,
) -> list[_Beam]:
    out = []
    hist = beam.history
    targets = [length]
    exact = True
    if length is not None and length not in model.length_index:
        targets = _nearest_lengths(model, length)
        exact = False
    for L in targets:
        for tok in _candidates(model, hist, L, fallback):
            s = beam.score + model.logprob(hist, tok) - (0.0 if exact else penalty)
            out.append(_Beam(s, beam.tokens + (tok,), (hist + (tok,))[1:], beam.exact and exact))
    if split_threshold is not None and length is not None and length > split_threshold:
        for first in model.successors(hist, None):
            rest = length - len(first)
            if rest < 1 or rest not in model.length_index:
                continue
            h1 = (hist + (first,))[1:]
            s1 = beam.score + model.logprob(hist, first)
            for second in _candidates(model, h1, rest, 2):
                s = s1 + model.logprob(h1, second)
                out.append(_Beam(s, beam.tokens + (first, second), (h1 + (second,))[1:], False))
    return out


class NGramReconstructor:
    """Opening/inner n-gram pair behind the :class:`Reconstructor` interface."""

    def __init__(
        self,
        first: NGramModel,
        inner: NGramModel | None = None,
        vocab: Vocabulary | None = None,
        beam_width: int = 16,
        k: int = 8,
        seed: int = 0,
        **search_opts,
    ):
        self.first = first
        self.inner = inner or first
        self.vocab = vocab or Vocabulary.default()
        self.beam_width = beam_width
        self.k = k
        self.seed = seed
        self.search_opts = search_opts

    @classmethod
    def train(
        cls, responses: Sequence[str], vocab: Vocabulary, order: int = 3, corpus_label: str = "", **kw
    ) -> "NGramReconstructor":
        first, inner = train_pair(responses, vocab, order, corpus_label)
        return cls(first, inner, vocab, **kw)

    def _seed(self, lengths: Sequence[int], context: str) -> int:
        # depends only on the request so results don't hinge on call order
        return hash_seed(self.seed, tuple(lengths), context)

    def reconstruct_first(self, lengths, *, k=None, hidden_prefix=0):
        return beam_reconstruct(
            self.first, lengths, None, self.beam_width, k or self.k, self._seed(lengths, ""),
            vocab=self.vocab, hidden_prefix=hidden_prefix, **self.search_opts,
        )

    def reconstruct_inner(self, lengths, context, *, k=None):
        return beam_reconstruct(
            self.inner, lengths, context, self.beam_width, k or self.k, self._seed(lengths, context),
            vocab=self.vocab, **self.search_opts,
        )

    def save(self, path: str | Path) -> None:
        save_models(path, self.first, self.inner)


def hash_seed(seed: int, lengths: tuple[int, ...], context: str) -> int:
    payload = f"{seed}|{','.join(map(str, lengths))}|{context}".encode("utf-8")
    return zlib.crc32(payload)


def dumps_models(first: NGramModel, inner: NGramModel) -> str:
    return json.dumps({"first": first.to_dict(), "inner": inner.to_dict()}) + "\n"


def save_models(path: str | Path, first: NGramModel, inner: NGramModel) -> None:
    """JSON file holding both models; gzip-compressed when *path* ends in .gz."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:
        fh.write(dumps_models(first, inner))


def load_models(path: str | Path) -> tuple[NGramModel, NGramModel]:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        data = json.load(fh)
    return NGramModel.from_dict(data["first"]), NGramModel.from_dict(data["inner"])

"""Reconstruction quality metrics and attack-success aggregation."""

from __future__ import annotations

import re
import string
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

SUCCESS_PHI = 0.5
_PUNCT_RE = re.compile(f"[{re.escape(string.punctuation)}]")


def levenshtein(a: str, b: str) -> int:
    """Character-level edit distance (unit-cost insert/delete/substitute)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_distance_norm(a: str, b: str) -> float:
    """Levenshtein distance divided by the longer string's length."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def words(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _PUNCT_RE.sub("", text.lower()).split()


def rouge1_precision(cand: str, ref: str) -> float:
    c, r = words(cand), words(ref)
    if not c:
        return 0.0
    ref_counts = Counter(r)
    overlap = sum(min(n, ref_counts[w]) for w, n in Counter(c).items())
    return overlap / len(c)


def _lcs(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rougeL(cand: str, ref: str) -> float:
    """Longest-common-subsequence precision over words."""
    c, r = words(cand), words(ref)
    if not c:
        return 0.0
    return _lcs(c, r) / len(c)


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return one row per text."""
        ...


class TermFrequencyEmbedder:
    """Bag-of-words counts over the vocabulary of the texts being compared.

    A stand-in for a sentence-transformer: cosine is in [0, 1] and reflects
    shared vocabulary rather than meaning.
    """

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        counts = [Counter(words(t)) for t in texts]
        vocab = sorted(set().union(*counts)) if counts else []
        index = {w: i for i, w in enumerate(vocab)}
        out = np.zeros((len(texts), len(vocab)))
        for row, c in enumerate(counts):
            for w, n in c.items():
                out[row, index[w]] = n
        return out


class HashingEmbedder:
    """Fixed-width term counts, words hashed into *dim* buckets.

    Unlike :class:`TermFrequencyEmbedder` the vector for a text does not
    depend on what it is compared with, so it can run out of process.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            for w in words(text):
                out[row, zlib.crc32(w.encode("utf-8")) % self.dim] += 1
        return out


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_phi(cand: str, ref: str, embedder: EmbeddingProvider | None = None) -> float:
    """Cosine similarity of the two texts' embeddings; 0.0 if either is empty."""
    if not cand.strip() or not ref.strip():
        return 0.0
    embedder = embedder or TermFrequencyEmbedder()
    vecs = np.asarray(embedder.embed([cand, ref]), dtype=float)
    if vecs.shape[0] != 2:
        raise ValueError(f"embedder returned {vecs.shape[0]} rows for 2 texts")
    return cosine(vecs[0], vecs[1])


@dataclass(frozen=True)
class EvalResult:
    ed: float
    rouge1: float
    rougeL: float
    phi: float
    success: bool
    # raw counts for corpus-level (micro) edit distance
    edits: int = 0
    max_len: int = 0

    def as_dict(self) -> dict:
        return {
            "ed": self.ed, "rouge1": self.rouge1, "rougeL": self.rougeL,
            "phi": self.phi, "success": self.success,
        }


def evaluate_pair(cand: str, ref: str, embedder: EmbeddingProvider | None = None) -> EvalResult:
    phi = cosine_phi(cand, ref, embedder)
    edits = levenshtein(cand, ref)
    longest = max(len(cand), len(ref))
    return EvalResult(
        ed=edits / longest if longest else 0.0,
        rouge1=rouge1_precision(cand, ref),
        rougeL=rougeL(cand, ref),
        phi=phi,
        success=phi > SUCCESS_PHI,
        edits=edits,
        max_len=longest,
    )


@dataclass(frozen=True)
class Thresholds:
    phi_success: float = SUCCESS_PHI
    phi_high: float = 0.9
    rouge_high: float = 0.9
    ed_low: float = 0.1
    eps: float = 1e-9


# column label -> predicate on an EvalResult
def _columns(th: Thresholds):
    return {
        "ASR": lambda r: r.phi > th.phi_success,
        f"phi>{th.phi_high:g}": lambda r: r.phi > th.phi_high,
        "phi=1.0": lambda r: r.phi >= 1.0 - th.eps,
        f"R1>={th.rouge_high:g}": lambda r: r.rouge1 >= th.rouge_high - th.eps,
        "R1=1.0": lambda r: r.rouge1 >= 1.0 - th.eps,
        f"RL>={th.rouge_high:g}": lambda r: r.rougeL >= th.rouge_high - th.eps,
        "RL=1.0": lambda r: r.rougeL >= 1.0 - th.eps,
        f"ED<={th.ed_low:g}": lambda r: r.ed <= th.ed_low + th.eps,
        "ED=0.0": lambda r: r.ed <= th.eps,
    }


@dataclass(frozen=True)
class BatchSummary:
    n: int
    # percentages per column, in column order
    columns: dict[str, float]
    mean_phi: float
    mean_ed: float
    micro_ed: float

    def render(self) -> str:
        head = ["n"] + list(self.columns) + ["mean_phi", "mean_ED", "micro_ED"]
        row = [str(self.n)] + [f"{v:.2f}" for v in self.columns.values()] + [
            f"{self.mean_phi:.4f}", f"{self.mean_ed:.4f}", f"{self.micro_ed:.4f}",
        ]
        widths = [max(len(h), len(v)) for h, v in zip(head, row)]
        fmt = lambda cells: " | ".join(c.rjust(w) for c, w in zip(cells, widths))
        return "\n".join([fmt(head), "-+-".join("-" * w for w in widths), fmt(row)]) + "\n"

    def as_dict(self) -> dict:
        return {
            "n": self.n, "columns": self.columns, "mean_phi": self.mean_phi,
            "mean_ed": self.mean_ed, "micro_ed": self.micro_ed,
        }


def summarize(results: Sequence[EvalResult], thresholds: Thresholds | None = None) -> BatchSummary:
    if not results:
        raise ValueError("cannot summarize an empty batch")
    th = thresholds or Thresholds()
    n = len(results)
    cols = {name: 100.0 * sum(map(pred, results)) / n for name, pred in _columns(th).items()}
    total_len = sum(r.max_len for r in results)
    return BatchSummary(
        n=n,
        columns=cols,
        mean_phi=sum(r.phi for r in results) / n,
        mean_ed=sum(r.ed for r in results) / n,
        micro_ed=sum(r.edits for r in results) / total_len if total_len else 0.0,
    )


def evaluate_batch(
    pairs: Iterable[tuple[str, str]],
    thresholds: Thresholds | None = None,
    embedder: EmbeddingProvider | None = None,
) -> BatchSummary:
    """Score (candidate, reference) pairs and aggregate into percentage columns."""
    results = [evaluate_pair(c, r, embedder) for c, r in pairs]
    return summarize(results, thresholds)


def thresholds_from_mapping(d: Mapping[str, float]) -> Thresholds:
    return Thresholds(**{k: float(v) for k, v in d.items()})


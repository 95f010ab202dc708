"""Greedy longest-match tokenizer over a word-list vocabulary.

Word tokens carry their leading space (``" sorry"``), punctuation is its own
token, and anything the vocabulary cannot cover falls back to one token per
character. Only the length sequence matters downstream, so this reproduces
what a BPE tokenizer leaks on ordinary English without learned merges.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

PUNCTUATION = frozenset(".,!?:;'\"")

# Tokens beyond the word list that a chat tokenizer always has: newline runs
# (a colon is joined with the following blank line, giving the (3,1,1) list
# opener), apostrophe suffixes, and a few symbols.
STRUCTURAL_TOKENS = (
    "\n", "\n\n", ":\n", ":\n\n",
    "'s", "'m", "'t", "'re", "'ve", "'ll", "'d",
    "-", " -", "(", " (", ")", "/", "%", "&", " &", "$", " $",
)

SPACE_MARK = "\u2581"  # ▁ encodes a literal leading space in vocab files


@dataclass(frozen=True)
class Vocabulary:
    tokens: frozenset[str]
    name: str = "custom"

    def __post_init__(self):
        tokens = frozenset(self.tokens) | PUNCTUATION
        if any(not t for t in tokens):
            raise ValueError("vocabulary tokens must be non-empty")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "_max_len", max(len(t) for t in tokens))

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def max_token_len(self) -> int:
        return self._max_len

    @classmethod
    def from_words(cls, words: Iterable[str], name: str = "words") -> "Vocabulary":
        """Expand bare words into their bare, capitalized and space-prefixed forms."""
        tokens: set[str] = set(STRUCTURAL_TOKENS)
        for w in words:
            w = w.strip()
            if not w:
                continue
            for form in {w, w[0].upper() + w[1:]}:
                tokens.add(form)
                tokens.add(" " + form)
        return cls(frozenset(tokens), name)

    def extend(self, words: Iterable[str]) -> "Vocabulary":
        extra = Vocabulary.from_words(words).tokens
        return Vocabulary(self.tokens | extra, self.name)

    @classmethod
    def default(cls) -> "Vocabulary":
        return _default_vocabulary()


@lru_cache(maxsize=1)
def _default_vocabulary() -> Vocabulary:
    text = resources.files("tokenleak.data").joinpath("words.txt").read_text("utf-8")
    words = [w for line in text.splitlines() if not line.startswith("#") for w in line.split()]
    digits = [str(i) for i in range(1000)]
    vocab = Vocabulary.from_words(words + digits, name="default")
    return vocab


def _decode_vocab_line(line: str) -> str:
    line = line.replace(SPACE_MARK, " ")
    return line.replace("\\n", "\n").replace("\\t", "\t")


def _encode_vocab_token(token: str) -> str:
    if "\\n" in token or "\\t" in token:
        raise ValueError(f"token {token!r} is ambiguous in the vocab file format")
    return token.replace(" ", SPACE_MARK).replace("\n", "\\n").replace("\t", "\\t")


def load_vocabulary(path: str | Path, name: str | None = None) -> Vocabulary:
    """Read a vocab file: one token per line, ``▁`` for a literal space,
    ``\\n``/``\\t`` escapes for newlines and tabs."""
    tokens = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if line:
                tokens.add(_decode_vocab_line(line))
    return Vocabulary(frozenset(tokens), name or Path(path).stem)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok in sorted(vocab.tokens):
            fh.write(_encode_vocab_token(tok) + "\n")


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    lengths: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return "".join(self.tokens)

    def byte_lengths(self) -> list[int]:
        return [len(t.encode("utf-8")) for t in self.tokens]

    def offsets(self) -> list[int]:
        """Character offset at which each token starts, plus the end offset."""
        out = [0]
        for n in self.lengths:
            out.append(out[-1] + n)
        return out


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """Split *text* greedily, longest vocabulary match first.

    Positions no vocabulary entry covers emit a single-character token, so the
    function is total and ``"".join(tokens) == text`` always holds.
    """
    tokens: list[str] = []
    table = vocab.tokens
    max_len = vocab.max_token_len
    i, n = 0, len(text)
    while i < n:
        for size in range(min(max_len, n - i), 0, -1):
            piece = text[i:i + size]
            if piece in table:
                break
        else:
            piece = text[i]
        tokens.append(piece)
        i += len(piece)
    return TokenSequence(tuple(tokens), tuple(len(t) for t in tokens))


def lengths_of(seq: TokenSequence) -> list[int]:
    return list(seq.lengths)


def token_lengths(text: str, vocab: Vocabulary) -> list[int]:
    return list(tokenize(text, vocab).lengths)

"""Line protocol for out-of-process reconstructors and embedders.

Requests and replies are single lines of UTF-8 text; free text is escaped so
it never contains a raw newline::

    FIRST 0 5 5 8 6 5 5 1          (0 marks a hidden-length slot)
    INNER 5 3 3 1 | <context>
    EMBED <text>

Replies are ``CAND <log_score> <text>`` lines closed by ``END`` for the two
reconstruction requests, ``VEC <float> ...`` for ``EMBED``, or
``ERR <message>`` for any of them.

Run ``python3 -m tokenleak.adapters ngram MODEL`` or
``python3 -m tokenleak.adapters hash-embed`` to serve the built-in
implementations over standard streams.
"""

from __future__ import annotations

import argparse
import shlex
import subprocess
import sys
from typing import Sequence, TextIO

import numpy as np

from .metrics import HashingEmbedder
from .reconstruct import NGramReconstructor, ScoredCandidate, load_models
from .tokenizer import Vocabulary, load_vocabulary


class ProtocolError(RuntimeError):
    pass


def escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r").replace("|", "\\p")


def unescape(text: str) -> str:
    out = []
    it = iter(text)
    for c in it:
        if c != "\\":
            out.append(c)
            continue
        nxt = next(it, "")
        out.append({"n": "\n", "r": "\r", "p": "|", "\\": "\\"}.get(nxt, "\\" + nxt))
    return "".join(out)


def format_lengths(lengths: Sequence[int], hidden_prefix: int = 0) -> str:
    return " ".join(["0"] * hidden_prefix + [str(int(t)) for t in lengths])


def parse_lengths(field: str) -> tuple[list[int], int]:
    """Lengths plus the count of leading hidden (``0``) slots."""
    try:
        values = [int(x) for x in field.split()]
    except ValueError as exc:
        raise ProtocolError(f"bad lengths field {field!r}") from exc
    hidden = 0
    while hidden < len(values) and values[hidden] == 0:
        hidden += 1
    rest = values[hidden:]
    if any(t < 1 for t in rest):
        raise ProtocolError("lengths after the hidden prefix must be >= 1")
    return rest, hidden


def format_request_first(lengths: Sequence[int], hidden_prefix: int = 0) -> str:
    return f"FIRST {format_lengths(lengths, hidden_prefix)}"


def format_request_inner(lengths: Sequence[int], context: str) -> str:
    return f"INNER {format_lengths(lengths)} | {escape(context)}"


def format_candidates(cands: Sequence[ScoredCandidate]) -> list[str]:
    lines = [f"CAND {c.log_score!r} {escape(c.text)}" for c in cands]
    lines.append("END")
    return lines


def parse_candidate(line: str, vocab: Vocabulary | None, lengths, hidden_prefix: int) -> ScoredCandidate:
    parts = line.split(" ", 2)
    if len(parts) < 2 or parts[0] != "CAND":
        raise ProtocolError(f"expected CAND line, got {line!r}")
    try:
        score = float(parts[1])
    except ValueError as exc:
        raise ProtocolError(f"bad score in {line!r}") from exc
    text = unescape(parts[2]) if len(parts) > 2 else ""
    exact = True
    if vocab is not None:
        from .reconstruct import _retokenizes_to

        exact = _retokenizes_to(text, lengths, hidden_prefix, vocab)
    return ScoredCandidate(text, score, exact)


class _LineProcess:
    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True,
            encoding="utf-8", bufsize=1,
        )

    def send(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise ProtocolError(f"external process exited with {self.proc.returncode}")
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv(self) -> str:
        line = self.proc.stdout.readline()
        if not line:
            raise ProtocolError("external process closed its output")
        line = line.rstrip("\n")
        if line.startswith("ERR"):
            raise ProtocolError(line[4:] or "external process reported an error")
        return line

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ExternalReconstructor(_LineProcess):
    """Reconstructor backed by a process speaking the line protocol.

    Candidates are re-sorted by score and, when a vocabulary is given,
    re-checked against the requested lengths.
    """

    def __init__(self, command: str | Sequence[str], vocab: Vocabulary | None = None):
        super().__init__(command)
        self.vocab = vocab

    def _collect(self, lengths, hidden_prefix) -> list[ScoredCandidate]:
        out = []
        while (line := self.recv()) != "END":
            out.append(parse_candidate(line, self.vocab, lengths, hidden_prefix))
        out.sort(key=lambda c: -c.log_score)
        return out

    def reconstruct_first(self, lengths, *, k=None, hidden_prefix=0):
        self.send(format_request_first(lengths, hidden_prefix))
        return self._collect(lengths, hidden_prefix)

    def reconstruct_inner(self, lengths, context, *, k=None):
        self.send(format_request_inner(lengths, context))
        return self._collect(lengths, 0)


class ExternalEmbedder(_LineProcess):
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for text in texts:
            self.send(f"EMBED {escape(text)}")
            line = self.recv()
            if not line.startswith("VEC"):
                raise ProtocolError(f"expected VEC line, got {line!r}")
            try:
                rows.append([float(x) for x in line[3:].split()])
            except ValueError as exc:
                raise ProtocolError(f"bad vector in {line!r}") from exc
        if len({len(r) for r in rows}) > 1:
            raise ProtocolError("embedding dimensions differ between texts")
        return np.array(rows, dtype=float)


def embedder_from_spec(spec: str | None):
    """``None``/``tf`` for term frequency, ``hash`` or ``cmd:<program>``."""
    from .metrics import TermFrequencyEmbedder

    if spec in (None, "", "tf"):
        return TermFrequencyEmbedder()
    if spec == "hash":
        return HashingEmbedder()
    if spec.startswith("cmd:"):
        return ExternalEmbedder(spec[4:])
    raise ValueError(f"unknown embedder {spec!r}")


# ---------------------------------------------------------------------------
# servers


def handle_request(line: str, reconstructor=None, embedder=None) -> list[str]:
    """Answer one protocol request; errors become an ``ERR`` line."""
    try:
        verb, _, rest = line.partition(" ")
        if verb == "FIRST" and reconstructor is not None:
            lengths, hidden = parse_lengths(rest)
            return format_candidates(reconstructor.reconstruct_first(lengths, hidden_prefix=hidden))
        if verb == "INNER" and reconstructor is not None:
            field, sep, ctx = rest.partition(" | ")
            if not sep:
                field, sep, ctx = rest.partition("|")
            lengths, hidden = parse_lengths(field)
            if hidden:
                raise ProtocolError("INNER requests cannot have hidden slots")
            return format_candidates(reconstructor.reconstruct_inner(lengths, unescape(ctx)))
        if verb == "EMBED" and embedder is not None:
            vec = embedder.embed([unescape(rest)])[0]
            return ["VEC " + " ".join(repr(float(x)) for x in vec)]
        raise ProtocolError(f"unsupported request {verb!r}")
    except Exception as exc:  # reported to the client, never fatal to the server
        return [f"ERR {escape(str(exc))}"]


def serve(stdin: TextIO, stdout: TextIO, reconstructor=None, embedder=None) -> None:
    for raw in stdin:
        line = raw.rstrip("\n")
        if not line:
            continue
        for out in handle_request(line, reconstructor, embedder):
            stdout.write(out + "\n")
        stdout.flush()


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="python3 -m tokenleak.adapters")
    sub = ap.add_subparsers(dest="what", required=True)
    ng = sub.add_parser("ngram", help="serve an n-gram reconstructor")
    ng.add_argument("model")
    ng.add_argument("--vocab")
    ng.add_argument("--beam", type=int, default=16)
    ng.add_argument("--k", type=int, default=8)
    ng.add_argument("--seed", type=int, default=0)
    he = sub.add_parser("hash-embed", help="serve the hashing embedder")
    he.add_argument("--dim", type=int, default=256)
    args = ap.parse_args(argv)
    if args.what == "ngram":
        vocab = load_vocabulary(args.vocab) if args.vocab else Vocabulary.default()
        first, inner = load_models(args.model)
        rec = NGramReconstructor(first, inner, vocab, beam_width=args.beam, k=args.k, seed=args.seed)
        serve(sys.stdin, sys.stdout, reconstructor=rec)
    else:
        serve(sys.stdin, sys.stdout, embedder=HashingEmbedder(args.dim))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

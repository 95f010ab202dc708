"""Turn a response corpus into length-to-text training prompts.

Every response is segmented; its opening segment becomes a first-segment
example and every later segment an inner-segment example whose prompt
carries the preceding segment's text as context. Prompts spell token
lengths as ``_n`` special tokens.
"""

from __future__ import annotations

import enum
import io
import json
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .segmentation import segment_text
from .simulator import BufferingModel, TransmissionPolicy, group_tokens
from .tokenizer import Vocabulary, tokenize

FIRST_INSTRUCTION = "Translate the Special Tokens to English."
INNER_INSTRUCTION = "Translate the Special Tokens to English, given the context."


class TargetModel(enum.Enum):
    FIRST_SEGMENT = "first"
    INNER_SEGMENT = "inner"


@dataclass(frozen=True)
class TrainingExample:
    model_target: TargetModel
    prompt_text: str
    target_text: str

    def to_json(self) -> str:
        return json.dumps(
            {"model": self.model_target.value, "prompt": self.prompt_text, "target": self.target_text},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "TrainingExample":
        d = json.loads(line)
        return cls(TargetModel(d["model"]), d["prompt"], d["target"])


def special_tokens(lengths: Sequence[int]) -> str:
    return " ".join(f"_{t}" for t in lengths)


def render_first_prompt(lengths: Sequence[int]) -> str:
    return f"{FIRST_INSTRUCTION}\nSpecial Tokens: {special_tokens(lengths)}"


def render_inner_prompt(lengths: Sequence[int], context: str) -> str:
    return f"{INNER_INSTRUCTION}\nContext: {context}\nSpecial Tokens: {special_tokens(lengths)}"


def augment_lengths(
    lengths: Sequence[int], policy: TransmissionPolicy, rng: random.Random, first: bool
) -> list[int]:
    """Lengths as a vendor policy would expose them.

    In an opening segment the preamble tokens vanish and the first-pair
    buffering probability applies; inner segments only see the inner
    probability.
    """
    if not first:
        buf = policy.buffering
        policy = replace(
            policy,
            preamble_tokens_hidden=0,
            buffering=BufferingModel(buf.inner_group_prob, buf.inner_group_prob),
        )
    groups = group_tokens(len(lengths), policy, rng)
    if first and policy.preamble_tokens_hidden and not policy.batch:
        groups = groups[1:]
    return [sum(lengths[i] for i in g) for g in groups]


def _render_segment(text: str, strip: bool) -> str:
    return text.lstrip(" ") if strip else text


def build_dataset(
    corpus: Iterable[str | Sequence[str]],
    vocab: Vocabulary,
    augment: TransmissionPolicy | None = None,
    seed: int = 0,
    strip_segments: bool = True,
) -> list[TrainingExample]:
    """Training examples for every response in *corpus*.

    A response may be a string, segmented here, or a list of segment
    strings used as given. With *strip_segments* each segment loses its
    leading spaces before tokenizing, so the first word of an inner segment
    is counted without the space that separates it from the previous one.
    """
    out: list[TrainingExample] = []
    for i, response in enumerate(corpus):
        segs = segment_text(response, vocab) if isinstance(response, str) else list(response)
        segs = [_render_segment(s, strip_segments) for s in segs]
        segs = [s for s in segs if s]
        prev = None
        for j, seg in enumerate(segs):
            lengths = list(tokenize(seg, vocab).lengths)
            if augment is not None:
                lengths = augment_lengths(lengths, augment, random.Random(f"{seed}:{i}:{j}"), j == 0)
            if prev is None:
                out.append(TrainingExample(TargetModel.FIRST_SEGMENT, render_first_prompt(lengths), seg))
            else:
                out.append(TrainingExample(TargetModel.INNER_SEGMENT, render_inner_prompt(lengths, prev), seg))
            prev = seg
    return out


def write_dataset(examples: Iterable[TrainingExample], out: str | Path | TextIO) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            write_dataset(examples, fh)
        return
    for ex in examples:
        out.write(ex.to_json() + "\n")


def read_dataset(src: str | Path | TextIO) -> list[TrainingExample]:
    if isinstance(src, (str, Path)):
        with open(src, encoding="utf-8") as fh:
            return read_dataset(fh)
    return [TrainingExample.from_json(line) for line in src if line.strip()]


def dumps_dataset(examples: Iterable[TrainingExample]) -> str:
    buf = io.StringIO()
    write_dataset(examples, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class CorpusStats:
    responses: int
    segments: int
    tokens: int

    @property
    def segments_per_response(self) -> float:
        return self.segments / self.responses if self.responses else math.nan

    @property
    def tokens_per_segment(self) -> float:
        return self.tokens / self.segments if self.segments else math.nan

    def render(self) -> str:
        return (
            f"responses={self.responses}\nsegments={self.segments}\ntokens={self.tokens}\n"
            f"segments_per_response={self.segments_per_response:.2f}\n"
            f"tokens_per_segment={self.tokens_per_segment:.2f}\n"
        )


def corpus_stats(corpus: Iterable[str], vocab: Vocabulary) -> CorpusStats:
    n_resp = n_seg = n_tok = 0
    for response in corpus:
        n_resp += 1
        n_seg += len(segment_text(response, vocab))
        n_tok += len(tokenize(response, vocab))
    return CorpusStats(n_resp, n_seg, n_tok)

"""Command-line entry point: ``tokenleak <subcommand> ...``.

Every subcommand writes its main output to ``--out`` (``-`` for standard
output) and a one-line JSON status to standard error. Exit codes: 0 on
success, 2 for configuration problems (bad arguments, missing or malformed
input files), 3 when a processing stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

from . import adapters
from .corpus import escape_record, load_corpus, unescape_record
from .dataprep import build_dataset, corpus_stats, dumps_dataset
from .extraction import (
    ExtractionError,
    IdentifyOptions,
    TokenLengthSequence,
    defragment,
    estimate_overhead,
    extract_cumulative,
    extract_pertoken,
    format_lengths_file,
    identify_messages,
    parse_lengths_file,
)
from .metrics import Thresholds, evaluate_pair, summarize, thresholds_from_mapping
from .mitigation import measure_leakage, parse_mitigation
from .reconstruct import (
    NGramReconstructor,
    OracleReconstructor,
    load_models,
    reconstruct_response,
    dumps_models,
    save_models,
    train_pair,
)
from .segmentation import format_segments, parse_segments, segment
from .simulator import Mode, PolicyError, TransmissionPolicy, load_policy, simulate_corpus, simulate_response, with_seed
from .tokenizer import Vocabulary, load_vocabulary
from .trace import TraceFormatError, filter_stream, format_trace, load_trace, parse_trace, payload_sizes

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

log = logging.getLogger("tokenleak")


class ConfigError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, stream_id: str, message: str):
        # keep all three in args so the error survives a worker process
        super().__init__(stage, stream_id, message)
        self.stage = stage
        self.stream_id = stream_id
        self.message = message

    def __str__(self) -> str:
        return f"stage {self.stage} failed for stream {self.stream_id}: {self.message}"


# ---------------------------------------------------------------------------
# io helpers


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    Path(path).write_text(text, encoding="utf-8")


def _vocab(path: str | None) -> Vocabulary:
    if not path:
        return Vocabulary.default()
    try:
        return load_vocabulary(path)
    except OSError as exc:
        raise ConfigError(f"cannot read vocabulary {path}: {exc.strerror}") from None


def _policy(path: str) -> TransmissionPolicy:
    try:
        return load_policy(path)
    except OSError as exc:
        raise ConfigError(f"cannot read policy {path}: {exc.strerror}") from None
    except (ValueError, PolicyError) as exc:
        raise ConfigError(f"bad policy {path}: {exc}") from None


def _corpus(path: str) -> list[str]:
    if path == "-":
        return [unescape_record(line.rstrip("\n")) for line in sys.stdin if line.strip()]
    try:
        return load_corpus(path)
    except OSError as exc:
        raise ConfigError(f"cannot read corpus {path}: {exc.strerror}") from None


def _corpus_text(responses: Sequence[str]) -> str:
    return "".join(escape_record(r) + "\n" for r in responses)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> dict:
    vocab = _vocab(args.vocab)
    policy = _policy(args.policy)
    if args.seed is not None:
        policy = with_seed(policy, args.seed)
    corpus = _corpus(args.corpus)
    if not corpus:
        raise ConfigError("corpus is empty")
    trace, truths = simulate_corpus(corpus, vocab, policy)
    _write_text(args.out, format_trace(trace))
    if args.truth:
        rows = [
            json.dumps({"stream_id": p, "token_lengths": list(t.token_lengths), "groups": [list(g) for g in t.groups],
                        "message_sizes": list(t.message_sizes)})
            for p, t in zip(trace.stream_ids(), truths)
        ]
        _write_text(args.truth, "\n".join(rows) + "\n")
    return {"responses": len(corpus), "packets": len(trace)}


def extract_stream(
    sizes: Sequence[int], mode: Mode, h: int | None, opts: IdentifyOptions
) -> TokenLengthSequence:
    if mode is Mode.CUMULATIVE:
        return extract_cumulative(identify_messages(sizes, opts), h)
    if opts.max_fragment_payload:
        sizes = defragment(sizes, opts.max_fragment_payload, opts.fragment_header)[0]
    return extract_pertoken(sizes, estimate_overhead(sizes) if h is None else h)


def cmd_extract(args) -> dict:
    try:
        trace = parse_trace(sys.stdin) if args.trace == "-" else load_trace(args.trace)
    except OSError as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc.strerror}") from None
    except TraceFormatError as exc:
        raise ConfigError(f"bad trace {args.trace}: {exc}") from None
    mode = Mode(args.mode)
    opts = IdentifyOptions(min_run=args.min_run, max_fragment_payload=args.max_payload, fragment_header=args.header)
    streams = [args.stream] if args.stream else trace.stream_ids()
    if not streams:
        raise StageError("extract", "-", "trace has no streams")
    out = {}
    for sid in streams:
        sizes = payload_sizes(filter_stream(trace, sid))
        try:
            out[sid] = extract_stream(sizes, mode, args.h, opts)
        except ExtractionError as exc:
            raise StageError("extract", sid, str(exc)) from None
    if len(out) == 1 and args.stream:
        _write_text(args.out, format_lengths_file(next(iter(out.values()))))
    else:
        _write_text(args.out, format_lengths_file(out))
    return {"streams": len(out), "tokens": sum(len(s) for s in out.values())}


def _lengths_input(path: str) -> dict[str, TokenLengthSequence]:
    try:
        seqs = parse_lengths_file(_read_text(path))
    except ExtractionError as exc:
        raise ConfigError(f"bad lengths file {path}: {exc}") from None
    if not seqs:
        raise ConfigError(f"no lengths in {path}")
    return seqs


def cmd_segment(args) -> dict:
    seqs = _lengths_input(args.lengths)
    parts = []
    n = 0
    for sid, seq in seqs.items():
        segs = segment(seq.lengths, args.min_tokens)
        n += len(segs)
        parts.append(format_segments(segs, sid))
    _write_text(args.out, "".join(parts))
    return {"streams": len(seqs), "segments": n}


def cmd_train(args) -> dict:
    vocab = _vocab(args.vocab)
    corpus = _corpus(args.corpus)
    if not corpus:
        raise ConfigError("corpus is empty")
    first, inner = train_pair(corpus, vocab, args.order, args.label)
    if args.out == "-":
        _write_text("-", dumps_models(first, inner))
    else:
        save_models(args.out, first, inner)
    return {"responses": len(corpus), "first_vocab": len(first.vocab_tokens), "inner_vocab": len(inner.vocab_tokens)}


def _make_reconstructor(kind: str, model: str | None, vocab: Vocabulary, k: int, beam: int, seed: int,
                        train_corpus: Sequence[str] | None = None, split_buffered: bool = False):
    if kind.startswith("cmd:"):
        return adapters.ExternalReconstructor(kind[4:], vocab)
    opts = {"split_threshold": 15} if split_buffered else {}
    if kind == "oracle":
        if not train_corpus:
            raise ConfigError("oracle reconstructor needs a corpus")
        return OracleReconstructor(train_corpus, vocab)
    if kind != "ngram":
        raise ConfigError(f"unknown reconstructor {kind!r}")
    if model:
        try:
            first, inner = load_models(model)
        except OSError as exc:
            raise ConfigError(f"cannot read model {model}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad model file {model}: {exc}") from None
        return NGramReconstructor(first, inner, vocab, beam_width=beam, k=k, seed=seed, **opts)
    if train_corpus:
        return NGramReconstructor.train(train_corpus, vocab, beam_width=beam, k=k, seed=seed, **opts)
    raise ConfigError("n-gram reconstruction needs --model or a training corpus")


def cmd_reconstruct(args) -> dict:
    vocab = _vocab(args.vocab)
    if args.segments:
        try:
            segmented = parse_segments(_read_text(args.segments))
        except ValueError as exc:
            raise ConfigError(f"bad segments file: {exc}") from None
        inputs = {sid: (segs, 0) for sid, segs in segmented.items()}
    else:
        seqs = _lengths_input(args.lengths)
        inputs = {sid: (segment(s.lengths).segments, s.hidden_prefix_count) for sid, s in seqs.items()}
    kind = f"cmd:{args.external}" if args.external else "ngram"
    rec = _make_reconstructor(kind, args.model, vocab, args.k, args.beam, args.seed,
                              split_buffered=args.split_buffered)
    texts, cand_rows = [], []
    try:
        for sid, (segs, hidden) in inputs.items():
            try:
                text, per_seg = reconstruct_response(rec, segs, args.k, hidden)
            except (ValueError, adapters.ProtocolError) as exc:
                raise StageError("reconstruct", sid or "-", str(exc)) from None
            texts.append(text)
            cand_rows.append(json.dumps({"stream_id": sid, "text": text, "segments": [asdict(c) for c in per_seg]}))
    finally:
        if hasattr(rec, "close"):
            rec.close()
    _write_text(args.out, _corpus_text(texts))
    if args.candidates:
        _write_text(args.candidates, "\n".join(cand_rows) + "\n")
    return {"streams": len(inputs)}


def cmd_dataprep(args) -> dict:
    vocab = _vocab(args.vocab)
    corpus = _corpus(args.corpus)
    if not corpus:
        raise ConfigError("corpus is empty")
    augment = _policy(args.augment) if args.augment else None
    examples = build_dataset(corpus, vocab, augment, args.seed, strip_segments=not args.keep_spaces)
    _write_text(args.out, dumps_dataset(examples))
    if args.stats:
        _write_text(args.stats, corpus_stats(corpus, vocab).render())
    return {"responses": len(corpus), "examples": len(examples)}


def _thresholds(path: str | None) -> Thresholds:
    if not path:
        return Thresholds()
    try:
        return thresholds_from_mapping(json.loads(_read_text(path)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad thresholds file {path}: {exc}") from None


def cmd_evaluate(args) -> dict:
    preds = _corpus(args.pred)
    truth = _corpus(args.truth)
    if len(preds) != len(truth):
        raise ConfigError(f"{len(preds)} predictions for {len(truth)} references")
    if not truth:
        raise ConfigError("nothing to evaluate")
    try:
        embedder = adapters.embedder_from_spec(args.embedder)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        results = [evaluate_pair(p, t, embedder) for p, t in zip(preds, truth)]
    except Exception as exc:
        raise StageError("evaluate", "-", str(exc)) from None
    finally:
        if hasattr(embedder, "close"):
            embedder.close()
    summary = summarize(results, _thresholds(args.thresholds))
    _write_text(args.out, json.dumps(summary.as_dict(), indent=2) + "\n" if args.json else summary.render())
    if args.rows:
        _write_text(args.rows, "".join(json.dumps(r.as_dict()) + "\n" for r in results))
    return {"pairs": len(results), "asr": summary.columns["ASR"]}


def cmd_mitigate(args) -> dict:
    vocab = _vocab(args.vocab)
    policy = _policy(args.policy)
    corpus = _corpus(args.corpus)
    if not corpus:
        raise ConfigError("corpus is empty")
    try:
        mitigation = parse_mitigation(args.apply)
    except PolicyError as exc:
        raise ConfigError(str(exc)) from None
    dictionary = _vocab(args.dictionary) if args.dictionary else None
    try:
        report = measure_leakage(corpus, policy, mitigation, vocab, dictionary)
    except (ExtractionError, ValueError) as exc:
        raise StageError("mitigate", "-", str(exc)) from None
    _write_text(args.report, report.render())
    return {"mitigation": report.mitigation, "exact_recovery_rate": report.exact_recovery_rate}


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    corpus: str
    policy: str
    vocab: str | None = None
    model: str | None = None
    train_corpus: str | None = None
    reconstructor: str = "ngram"
    seed: int = 0
    k: int = 8
    beam_width: int = 16
    # "policy": the eavesdropper knows the overhead; "unknown" or an integer
    attacker_h: str = "policy"
    embedder: str | None = None
    thresholds: dict = field(default_factory=dict)
    split_buffered: bool = False
    jobs: int = 1

    def validate(self) -> None:
        for name in ("corpus", "policy", "vocab", "model", "train_corpus"):
            path = getattr(self, name)
            if path and path != "-" and not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")
        if self.k < 1 or self.beam_width < 1 or self.jobs < 1:
            raise ConfigError("k, beam_width and jobs must be >= 1")
        if self.attacker_h not in ("policy", "unknown"):
            try:
                int(self.attacker_h)
            except ValueError:
                raise ConfigError("attacker_h must be 'policy', 'unknown' or an integer") from None

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            data = json.loads(_read_text(path))
        except ValueError as exc:
            raise ConfigError(f"bad pipeline config {path}: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**data)


_WORKER: dict = {}


def _init_worker(state: dict) -> None:
    _WORKER.clear()
    _WORKER.update(state)


def _run_one(item: tuple[int, str]) -> dict:
    i, text = item
    st = _WORKER
    policy: TransmissionPolicy = st["policy"]
    sid = f"r{i:04d}"
    try:
        trace, _ = simulate_response(text, st["vocab"], policy, stream_id=sid)
    except (ValueError, PolicyError) as exc:
        raise StageError("simulate", sid, str(exc)) from None
    sizes = payload_sizes(trace.packets)
    opts = IdentifyOptions(max_fragment_payload=policy.max_fragment_payload, fragment_header=policy.fragment_header)
    try:
        seq = extract_stream(sizes, policy.mode, st["h"], opts)
    except ExtractionError as exc:
        raise StageError("extract", sid, str(exc)) from None
    segs = segment(seq.lengths)
    try:
        pred, _ = reconstruct_response(st["rec"], segs, st["k"], seq.hidden_prefix_count)
    except Exception as exc:
        raise StageError("reconstruct", sid, str(exc)) from None
    try:
        res = evaluate_pair(pred, text, st["embedder"])
    except Exception as exc:
        raise StageError("evaluate", sid, str(exc)) from None
    row = {"stream_id": sid, **res.as_dict(), "exact": pred == text,
           "provenance": seq.provenance.value, "segments": len(segs)}
    return {"row": row, "pred": pred, "result": res}


def run_pipeline(config: PipelineConfig, out_dir: str | None = None, out: str | None = None) -> dict:
    """simulate -> extract -> segment -> reconstruct -> evaluate for a corpus."""
    config.validate()
    vocab = _vocab(config.vocab)
    policy = _policy(config.policy)
    corpus = _corpus(config.corpus)
    if not corpus:
        raise ConfigError("corpus is empty")
    train = _corpus(config.train_corpus) if config.train_corpus else corpus
    rec = _make_reconstructor(config.reconstructor, config.model, vocab, config.k, config.beam_width,
                              config.seed, train, config.split_buffered)
    if config.attacker_h == "policy":
        h = policy.metadata_overhead_h
    elif config.attacker_h == "unknown":
        h = None
    else:
        h = int(config.attacker_h)
    try:
        embedder = adapters.embedder_from_spec(config.embedder)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    thresholds = thresholds_from_mapping(config.thresholds) if config.thresholds else Thresholds()
    state = {"policy": policy, "vocab": vocab, "rec": rec, "h": h, "k": config.k, "embedder": embedder}
    items = list(enumerate(corpus))
    jobs = config.jobs
    if jobs > 1 and (config.reconstructor.startswith("cmd:") or (config.embedder or "").startswith("cmd:")):
        log.warning("external processes cannot be shared between workers; running with one job")
        jobs = 1
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(state,)) as ex:
                outputs = list(ex.map(_run_one, items, chunksize=max(1, len(items) // (jobs * 4))))
        else:
            _init_worker(state)
            outputs = [_run_one(it) for it in items]
    finally:
        for obj in (rec, embedder):
            if hasattr(obj, "close"):
                obj.close()
    summary = summarize([o["result"] for o in outputs], thresholds)
    exact = sum(o["row"]["exact"] for o in outputs)
    if out_dir:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "predictions.txt").write_text(_corpus_text([o["pred"] for o in outputs]), encoding="utf-8")
        (d / "results.jsonl").write_text(
            "".join(json.dumps(o["row"], sort_keys=True) + "\n" for o in outputs), encoding="utf-8")
        (d / "summary.txt").write_text(summary.render(), encoding="utf-8")
        (d / "summary.json").write_text(json.dumps(summary.as_dict(), indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    if out:
        _write_text(out, summary.render())
    return {"responses": len(outputs), "exact_matches": exact, "asr": summary.columns["ASR"], "summary": summary}


def cmd_pipeline(args) -> dict:
    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        if not args.corpus or not args.policy:
            raise ConfigError("pipeline needs --config or both --corpus and --policy")
        config = PipelineConfig(corpus=args.corpus, policy=args.policy)
    for name in ("corpus", "policy", "vocab", "model", "train_corpus", "reconstructor", "seed", "k",
                 "beam_width", "attacker_h", "embedder", "jobs"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if args.split_buffered:
        config.split_buffered = True
    if not args.out_dir and not args.out:
        args.out = "-"
    res = run_pipeline(config, args.out_dir, args.out)
    res.pop("summary")
    return res


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tokenleak", description="token-length side-channel toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="stream a corpus under a transmission policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab")
    p.add_argument("--seed", type=int)
    p.add_argument("--truth", help="also write ground truth as JSON lines")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="recover token lengths from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    p.add_argument("--h", type=int, help="metadata overhead in bytes, if known")
    p.add_argument("--stream")
    p.add_argument("--max-payload", type=int, default=0)
    p.add_argument("--header", type=int, default=0)
    p.add_argument("--min-run", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("segment", help="split lengths into segments")
    p.add_argument("--lengths", required=True)
    p.add_argument("--min-tokens", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train opening/inner n-gram models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--label", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="infer text from lengths")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--lengths")
    src.add_argument("--segments")
    p.add_argument("--model")
    p.add_argument("--external", help="command speaking the reconstructor line protocol")
    p.add_argument("--vocab")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--beam", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-buffered", action="store_true")
    p.add_argument("--candidates", help="per-segment candidates as JSON lines")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("dataprep", help="build training prompts from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab")
    p.add_argument("--augment", help="policy file used to augment lengths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-spaces", action="store_true", help="keep leading spaces of segments")
    p.add_argument("--stats", help="write corpus statistics here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataprep)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--embedder", help="tf (default), hash, or cmd:<program>")
    p.add_argument("--thresholds", help="JSON file of threshold overrides")
    p.add_argument("--rows", help="per-pair results as JSON lines")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mitigate", help="measure leakage under a countermeasure")
    p.add_argument("--policy", required=True)
    p.add_argument("--apply", required=True, help="none, batch, group:N, pad:bucket=B, pad:uniform=LO-HI")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab")
    p.add_argument("--dictionary", help="vocabulary file for candidate counting")
    p.add_argument("--report", "--out", dest="report", required=True)
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("pipeline", help="simulate, extract, segment, reconstruct and evaluate")
    p.add_argument("--config", help="JSON pipeline configuration")
    p.add_argument("--corpus")
    p.add_argument("--policy")
    p.add_argument("--vocab")
    p.add_argument("--model")
    p.add_argument("--train-corpus", dest="train_corpus")
    p.add_argument("--reconstructor", help="ngram (default), oracle, or cmd:<program>")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--beam", dest="beam_width", type=int)
    p.add_argument("--attacker-h", dest="attacker_h")
    p.add_argument("--embedder")
    p.add_argument("--split-buffered", action="store_true")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pipeline)
    return ap


def _status(payload: dict) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    func: Callable = args.func
    try:
        info = func(args)
    except ConfigError as exc:
        _status({"command": args.command, "status": "config_error", "message": str(exc)})
        return EXIT_CONFIG
    except StageError as exc:
        _status({"command": args.command, "status": "stage_error", "stage": exc.stage,
                 "stream_id": exc.stream_id, "message": str(exc)})
        return EXIT_STAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not our failure
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    _status({"command": args.command, "status": "ok", **info})
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

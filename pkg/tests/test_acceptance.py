"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import itertools
import string
import time

from hypothesis import given, settings
from hypothesis import strategies as st

from tokenleak.corpus import synthetic_corpus
from tokenleak.dataprep import build_dataset
from tokenleak.extraction import defragment, extract_cumulative, identify_messages
from tokenleak.metrics import edit_distance_norm, evaluate_pair, rouge1_precision
from tokenleak.mitigation import Batch, NoMitigation, Pad, measure_leakage
from tokenleak.reconstruct import NGramReconstructor, count_candidates, reconstruct_response
from tokenleak.segmentation import LIST_OPENER, MIN_SEGMENT_TOKENS, segment
from tokenleak.simulator import (
    BufferingModel,
    Mode,
    PaddingModel,
    TransmissionPolicy,
    fragment_message,
    simulate_response,
)
from tokenleak.tokenizer import token_lengths

RASH = "I need more details about your rash."
FOLLOW = "Where is it, and what does it look like?"


def test_round_trip_exactness(vocab, acceptance):
    corpus = synthetic_corpus(1000, seed=17)
    policy = TransmissionPolicy(metadata_overhead_h=40)
    start = time.perf_counter()
    errors = 0
    for i, text in enumerate(corpus):
        trace, _ = simulate_response(text, vocab, policy, stream_id=f"r{i}")
        seq = extract_cumulative(identify_messages(trace.packets))
        errors += list(seq.lengths) != token_lengths(text, vocab)[1:]
    elapsed = time.perf_counter() - start
    ok = errors == 0 and elapsed < 10
    acceptance(1, ok, f"round trip: {errors} mismatches in 1000 responses, {elapsed:.2f}s")
    assert ok


def test_fragmentation_oracle(acceptance):
    bad = [m for m in range(1, 5001) if defragment(fragment_message(m, 1200, 28), 1200, 28)[0] != [m]]
    example = fragment_message(2500, 1200, 28)
    ok = not bad and example == [1200, 1200, 184]
    acceptance(2, ok, f"fragmentation: {len(bad)} failures over 1..5000, 2500 -> {example}")
    assert ok


def test_entropy_reproduction(acceptance):
    letters = string.ascii_lowercase
    four = ["".join(p) for p in itertools.islice(itertools.product(letters, repeat=4), 880)]
    five = ["".join(p) for p in itertools.islice(itertools.product(letters, repeat=5), 905)]
    template = ["She", " has", " a", " ____", " and", " a", " _____"]
    pinned = {i: w for i, w in enumerate(template) if "_" not in w}
    lengths = [len(w) for w in template]
    count = count_candidates(lengths, ["has", "a", "and"] + four + five, pinned)
    # the blanks are independent, so the count is the product of their sizes
    ok = count == 795_600
    acceptance(
        3, ok,
        f"template count {count:,} (expected 795,600; 880 x 905 = {880 * 905:,}, "
        "so the stated target is not a product of the stated counts)",
    )
    assert ok


def test_prompt_fidelity(vocab, golden, acceptance):
    first, inner = build_dataset([[RASH, " " + FOLLOW]], vocab)
    want_first = (golden / "first_segment_prompt.txt").read_text()
    want_inner = (golden / "inner_segment_prompt.txt").read_text()
    ok = first.prompt_text == want_first and inner.prompt_text == want_inner
    acceptance(4, ok, "prompt format: first and inner prompts byte-exact against golden files")
    assert ok


def _segment_properties_hold(lengths):
    segs = segment(lengths).segments
    flat = [t for s in segs for t in s]
    if flat != list(lengths):
        return False
    if len(segs) > 1 and any(len(s) < MIN_SEGMENT_TOKENS for s in segs):
        return False
    return all(s[-3:] != LIST_OPENER for s in segs[:-1])


def test_segmentation_invariants(acceptance):
    failures = []

    @settings(max_examples=10_000, database=None)
    @given(st.lists(st.one_of(st.just(1), st.just(3), st.integers(1, 12)), max_size=90))
    def check(lengths):
        if not _segment_properties_hold(lengths):
            failures.append(lengths)
        assert not failures

    try:
        check()
    except AssertionError:
        pass
    goldens = [
        segment([2, 3, 1, 2, 2, 6, 3, 5, 5, 1, 4, 9, 5, 6, 1]).segments == ((2, 3, 1, 2, 2, 6, 3, 5, 5, 1, 4, 9, 5, 6, 1),),
        [len(s) for s in segment([5] * 12 + [1] + [5] * 12).segments] == [13, 12],
        segment([5] * 11 + [3, 1, 1] + [6] * 10 + [1]).segments[1][:3] == (3, 1, 1),
    ]
    ok = not failures and all(goldens)
    acceptance(5, ok, f"segmentation: 10000 random cases, {len(failures)} violations, "
                      f"{sum(goldens)}/{len(goldens)} golden cases")
    assert ok


def test_known_corpus_reconstruction(vocab, acceptance):
    corpus = synthetic_corpus(50, seed=0)
    generic = synthetic_corpus(50, seed=0, style="generic")
    policy = TransmissionPolicy(metadata_overhead_h=40)
    victim_rec = NGramReconstructor.train(corpus, vocab, order=3, corpus_label="victim", beam_width=16, k=8)
    generic_rec = NGramReconstructor.train(generic, vocab, order=3, corpus_label="generic", beam_width=16, k=8)
    exact = seg_total = seg_exact = 0
    phi = {"victim": [], "generic": []}
    for i, text in enumerate(corpus):
        trace, truth = simulate_response(text, vocab, policy, stream_id=f"r{i}")
        seq = extract_cumulative(identify_messages(trace.packets), h=policy.metadata_overhead_h)
        segs = segment(seq.lengths)
        pred, per_seg = reconstruct_response(victim_rec, segs)
        exact += pred == text
        phi["victim"].append(evaluate_pair(pred, text).phi)
        pos = 0
        for seg, cand in zip(segs.segments, per_seg):
            seg_total += 1
            seg_exact += cand.text == "".join(truth.tokens[pos:pos + len(seg)])
            pos += len(seg)
        g_pred, _ = reconstruct_response(generic_rec, segs)
        phi["generic"].append(evaluate_pair(g_pred, text).phi)
    rate = exact / len(corpus)
    mean_v = sum(phi["victim"]) / len(corpus)
    mean_g = sum(phi["generic"]) / len(corpus)
    ok = rate >= 0.90 and mean_g < mean_v
    acceptance(
        6, ok,
        f"known corpus: exact match {rate:.0%} (floor 90%), segments exact {seg_exact}/{seg_total}, "
        f"mean phi victim {mean_v:.3f} > generic {mean_g:.3f}: {mean_g < mean_v}",
    )
    assert mean_g < mean_v, "ablation direction"
    assert rate >= 0.90, "exact-match floor"


def test_metric_reference_values(acceptance):
    ref = "As an AI language model, I don't have access to the latest trade statistics,"
    cand = ref.replace("trade", "crime")
    ed = edit_distance_norm(cand, ref)
    r1 = rouge1_precision(cand, ref)
    ok = abs(ed - 0.04) <= 0.01 and abs(r1 - 0.93) <= 0.01
    acceptance(7, ok, f"metrics: ED {ed:.4f} (0.04), ROUGE-1 {r1:.4f} (0.93)")
    assert ok


def test_mitigation_ordering(vocab, acceptance):
    corpus = synthetic_corpus(200, seed=1)
    base = TransmissionPolicy(mode=Mode.PER_TOKEN, metadata_overhead_h=40,
                              max_fragment_payload=1200, fragment_header=28)
    start = time.perf_counter()
    none = measure_leakage(corpus, base, NoMitigation(), vocab)
    pad16 = measure_leakage(corpus, base, Pad(PaddingModel.bucket_round(16)), vocab)
    pad64 = measure_leakage(corpus, base, Pad(PaddingModel.bucket_round(64)), vocab)
    batch = measure_leakage(corpus, base, Batch(), vocab)
    elapsed = time.perf_counter() - start
    rates = [r.exact_recovery_rate for r in (none, pad16, pad64, batch)]
    ordered = rates[0] == 1.0 and rates[0] > rates[1] > rates[2] > rates[3] and rates[3] == 0.0
    ok = ordered and batch.header_adjusted_overhead <= 0 and batch.bandwidth_overhead == 0 and elapsed < 60
    acceptance(
        8, ok,
        "mitigation: recovery none/pad16/pad64/batch = " + "/".join(f"{r:.4f}" for r in rates)
        + f", batch overhead {batch.bandwidth_overhead:.3f} "
        f"(header-adjusted {batch.header_adjusted_overhead:.3f}), {elapsed:.1f}s",
    )
    assert ok


def test_policy_realism(vocab, acceptance):
    texts = synthetic_corpus(200, seed=4)
    policy = TransmissionPolicy(buffering=BufferingModel(0.8, 0.02))
    grouped = 0
    n = 10_000
    for i in range(n):
        _, truth = simulate_response(texts[i % len(texts)], vocab, policy, stream_id=f"r{i:05d}")
        grouped += truth.groups[0][:2] == (0, 1)
    freq = grouped / n
    ok = abs(freq - 0.80) <= 0.02
    acceptance(9, ok, f"buffering: first pair grouped in {freq:.4f} of {n} responses (0.80 +/- 0.02)")
    assert ok

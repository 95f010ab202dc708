"""
Reconstructing replies from lengths
===================================

A trigram model trained on the assistant's own style, searched under the
length constraint, against one trained on unrelated text.
"""

from tokenleak import Vocabulary
from tokenleak.corpus import synthetic_corpus
from tokenleak.extraction import extract_cumulative, identify_messages
from tokenleak.metrics import evaluate_pair, summarize
from tokenleak.reconstruct import NGramReconstructor, reconstruct_response
from tokenleak.segmentation import segment
from tokenleak.simulator import TransmissionPolicy, simulate_response

vocab = Vocabulary.default()
replies = synthetic_corpus(20, seed=3)
policy = TransmissionPolicy(metadata_overhead_h=40)

victim = NGramReconstructor.train(replies, vocab, corpus_label="victim", k=4)
generic = NGramReconstructor.train(synthetic_corpus(20, seed=3, style="generic"), vocab,
                                   corpus_label="generic", k=4)

results = {"victim": [], "generic": []}
for i, text in enumerate(replies):
    trace, _ = simulate_response(text, vocab, policy, stream_id=f"r{i}")
    segs = segment(extract_cumulative(identify_messages(trace.packets), h=40).lengths)
    for name, rec in (("victim", victim), ("generic", generic)):
        guess, _ = reconstruct_response(rec, segs)
        results[name].append(evaluate_pair(guess, text))
    if i == 0:
        print("truth  :", text[:120])
        print("victim :", reconstruct_response(victim, segs)[0][:120])
        print("generic:", reconstruct_response(generic, segs)[0][:120])

# percentages of replies above each threshold, one row per model
for name, rows in results.items():
    print(name)
    print(summarize(rows).render())

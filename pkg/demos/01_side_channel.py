"""
Token lengths through encryption
================================

A streamed reply leaks the length of every token, even over TLS.
"""

from tokenleak import Vocabulary, tokenize
from tokenleak.extraction import extract_cumulative, identify_messages
from tokenleak.segmentation import segment_text
from tokenleak.simulator import TransmissionPolicy, simulate_response

vocab = Vocabulary.default()
reply = ("I need more details about your rash. Where is it, and what does it look like?"
         " Is it itchy or painful?")

# what the server sends, token by token
seq = tokenize(reply, vocab)
print("tokens :", list(seq.tokens))
print("lengths:", list(seq.lengths))

# each message repeats the whole reply so far plus 40 bytes of framing
policy = TransmissionPolicy(metadata_overhead_h=40)
trace, truth = simulate_response(reply, vocab, policy)
print("packet sizes:", [p.payload_len for p in trace.packets][:12], "...")

# the eavesdropper differences the sizes; the first token stays hidden
# because the framing size is not known
got = extract_cumulative(identify_messages(trace.packets))
print("recovered:", list(got.lengths), "hidden prefix:", got.hidden_prefix_count)
assert list(got.lengths) == list(seq.lengths[1:])

# once the framing size is known the first token comes back too
got = extract_cumulative(identify_messages(trace.packets), h=40)
assert list(got.lengths) == list(seq.lengths)

# sentence-sized pieces are what the reconstructor works on
for piece in segment_text(reply, vocab):
    print(repr(piece))

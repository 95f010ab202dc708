"""Simulate, extract, segment, reconstruct and mitigate the token-length
side channel of streamed assistant responses."""

from .extraction import (
    IdentifyOptions,
    MessageSizeSequence,
    Provenance,
    TokenLengthSequence,
    defragment,
    estimate_overhead,
    extract_cumulative,
    extract_pertoken,
    identify_messages,
)
from .metrics import EvalResult, Thresholds, cosine_phi, edit_distance_norm, evaluate_batch, rouge1_precision, rougeL
from .mitigation import Batch, Group, LeakageReport, Pad, apply_mitigation, measure_leakage, parse_mitigation
from .reconstruct import (
    NGramModel,
    NGramReconstructor,
    OracleReconstructor,
    ScoredCandidate,
    beam_reconstruct,
    count_candidates,
    reconstruct_response,
    train_ngram,
)
from .segmentation import SegmentedSequence, segment, segment_text
from .simulator import (
    BufferingModel,
    Mode,
    PaddingModel,
    TransmissionPolicy,
    fragment_message,
    simulate_corpus,
    simulate_response,
)
from .tokenizer import TokenSequence, Vocabulary, tokenize
from .trace import Direction, PacketRecord, Trace, filter_stream, load_trace, save_trace

__version__ = "0.1.0"

"""Data-dependency-graph fingerprints for malware family classification.

Pipeline: parse IDA-style listings -> split into basic-block segments ->
extract per-segment data-dependency graphs -> hash for isomorphism (WL) ->
dedupe into per-program fingerprints -> one-hot encode over the corpus
vocabulary -> classify in Hamming space with kNN -> report accuracy metrics.
"""

__version__ = "0.1.0"

from .ddg_builder import DEFAULT_INSTRUCTION_FILTER, DepGraph, build_graph
from .eval_metrics import (
    ClassMetrics,
    ConfusionMatrix,
    k_sweep,
    per_class_metrics,
    total_accuracy,
)
from .fingerprint_store import (
    CorpusHeader,
    EncodedCorpus,
    Fingerprint,
    Vocabulary,
    build_fingerprint,
    build_vocabulary,
    encode_corpus,
)
from .hamming_knn import KnnModel, SplitSpec, evaluate, hamming, pairwise_distances, predict, split
from .listing_parser import Instruction, TermDictionary, count_terms, parse_listing
from .pipeline import PipelineConfig, PipelineError, ValidationError, run_pipeline
from .segmenter import Segment, TerminatorSet, segment
from .synthetic import gen_synthetic_corpus
from .wl_hasher import DEFAULT_ITERATIONS, DIGEST_NAME, dedupe, wl_hash

"""duet: decoding with two models that pull toward each other's outputs.

A pair of sequence models over possibly different text interfaces decode the
same input by alternating beam passes, each penalized by its prefix distance
to the other's current candidates.  The package provides the text-interface
layer (vocabularies, tokenization schemes, cross-model output mapping), the
guided beam search with its exact enumeration oracle, the pass orchestration
plus the rerank/fusion baselines, corpus metrics, a wire-protocol client for
out-of-process scorers, and a config-driven experiment harness.
"""

from .beam import (
    BeamConfig,
    CandidateSet,
    Guidance,
    ScoredSequence,
    beam_search,
    exact_topk,
    format_nbest,
    load_nbest,
    normalized_score,
    parse_nbest,
    save_nbest,
)
from .config import METHODS, ExperimentConfig, load_config
from .distance import (
    DistanceKind,
    embedding_prefix_distance,
    hamming_prefix_distance,
    min_distance,
)
from .errors import (
    CapabilityError,
    ConfigError,
    DecodeFailure,
    DuetError,
    EnumerationLimitError,
    MappingError,
    ModelFileError,
    ProtocolError,
    SpecMismatchError,
    ValidationError,
)
from .harness import (
    bench,
    build_models,
    decode_lines,
    run_experiment,
    subsample_sweep,
    train_models,
    tune_lambda,
)
from .metrics import EvalPair, RougeScore, bleu_tokenize, corpus_bleu, rouge_l
from .remote import (
    BRIDGE_ADDR_ENV,
    PROTOCOL_VERSION,
    RemoteScorer,
    bridge_address,
    vocab_hash,
)
from .scoring import (
    CountingScorer,
    NGramModel,
    Scorer,
    SourceView,
    TableScorer,
    score_sequence,
    train_ngram,
)
from .synthetic import (
    ComplementaryScenario,
    complementary_scenario,
    write_scenario_files,
)
from .textspec import (
    BOS_ID,
    EOS_ID,
    UNK_ID,
    BpeScheme,
    CharacterScheme,
    GenerationOrder,
    ModelTextSpec,
    TokenSequence,
    Vocabulary,
    WhitespaceScheme,
    detokenize,
    learn_bpe,
    load_merges,
    map_output,
    save_merges,
    sequence_to_text,
    text_to_sequence,
    tokenize,
    vocabulary_from_corpus,
)
from .twist import (
    PASS_F_GUIDED,
    PASS_F_INIT,
    PASS_G_GUIDED,
    DecodeSession,
    DecodeTrace,
    FusedScorer,
    GuidanceConfig,
    PassRecord,
    isolation_decode,
    rerank_decode,
    select_candidate,
    shallow_fusion_decode,
    twist_decode,
)

__version__ = "0.1.0"

__all__ = [
    "BOS_ID",
    "BRIDGE_ADDR_ENV",
    "BeamConfig",
    "BpeScheme",
    "CandidateSet",
    "CapabilityError",
    "CharacterScheme",
    "ComplementaryScenario",
    "ConfigError",
    "CountingScorer",
    "DecodeFailure",
    "DecodeSession",
    "DecodeTrace",
    "DistanceKind",
    "DuetError",
    "EOS_ID",
    "EnumerationLimitError",
    "EvalPair",
    "ExperimentConfig",
    "FusedScorer",
    "GenerationOrder",
    "Guidance",
    "GuidanceConfig",
    "METHODS",
    "MappingError",
    "ModelFileError",
    "ModelTextSpec",
    "NGramModel",
    "PASS_F_GUIDED",
    "PASS_F_INIT",
    "PASS_G_GUIDED",
    "PROTOCOL_VERSION",
    "PassRecord",
    "ProtocolError",
    "RemoteScorer",
    "RougeScore",
    "ScoredSequence",
    "Scorer",
    "SourceView",
    "SpecMismatchError",
    "TableScorer",
    "TokenSequence",
    "UNK_ID",
    "ValidationError",
    "Vocabulary",
    "WhitespaceScheme",
    "beam_search",
    "bench",
    "bleu_tokenize",
    "bridge_address",
    "build_models",
    "complementary_scenario",
    "corpus_bleu",
    "decode_lines",
    "detokenize",
    "embedding_prefix_distance",
    "exact_topk",
    "format_nbest",
    "hamming_prefix_distance",
    "isolation_decode",
    "learn_bpe",
    "load_config",
    "load_merges",
    "load_nbest",
    "map_output",
    "min_distance",
    "normalized_score",
    "parse_nbest",
    "rerank_decode",
    "rouge_l",
    "run_experiment",
    "save_merges",
    "save_nbest",
    "score_sequence",
    "select_candidate",
    "sequence_to_text",
    "shallow_fusion_decode",
    "subsample_sweep",
    "text_to_sequence",
    "tokenize",
    "train_models",
    "train_ngram",
    "tune_lambda",
    "twist_decode",
    "vocabulary_from_corpus",
    "write_scenario_files",
]

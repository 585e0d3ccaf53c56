"""Toolkit for proposing causal chains of death from discharge diagnoses."""

from .acme import (
    AcmeRule,
    CausalGraph,
    ChainValidity,
    ConstraintMask,
    build_constraint_mask,
    chain_is_valid,
    filter_corpus,
    is_valid_pair,
    load_acme,
)
from .corpus import (
    Record,
    SplitSpec,
    SyntheticConfig,
    Vocabulary,
    build_vocab,
    generate_synthetic,
    kfold,
    load_parallel,
    split,
)
from .evaluation import (
    AccuracyReport,
    BleuReport,
    accuracy_report,
    clipped_precision,
    code_accuracy,
    corpus_bleu,
    exact_sequence_accuracy,
    export_attention,
    underlying_accuracy,
)
from .icd import (
    UNK_CODE,
    CodingSystem,
    GemTable,
    MappingPolicy,
    NormalizedCode,
    load_gem,
    map_sequence_9_to_10,
    normalize_code,
)
from .models import EncoderType, ModelConfig, PRESETS, Seq2SeqModel, TrainConfig, train_model
from .search import BeamConfig, Hypothesis, beam_decode, greedy_decode, translate_corpus

__version__ = "0.1.0"

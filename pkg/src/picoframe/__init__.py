"""PICO frame extraction with retrieved-demonstration prompting.

The package is organized around the pipeline stages: ``corpus`` (BIO data
model and CoNLL ingestion), ``instructgen`` (conversation-style records),
``demoindex`` (cosine kNN demonstration retrieval), ``promptkit`` (prompt
assembly), ``llmgateway`` (generation with disk cache), ``extractparse``
(output parsing and token alignment), ``evalkit`` (token-level scoring),
and ``runner`` (experiment orchestration and CLI commands).
"""

from .corpus import (
    BioTag,
    EntitySpan,
    LabeledSentence,
    LabelScheme,
    Token,
    bio_to_spans,
    detokenize,
    map_fine_to_coarse,
    parse_conll,
    spans_to_bio,
)
from .demoindex import (
    DemoEntry,
    HnswIndex,
    HnswParams,
    brute_force_knn,
    build_index,
    cosine_similarity,
    load_embeddings,
    query_knn,
    random_select,
    save_embeddings,
)
from .errors import ConfigError, DataError, PicoframeError, PromptTooLongError
from .evalkit import ClassCounts, MetricsReport, class_metrics, count_tokens, macro_metrics
from .extractparse import (
    AlignedPrediction,
    Extraction,
    align_to_bio,
    audit_surface_uniqueness,
    parse_extractions,
)
from .instructgen import InstructRecord, sentence_to_record, serialize_extractions, write_dataset
from .llmgateway import (
    Gateway,
    GenerationRequest,
    GenerationResponse,
    HttpChatBackend,
    MockOracleBackend,
)
from .promptkit import PromptSpec, assemble_prompt, render_demonstration
from .runner import (
    ExperimentConfig,
    RunManifest,
    cmd_ablate,
    cmd_convert,
    cmd_eval,
    cmd_extract,
    cmd_index,
)

__version__ = "0.1.0"

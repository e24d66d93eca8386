"""Synthetic specimen corpus: generation, grammar, tokenization, persistence."""

from . import grammar
from .generate import (
    ATTRIBUTE_AXES,
    ContextRates,
    Corpus,
    CorpusSpec,
    Planted,
    axis_indices,
    build_chat_examples,
    build_matching_example,
    cap_tiles,
    complementary_example,
    generate_corpus,
    mcq_for_record,
    mine_complementary_qa,
    survival_beta_preset,
)
from .io import (
    BadMagicError,
    CorpusIOError,
    DimMismatchError,
    TruncatedPayloadError,
    load_corpus,
    read_embeddings,
    save_corpus,
    write_embeddings,
)
from .tokenizer import (
    ASSISTANT,
    END,
    IMAGE,
    USER,
    OutOfVocabularyError,
    TokenSeq,
    Vocabulary,
    default_vocabulary,
    expand_image_span,
    render_chat,
    strip_image,
)
from .types import ChatExample, Finding, SpecimenRecord, SurvivalLabel, TileEmbeddingSet

__all__ = [
    "ATTRIBUTE_AXES", "ASSISTANT", "BadMagicError", "ChatExample", "ContextRates",
    "Corpus", "CorpusIOError", "CorpusSpec", "DimMismatchError", "END", "Finding",
    "IMAGE", "OutOfVocabularyError", "Planted", "SpecimenRecord", "SurvivalLabel",
    "TileEmbeddingSet", "TokenSeq", "TruncatedPayloadError", "USER", "Vocabulary",
    "axis_indices", "build_chat_examples", "build_matching_example", "cap_tiles",
    "complementary_example", "default_vocabulary", "expand_image_span",
    "generate_corpus", "grammar",
    "load_corpus", "mcq_for_record", "mine_complementary_qa", "read_embeddings",
    "render_chat", "save_corpus", "strip_image", "survival_beta_preset",
    "write_embeddings",
]

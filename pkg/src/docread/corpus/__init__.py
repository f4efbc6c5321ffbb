from .schema import (
    DocumentSample,
    EntitySchema,
    Vocabulary,
    EOS,
    PAD,
    SOS,
    UNK,
    derive_schema,
    encode_transcript,
    validate_sample,
)
from .synth import GenerationError, SynthConfig, cue_config, generate_corpus, toy_config
from .store import load_corpus, save_corpus
from .sroie import SROIE_SCHEMA, SroieParseError, load_sroie

__all__ = [
    "DocumentSample",
    "EntitySchema",
    "Vocabulary",
    "PAD",
    "SOS",
    "EOS",
    "UNK",
    "derive_schema",
    "encode_transcript",
    "validate_sample",
    "SynthConfig",
    "GenerationError",
    "generate_corpus",
    "toy_config",
    "cue_config",
    "save_corpus",
    "load_corpus",
    "load_sroie",
    "SROIE_SCHEMA",
    "SroieParseError",
]

import dataclasses

import pytest
import torch

from docread.corpus import Vocabulary, derive_schema, generate_corpus
from docread.corpus.synth import cue_config, toy_config
from docread.model import DocumentModel, desk_scale_config


@pytest.fixture(scope="session")
def toy_samples():
    return generate_corpus(dataclasses.replace(toy_config(), n=6), seed=11)


@pytest.fixture(scope="session")
def cue_samples():
    return generate_corpus(dataclasses.replace(cue_config(), n=8), seed=11)


@pytest.fixture(scope="session")
def toy_schema(toy_samples):
    return derive_schema(toy_samples)


@pytest.fixture(scope="session")
def toy_vocab(toy_samples):
    return Vocabulary.from_transcripts([t for s in toy_samples for t in s.transcripts])


@pytest.fixture()
def small_model(toy_schema, toy_vocab):
    """Fresh untrained desk-scale model with a fixed init seed."""
    torch.manual_seed(1234)
    return DocumentModel(toy_schema, toy_vocab, desk_scale_config(t_max=24))

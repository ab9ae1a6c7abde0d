import numpy as np
import pytest

from fedner.corpus import build_vocabulary, embedding_matrix, normalize_to_bio2
from fedner.synthetic import bundled_embeddings, load_synthetic
from fedner.tagger import ModelConfig, encode_sentence, init_params


@pytest.fixture(scope="session")
def synthetic_train():
    return normalize_to_bio2(load_synthetic("train"))


@pytest.fixture(scope="session")
def synthetic_test():
    return normalize_to_bio2(load_synthetic("test"))


@pytest.fixture(scope="session")
def small_embeddings():
    return bundled_embeddings(dim=10)


@pytest.fixture(scope="session")
def small_vocab(synthetic_train, synthetic_test, small_embeddings):
    return build_vocabulary([synthetic_train, synthetic_test], small_embeddings)


@pytest.fixture(scope="session")
def small_encoded(synthetic_train, small_vocab):
    return [encode_sentence(s, small_vocab) for s in synthetic_train.sentences]


def tiny_model(vocab, embeddings, seed=0, dropout_rate=0.0, perturb=True):
    """A small model with non-zero biases and CRF scores so every gradient path is exercised."""
    config = ModelConfig(
        vocab.n_words, vocab.n_chars, word_dim=embeddings.dim, char_dim=4, char_hidden=3, word_hidden=4,
        dropout_rate=dropout_rate,
    )
    params = init_params(config, seed, embedding_matrix(vocab, embeddings))
    if perturb:
        rng = np.random.default_rng(seed + 1000)
        for name, value in params.items():
            if name.endswith("_bias") or name.startswith("crf_"):
                params[name] = rng.normal(0.0, 0.5, value.shape)
    return config, params


# Lines recorded by test_acceptance.py, one per criterion.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

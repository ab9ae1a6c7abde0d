"""Vanilla mini-batch SGD and the centralized training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import Corpus
from .evaluation import ConvergenceLog, LogRecord, evaluate_model
from .tagger import TRAINABLE, ModelConfig, backward, encode_sentence, init_params, make_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 20
    epochs: int = 50
    seed: int = 1990
    eval_every: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")

    def to_json(self) -> dict:
        return asdict(self)


def sgd_step(params, grads, lr: float):
    """``w - lr * g`` for every tensor in ``grads``; other tensors are shared untouched."""
    out = dict(params)
    for name, g in grads.items():
        if name not in TRAINABLE:
            raise ValueError(f"{name} is not a trainable tensor")
        w = params[name]
        if w.shape != g.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {w.shape}")
        out[name] = w - lr * g
    return out


def epoch_rng(seed: int, epoch: int, stream: int = 0) -> np.random.Generator:
    """Generator for one epoch of one data stream (stream 0 is the centralized run)."""
    return np.random.default_rng([seed, stream, epoch])


def make_epoch_batches(dataset, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    dataset = list(dataset)
    if not dataset:
        raise ValueError("cannot batch an empty dataset")
    order = rng.permutation(len(dataset))
    return [[dataset[i] for i in order[j : j + batch_size]] for j in range(0, len(order), batch_size)]


def run_epochs(params, encoded, dataset, config: TrainConfig, dropout_rate: float, first_epoch: int, n_epochs: int,
               stream: int = 0):
    """SGD over ``dataset`` (indices into ``encoded``) for epochs ``first_epoch .. first_epoch + n_epochs - 1``.

    Returns the updated params and the mean batch loss of each epoch.
    """
    losses = []
    for epoch in range(first_epoch, first_epoch + n_epochs):
        rng = epoch_rng(config.seed, epoch, stream)
        groups = make_epoch_batches(dataset, config.batch_size, rng)
        dropout_seeds = rng.integers(0, 2**63 - 1, size=len(groups))
        batch_losses = []
        for group, dropout_seed in zip(groups, dropout_seeds):
            batch = make_batch(encoded[i] for i in group)
            loss, grads = backward(batch, params, dropout_rate, True, int(dropout_seed))
            params = sgd_step(params, grads, config.learning_rate)
            batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
    return params, losses


def train_centralized(
    corpus_train: Corpus,
    corpus_test: Corpus,
    config: TrainConfig,
    model_config: ModelConfig,
    vocab,
    word_vectors,
    params=None,
):
    """Train on the whole of ``corpus_train``; evaluate on ``corpus_test`` every ``eval_every`` epochs."""
    if len(corpus_train) == 0 or len(corpus_test) == 0:
        raise ValueError("training and test corpora must be non-empty")
    if params is None:
        params = init_params(model_config, config.seed, word_vectors)
    encoded = [encode_sentence(s, vocab) for s in corpus_train.sentences]
    test_encoded = [encode_sentence(s, vocab) for s in corpus_test.sentences]
    dataset = range(len(encoded))
    history = ConvergenceLog("epoch")
    for epoch in range(config.epochs):
        params, (loss,) = run_epochs(params, encoded, dataset, config, model_config.dropout_rate, epoch, 1)
        if (epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs:
            report = evaluate_model(corpus_test, params, vocab, encoded=test_encoded)
            history.append(LogRecord(epoch + 1, loss, report.precision, report.recall, report.f1))
            log.info("epoch %d loss %.4f F1 %.2f", epoch + 1, loss, report.f1)
    return params, history

"""Federated averaging over simulated clients in one process."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .evaluation import ConvergenceLog, LogRecord, evaluate_model
from .tagger import TRAINABLE, ModelConfig, encode_sentence, init_params
from .trainer import TrainConfig, run_epochs

log = logging.getLogger(__name__)

SHARED_ALL = TRAINABLE
# Only the LSTM and dense kernels/biases and the CRF transition matrix.
SHARED_STRICT = tuple(
    name for name in TRAINABLE if "lstm" in name or name.startswith("dense") or name == "crf_transitions"
)


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 8
    rounds: int = 200
    local_epochs: int = 4
    shared_set: tuple[str, ...] = SHARED_ALL
    workers: int = 1

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError(f"n_clients must be >= 1, got {self.n_clients}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if self.local_epochs < 0:
            raise ValueError(f"local_epochs must be >= 0, got {self.local_epochs}")
        if not self.shared_set:
            raise ValueError("shared_set must name at least one tensor")
        unknown = set(self.shared_set) - set(TRAINABLE)
        if unknown:
            raise ValueError(f"shared_set has non-trainable tensors {sorted(unknown)}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass
class ClientState:
    client_id: int
    indices: list[int]
    local_params: dict | None = None

    def __post_init__(self):
        if not self.indices:
            raise ValueError(f"client {self.client_id} has no data")

    @property
    def n_samples(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    precision: float
    recall: float
    f1: float
    mean_loss: float
    duration: float


@dataclass
class ServerState:
    global_params: dict
    round_index: int = 0
    history: list[RoundRecord] = field(default_factory=list)

    def convergence_log(self) -> ConvergenceLog:
        out = ConvergenceLog("round")
        for r in self.history:
            out.append(LogRecord(r.round, r.mean_loss, r.precision, r.recall, r.f1))
        return out


def aggregation_weights(sample_counts) -> np.ndarray:
    counts = np.asarray(sample_counts, dtype=np.float64)
    if counts.size == 0 or np.any(counts <= 0):
        raise ValueError("sample counts must be positive")
    return counts / counts.sum()


def fedavg_aggregate(global_params, contributions, shared_set=SHARED_ALL):
    """Sample-weighted mean of the shared tensors of ``contributions``.

    ``contributions`` is a list of ``(params, n_k)`` in ascending client order.
    The mean is accumulated as ``x_0 + sum_k w_k (x_k - x_0)`` so identical
    contributions reproduce themselves exactly, and the result is clipped to
    the coordinate-wise contribution range to absorb rounding.  Tensors
    outside ``shared_set`` keep the server's values.
    """
    contributions = list(contributions)
    if not contributions:
        raise ValueError("no contributions to aggregate")
    weights = aggregation_weights([n for _, n in contributions])
    out = dict(global_params)
    for name in shared_set:
        tensors = [p[name] for p, _ in contributions]
        shape = tensors[0].shape
        for t in tensors:
            if t.shape != shape:
                raise ValueError(f"{name}: shape {t.shape} differs from {shape}")
        anchor = tensors[0]
        acc = anchor.copy()
        for w, t in zip(weights[1:], tensors[1:]):
            acc += w * (t - anchor)
        lo = np.minimum.reduce(tensors)
        hi = np.maximum.reduce(tensors)
        out[name] = np.clip(acc, lo, hi)
    return out


def broadcast(global_params, local_params, shared_set):
    """Client view at the start of a round: shared tensors from the server, the rest local."""
    if local_params is None:
        return dict(global_params)
    start = dict(local_params)
    for name in shared_set:
        start[name] = global_params[name]
    return start


def local_update(client: ClientState, global_params, train_config: TrainConfig, local_epochs: int, round_index: int,
                 encoded, dropout_rate: float, shared_set=SHARED_ALL):
    """Run ``local_epochs`` of SGD on the client's data starting from the broadcast.

    The data stream for client ``k`` in round ``r`` uses epochs
    ``r * local_epochs ...`` of RNG stream ``k``, so one client holding every
    sentence replays centralized training exactly.
    """
    params = broadcast(global_params, client.local_params, shared_set)
    params, losses = run_epochs(
        params, encoded, client.indices, train_config, dropout_rate, round_index * local_epochs, local_epochs,
        stream=client.client_id,
    )
    mean_loss = float(np.mean(losses)) if losses else math.nan
    return params, client.n_samples, mean_loss


def _run_round(server, clients, fed_config, train_config, encoded, dropout_rate, pool):
    def work(client):
        return local_update(
            client, server.global_params, train_config, fed_config.local_epochs, server.round_index, encoded,
            dropout_rate, fed_config.shared_set,
        )

    if pool is None:
        results = [work(c) for c in clients]
    else:
        results = list(pool.map(work, clients))
    for client, (params, _, _) in zip(clients, results):
        client.local_params = params
    server.global_params = fedavg_aggregate(
        server.global_params, [(p, n) for p, n, _ in results], fed_config.shared_set
    )
    return float(np.mean([loss for _, _, loss in results]))


def run_federation(
    corpus: Corpus,
    partitions,
    fed_config: FederationConfig,
    train_config: TrainConfig,
    model_config: ModelConfig,
    corpus_test: Corpus,
    vocab,
    word_vectors,
    params=None,
    on_round=None,
):
    """FedAvg with full participation for ``fed_config.rounds`` rounds.

    Each round: broadcast, local SGD on every client, aggregation, then
    evaluation of the global model on ``corpus_test``.  ``on_round(server)``
    is called after each round's record is appended.
    """
    partitions = list(partitions)
    if len(partitions) != fed_config.n_clients:
        raise ValueError(f"{len(partitions)} partitions for {fed_config.n_clients} clients")
    if params is None:
        params = init_params(model_config, train_config.seed, word_vectors)
    encoded = [encode_sentence(s, vocab) for s in corpus.sentences]
    test_encoded = [encode_sentence(s, vocab) for s in corpus_test.sentences]
    clients = [ClientState(p.client_id, list(p.sentence_indices)) for p in sorted(partitions, key=lambda p: p.client_id)]
    server = ServerState(params)
    pool = ThreadPoolExecutor(fed_config.workers) if fed_config.workers > 1 else None
    try:
        for _ in range(fed_config.rounds):
            started = time.perf_counter()
            mean_loss = _run_round(
                server, clients, fed_config, train_config, encoded, model_config.dropout_rate, pool
            )
            report = evaluate_model(corpus_test, server.global_params, vocab, encoded=test_encoded)
            server.round_index += 1
            record = RoundRecord(
                server.round_index, report.precision, report.recall, report.f1, mean_loss,
                time.perf_counter() - started,
            )
            server.history.append(record)
            log.info("round %d loss %.4f F1 %.2f", record.round, mean_loss, record.f1)
            if on_round is not None:
                on_round(server)
    finally:
        if pool is not None:
            pool.shutdown()
    return server.global_params, server

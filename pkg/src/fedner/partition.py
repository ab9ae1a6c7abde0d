"""Client partitions of a corpus and their heterogeneity statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import ENTITY_TYPES, Corpus, sentence_spans

SCHEMES = ("uniform", "skewed")


@dataclass(frozen=True)
class PartitionPlan:
    scheme: str = "uniform"
    n_clients: int = 8
    seed: int = 1990
    min_size: int = 200
    max_size: int = 872

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.n_clients < 1:
            raise ValueError(f"n_clients must be >= 1, got {self.n_clients}")
        if self.scheme == "skewed" and self.min_size > self.max_size:
            raise ValueError(f"min_size {self.min_size} exceeds max_size {self.max_size}")


@dataclass(frozen=True)
class Partition:
    client_id: int
    sentence_indices: tuple[int, ...]

    def __len__(self):
        return len(self.sentence_indices)


def _shuffled(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def split_uniform(corpus_size: int, n_clients: int, seed: int) -> list[Partition]:
    """Seeded shuffle dealt round-robin; sizes differ by at most one.

    ``corpus_size`` may be a Corpus or a sentence count.  Indices inside each
    partition are kept in ascending order.
    """
    n = corpus_size if isinstance(corpus_size, int) else len(corpus_size)
    if n_clients < 1 or n_clients > n:
        raise ValueError(f"cannot split {n} sentences across {n_clients} clients")
    order = _shuffled(n, seed)
    return [Partition(k, tuple(sorted(int(i) for i in order[k::n_clients]))) for k in range(n_clients)]


def skewed_sizes(n: int, n_clients: int, min_size: int, max_size: int) -> list[int]:
    """Linear ramp from ``min_size`` to ``max_size``; the residual goes to the last client."""
    if n_clients == 1:
        return [n]
    if n_clients * (min_size + max_size) / 2 > n:
        raise ValueError(
            f"ramp {min_size}..{max_size} over {n_clients} clients needs more than {n} sentences"
        )
    step = (max_size - min_size) / (n_clients - 1)
    sizes = [math.floor(min_size + k * step + 0.5) for k in range(n_clients)]
    if sum(sizes) > n:
        raise ValueError(f"rounded ramp needs {sum(sizes)} sentences, corpus has {n}")
    sizes[-1] += n - sum(sizes)
    return sizes


def split_skewed(corpus_size, n_clients: int, seed: int, min_size: int, max_size: int) -> list[Partition]:
    n = corpus_size if isinstance(corpus_size, int) else len(corpus_size)
    sizes = skewed_sizes(n, n_clients, min_size, max_size)
    order = _shuffled(n, seed)
    bounds = np.cumsum([0] + sizes)
    return [
        Partition(k, tuple(sorted(int(i) for i in order[bounds[k] : bounds[k + 1]]))) for k in range(n_clients)
    ]


def make_partitions(corpus_size, plan: PartitionPlan) -> list[Partition]:
    if plan.scheme == "uniform":
        return split_uniform(corpus_size, plan.n_clients, plan.seed)
    return split_skewed(corpus_size, plan.n_clients, plan.seed, plan.min_size, plan.max_size)


def check_cover(partitions, n: int) -> None:
    """Raise unless the partitions are disjoint and cover ``range(n)``."""
    seen = np.zeros(n, dtype=np.int64)
    for p in partitions:
        idx = np.asarray(p.sentence_indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError(f"client {p.client_id} has out-of-range indices")
        np.add.at(seen, idx, 1)
    if np.any(seen != 1):
        raise ValueError(f"{int(np.sum(seen == 0))} sentences unassigned, {int(np.sum(seen > 1))} assigned twice")


@dataclass(frozen=True)
class PartitionStats:
    tag_counts: list[dict[str, int]]
    unique_counts: list[dict[str, int]]
    cooccurrence: dict[int, int]

    def clients_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["client_id"] + [f"b_{t.lower()}" for t in _CSV_TYPES] + [f"unique_{t.lower()}" for t in _CSV_TYPES]
        )
        for k, (tags, uniq) in enumerate(zip(self.tag_counts, self.unique_counts)):
            writer.writerow([k] + [tags[t] for t in _CSV_TYPES] + [uniq[t] for t in _CSV_TYPES])
        return out.getvalue()

    def cooccurrence_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["k", "count"])
        for k in sorted(self.cooccurrence):
            writer.writerow([k, self.cooccurrence[k]])
        return out.getvalue()


_CSV_TYPES = ("LOC", "ORG", "PER", "MISC")


def tag_histogram(corpus: Corpus, partitions) -> list[dict[str, int]]:
    """B-X tag counts per client and type."""
    rows = []
    for p in partitions:
        counts = dict.fromkeys(ENTITY_TYPES, 0)
        for i in p.sentence_indices:
            for tag in corpus[i].tags:
                if tag.startswith("B-"):
                    counts[tag[2:]] += 1
        rows.append(counts)
    return rows


def _client_forms(corpus: Corpus, partitions) -> list[set[tuple[str, str]]]:
    forms = []
    for p in partitions:
        found = set()
        for i in p.sentence_indices:
            found.update((span.surface, span.entity_type) for span in sentence_spans(corpus[i]))
        forms.append(found)
    return forms


def _form_client_counts(client_forms) -> dict[tuple[str, str], int]:
    counts = {}
    for forms in client_forms:
        for form in forms:
            counts[form] = counts.get(form, 0) + 1
    return counts


def unique_entities(corpus: Corpus, partitions) -> list[dict[str, int]]:
    """Per client and type: distinct (surface, type) forms found in that client only."""
    client_forms = _client_forms(corpus, partitions)
    n_clients_with = _form_client_counts(client_forms)
    rows = []
    for forms in client_forms:
        counts = dict.fromkeys(ENTITY_TYPES, 0)
        for surface, etype in forms:
            if n_clients_with[(surface, etype)] == 1:
                counts[etype] += 1
        rows.append(counts)
    return rows


def cooccurrence_histogram(corpus: Corpus, partitions) -> dict[int, int]:
    """For K = 1..N, the number of distinct entity forms present in exactly K clients."""
    partitions = list(partitions)
    histogram = dict.fromkeys(range(1, len(partitions) + 1), 0)
    for k in _form_client_counts(_client_forms(corpus, partitions)).values():
        histogram[k] += 1
    return histogram


def partition_stats(corpus: Corpus, partitions) -> PartitionStats:
    return PartitionStats(
        tag_histogram(corpus, partitions),
        unique_entities(corpus, partitions),
        cooccurrence_histogram(corpus, partitions),
    )


def manifest(plan: PartitionPlan, partitions) -> dict:
    out = {
        "scheme": plan.scheme,
        "seed": plan.seed,
        "n_clients": plan.n_clients,
        "sizes": [len(p) for p in partitions],
        "assignments": {str(p.client_id): list(p.sentence_indices) for p in partitions},
    }
    if plan.scheme == "skewed":
        out["min_size"] = plan.min_size
        out["max_size"] = plan.max_size
    return out


def save_manifest(path, plan: PartitionPlan, partitions) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest(plan, partitions), f, indent=1)
        f.write("\n")


def load_manifest(path) -> tuple[PartitionPlan, list[Partition]]:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    plan = PartitionPlan(
        obj["scheme"], obj["n_clients"], obj["seed"], obj.get("min_size", 200), obj.get("max_size", 872)
    )
    partitions = [Partition(k, tuple(obj["assignments"][str(k)])) for k in range(plan.n_clients)]
    if [len(p) for p in partitions] != obj["sizes"]:
        raise ValueError(f"{path}: sizes do not match assignments")
    return plan, partitions

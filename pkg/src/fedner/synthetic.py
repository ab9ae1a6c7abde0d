"""Miniature newswire-style NER corpus and matching word vectors.

The bundled files under ``fedner/data`` are produced by :func:`write_bundled`
and are byte-identical across regenerations.
"""

from __future__ import annotations

import random
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Corpus, EmbeddingTable, Sentence, read_conll

FIRST_NAMES = """John Mary Peter Anna Michael Laura David Sarah James Elena Thomas Maria Robert
Julia Daniel Sophie Andrew Nina Paul Clara Martin Helen Stefan Ingrid Carlos Yuki""".split()
LAST_NAMES = """Smith Mueller Rossi Tanaka Johnson Petrov Garcia Dubois Novak Larsen Brown
Keller Moreau Silva Kowalski Jensen Fischer Costa Becker Ivanova""".split()
LOCATIONS = [
    "London", "Paris", "Berlin", "Tokyo", "Madrid", "Rome", "Moscow", "Cairo", "Sydney",
    "Toronto", "Vienna", "Prague", "Lisbon", "Oslo", "Dublin", "Athens", "Brazil", "Germany",
    "France", "Japan", "Canada", "Italy", "Spain", "Norway", "New York", "Los Angeles",
    "Hong Kong", "South Africa", "New Zealand", "Buenos Aires", "Rio de Janeiro",
]
ORGANIZATIONS = [
    "Reuters", "Siemens", "Toyota", "Nestle", "Fiat", "Gazprom", "Volvo", "Nokia", "Unilever",
    "United Nations", "World Bank", "European Union", "Bank of England", "General Motors",
    "Deutsche Bank", "Red Cross", "Interpol", "NATO", "Ajax Amsterdam", "Real Madrid",
    "Air France", "Royal Dutch Shell", "Microsoft", "Sony",
]
MISCELLANEOUS = [
    "German", "French", "Japanese", "Italian", "Spanish", "Russian", "British", "Brazilian",
    "Canadian", "Norwegian", "World Cup", "Olympic Games", "Davis Cup", "Tour de France",
    "Euro", "Nobel Prize", "Christmas", "Grand Prix",
]

TEMPLATES = [
    "{PER} said on Monday that {ORG} would open an office in {LOC} .",
    "{ORG} shares rose 3 percent in {LOC} after the announcement .",
    "{PER} , a spokesman for {ORG} , declined to comment .",
    "The {MISC} government said it would send troops to {LOC} .",
    "{PER} won the {MISC} final in {LOC} on Sunday .",
    "Police in {LOC} arrested {PER} late on Tuesday .",
    "{ORG} reported a net profit of 120 million dollars .",
    "{MISC} officials met {PER} in {LOC} to discuss trade .",
    "Talks between {ORG} and {ORG} ended without agreement .",
    "{PER} told reporters in {LOC} that the deal was done .",
    "The {MISC} team beat the {MISC} team 2 - 1 .",
    "Analysts at {ORG} expect growth to slow this year .",
    "{PER} will travel to {LOC} next week , {ORG} said .",
    "Heavy rain hit {LOC} and parts of {LOC} overnight .",
    "The match was played in front of 40,000 fans .",
    "Prices fell sharply on Friday amid weak demand .",
    "{PER} and {PER} signed the agreement in {LOC} .",
    "{ORG} chief executive {PER} resigned on Wednesday .",
    "A {MISC} court sentenced {PER} to five years in prison .",
    "Share prices in {LOC} closed lower on Thursday .",
    "Soccer results : {ORG} {ORG} 2 1 .",
]

FILLERS = {
    "PER": lambda rng: [rng.choice(FIRST_NAMES), rng.choice(LAST_NAMES)]
    if rng.random() < 0.7
    else [rng.choice(LAST_NAMES)],
    "LOC": lambda rng: rng.choice(LOCATIONS).split(),
    "ORG": lambda rng: rng.choice(ORGANIZATIONS).split(),
    "MISC": lambda rng: rng.choice(MISCELLANEOUS).split(),
}


def _iob1(tags: list[str]) -> list[str]:
    """BIO2 -> IOB1: B-X only where an X entity directly follows another X entity."""
    out = []
    prev = "O"
    for tag in tags:
        if tag.startswith("B-") and prev[2:] != tag[2:]:
            tag = "I-" + tag[2:]
        out.append(tag)
        prev = tag
    return out


def generate_sentences(n: int, seed: int) -> list[Sentence]:
    rng = random.Random(seed)
    sentences = []
    for _ in range(n):
        words, tags = [], []
        for piece in rng.choice(TEMPLATES).split():
            if piece.startswith("{") and piece.endswith("}"):
                etype = piece[1:-1]
                entity = FILLERS[etype](rng)
                words += entity
                tags += ["B-" + etype] + ["I-" + etype] * (len(entity) - 1)
            else:
                words.append(piece)
                tags.append("O")
        sentences.append(Sentence.from_pairs(words, _iob1(tags)))
    return sentences


def format_iob1(sentences, doc_every: int = 25) -> str:
    lines = []
    for i, sentence in enumerate(sentences):
        if i % doc_every == 0:
            lines += ["-DOCSTART- -X- O O", ""]
        lines += [f"{t.surface} X X {t.ner_tag}" for t in sentence.tokens]
        lines.append("")
    return "\n".join(lines) + "\n"


def synthetic_embeddings(words, dim: int = 50, seed: int = 1990) -> EmbeddingTable:
    """Lowercased vectors: type centroid for gazetteer words plus per-word noise.

    Mimics the clustering of distributional vectors so entity words of one type
    are near each other.
    """
    rng = np.random.default_rng(seed)
    centroids = {t: rng.normal(0.0, 0.5, dim) for t in ("PER", "LOC", "ORG", "MISC")}
    gazetteer = {}
    for etype, names in (
        ("PER", FIRST_NAMES + LAST_NAMES),
        ("LOC", LOCATIONS),
        ("ORG", ORGANIZATIONS),
        ("MISC", MISCELLANEOUS),
    ):
        for name in names:
            for w in name.split():
                gazetteer.setdefault(w.lower(), etype)
    vectors = {}
    for word in sorted({w.lower() for w in words}):
        vec = rng.normal(0.0, 0.4, dim)
        if word in gazetteer:
            vec = vec + centroids[gazetteer[word]]
        vectors[word] = np.round(vec, 6)
    return EmbeddingTable(dim, vectors, "synthetic")


TRAIN_SIZE = 300
TEST_SIZE = 100


def write_bundled(directory, seed: int = 1990) -> None:
    directory = Path(directory)
    train = generate_sentences(TRAIN_SIZE, seed)
    test = generate_sentences(TEST_SIZE, seed + 1)
    (directory / "synthetic_train.conll").write_text(format_iob1(train), encoding="utf-8")
    (directory / "synthetic_test.conll").write_text(format_iob1(test), encoding="utf-8")


def data_path(name: str) -> Path:
    return Path(str(resources.files("fedner") / "data" / name))


def load_synthetic(split: str = "train") -> Corpus:
    """Bundled synthetic corpus as stored on disk (IOB1 tags)."""
    return read_conll(data_path(f"synthetic_{split}.conll"), split)


def bundled_embeddings(dim: int = 50, seed: int = 1990) -> EmbeddingTable:
    words = set()
    for split in ("train", "test"):
        for s in load_synthetic(split).sentences:
            words.update(s.words)
    # Context words a real vector file would cover regardless of the corpus.
    words.update(w for t in TEMPLATES for w in t.split() if not w.startswith("{"))
    return synthetic_embeddings(words, dim, seed)


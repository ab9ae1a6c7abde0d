"""CoNLL ingestion, tag-scheme normalization, vocabularies and word vectors."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

ENTITY_TYPES = ("LOC", "MISC", "ORG", "PER")
# Canonical BIO2 tagset used by the model; index order is fixed.
TAGS = ("O",) + tuple(f"{p}-{t}" for t in ENTITY_TYPES for p in ("B", "I"))
TAG_TO_ID = {t: i for i, t in enumerate(TAGS)}
SPLITS = ("train", "validation", "test", "combined")

PAD = "<PAD>"
UNK = "<UNK>"
PAD_ID = 0
UNK_ID = 1
DOCSTART = "-DOCSTART-"


class ConllParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class EmbeddingParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ContractError(ValueError):
    """An input violates a documented precondition."""


@dataclass(frozen=True)
class Token:
    surface: str
    ner_tag: str

    def __post_init__(self):
        if not self.surface:
            raise ContractError("token surface must be non-empty")
        if self.ner_tag not in TAG_TO_ID:
            raise ContractError(f"unknown tag {self.ner_tag!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ContractError("sentence must contain at least one token")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def tags(self) -> list[str]:
        return [t.ner_tag for t in self.tokens]

    @classmethod
    def from_pairs(cls, words, tags) -> Sentence:
        return cls(tuple(Token(w, t) for w, t in zip(words, tags, strict=True)))


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    split_label: str = "train"
    tag_vocab: tuple[str, ...] = field(default=None)

    def __post_init__(self):
        if self.split_label not in SPLITS:
            raise ContractError(f"unknown split label {self.split_label!r}")
        used = {t for s in self.sentences for t in s.tags} | {"O"}
        if self.tag_vocab is None:
            object.__setattr__(self, "tag_vocab", tuple(t for t in TAGS if t in used))
        elif not used <= set(self.tag_vocab):
            raise ContractError(f"tags {sorted(used - set(self.tag_vocab))} missing from tag_vocab")

    def __len__(self):
        return len(self.sentences)

    def __getitem__(self, i) -> Sentence:
        return self.sentences[i]

    def subset(self, indices) -> Corpus:
        return Corpus(tuple(self.sentences[i] for i in indices), self.split_label)


@dataclass(frozen=True, order=True)
class EntitySpan:
    start: int
    end: int
    entity_type: str
    surface: str = ""


_TAG_RE = re.compile(r"^(?:O|[BI]-(?:LOC|ORG|PER|MISC))$")


def parse_conll(raw_text: str, split_label: str = "train") -> Corpus:
    """Parse CoNLL column text: surface in column 0, NER tag in the last column.

    The column count is fixed by the first token line; POS/chunk columns are
    accepted and discarded.
    """
    sentences = []
    current: list[Token] = []
    n_cols = None
    for lineno, line in enumerate(raw_text.splitlines(), start=1):
        cols = line.split()
        if not cols:
            if current:
                sentences.append(Sentence(tuple(current)))
                current = []
            continue
        if cols[0] == DOCSTART:
            if current:
                sentences.append(Sentence(tuple(current)))
                current = []
            continue
        if n_cols is None:
            if len(cols) < 2:
                raise ConllParseError(lineno, f"expected at least 2 columns, got {len(cols)}")
            n_cols = len(cols)
        elif len(cols) != n_cols:
            raise ConllParseError(lineno, f"expected {n_cols} columns, got {len(cols)}")
        tag = cols[-1]
        if not _TAG_RE.match(tag):
            raise ConllParseError(lineno, f"invalid NER tag {tag!r}")
        current.append(Token(cols[0], tag))
    if current:
        sentences.append(Sentence(tuple(current)))
    return Corpus(tuple(sentences), split_label)


def read_conll(path, split_label: str = "train") -> Corpus:
    with open(path, encoding="utf-8") as f:
        return parse_conll(f.read(), split_label)


def format_conll(corpus: Corpus) -> str:
    """Two-column (surface, tag) serialization; parse_conll inverts it."""
    blocks = ["\n".join(f"{t.surface} {t.ner_tag}" for t in s.tokens) for s in corpus.sentences]
    return "".join(b + "\n\n" for b in blocks)


def combine(*corpora: Corpus) -> Corpus:
    return Corpus(tuple(s for c in corpora for s in c.sentences), "combined")


def bio2_tags(tags) -> list[str]:
    out = []
    prev = "O"
    for tag in tags:
        if tag.startswith("I-") and prev[2:] != tag[2:]:
            tag = "B-" + tag[2:]
        out.append(tag)
        prev = tag
    return out


def normalize_to_bio2(corpus: Corpus) -> Corpus:
    """Rewrite IOB1 (or mixed) tagging as BIO2; BIO2 input is returned unchanged."""
    sentences = tuple(Sentence.from_pairs(s.words, bio2_tags(s.tags)) for s in corpus.sentences)
    return Corpus(sentences, corpus.split_label)


def extract_spans(tags, words=None) -> list[EntitySpan]:
    """Maximal B-X (I-X)* runs of a BIO2 tag sequence, ordered by start."""
    spans = []
    start = etype = None
    for i, tag in enumerate(list(tags) + ["O"]):
        if etype is not None and tag != "I-" + etype:
            surface = " ".join(words[start:i]) if words is not None else ""
            spans.append(EntitySpan(start, i - 1, etype, surface))
            start = etype = None
        if tag.startswith("B-"):
            start, etype = i, tag[2:]
        elif tag.startswith("I-") and etype is None:
            raise ContractError(f"dangling {tag} at position {i}; tags are not BIO2")
    return spans


def sentence_spans(sentence: Sentence) -> list[EntitySpan]:
    return extract_spans(sentence.tags, sentence.words)


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]
    source_label: str = ""

    def __post_init__(self):
        for word, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ContractError(f"vector for {word!r} has shape {vec.shape}, expected ({self.dim},)")

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, word):
        return word in self.vectors


def _parse_embedding_lines(lines, dim: int, keep=None) -> dict[str, np.ndarray]:
    vectors = {}
    for lineno, line in enumerate(lines, start=1):
        cols = line.rstrip().split(" ")
        if cols == [""]:
            continue
        if len(cols) != dim + 1:
            raise EmbeddingParseError(lineno, f"expected {dim} values, got {len(cols) - 1}")
        word = cols[0]
        if word in vectors or (keep is not None and word not in keep):
            continue
        try:
            vectors[word] = np.array(cols[1:], dtype=np.float64)
        except ValueError as e:
            raise EmbeddingParseError(lineno, str(e)) from None
    return vectors


def load_embeddings(raw_text: str, dim: int, source_label: str = "", keep=None) -> EmbeddingTable:
    """Parse "word v1 ... v_dim" lines; the first occurrence of a word wins.

    With ``keep``, only words in that set are stored (every line is still
    checked for arity).
    """
    return EmbeddingTable(dim, _parse_embedding_lines(raw_text.splitlines(), dim, keep), source_label)


def read_embeddings(path, dim: int, keep=None) -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        return EmbeddingTable(dim, _parse_embedding_lines(f, dim, keep), str(path))


def lookup_forms(corpora) -> set[str]:
    """Every surface form and its lowercase, i.e. the keys an embedding lookup may need."""
    forms = set()
    for corpus in corpora:
        for sentence in corpus.sentences:
            for word in sentence.words:
                forms.add(word)
                forms.add(word.lower())
    return forms


def format_embeddings(table: EmbeddingTable) -> str:
    return "".join(
        word + " " + " ".join(repr(float(v)) for v in vec) + "\n" for word, vec in table.vectors.items()
    )


@dataclass(frozen=True)
class Vocabulary:
    word_to_id: dict[str, int]
    char_to_id: dict[str, int]

    @property
    def n_words(self) -> int:
        return len(self.word_to_id)

    @property
    def n_chars(self) -> int:
        return len(self.char_to_id)

    def word_id(self, word: str) -> int:
        wid = self.word_to_id.get(word)
        if wid is None:
            wid = self.word_to_id.get(word.lower(), UNK_ID)
        return wid

    def char_id(self, ch: str) -> int:
        return self.char_to_id.get(ch, UNK_ID)

    def words(self) -> list[str]:
        return sorted(self.word_to_id, key=self.word_to_id.__getitem__)

    def to_json(self) -> dict:
        return {"words": self.words(), "chars": sorted(self.char_to_id, key=self.char_to_id.__getitem__)}

    @classmethod
    def from_json(cls, obj) -> Vocabulary:
        return cls({w: i for i, w in enumerate(obj["words"])}, {c: i for i, c in enumerate(obj["chars"])})


def build_vocabulary(corpora, embeddings: EmbeddingTable | None = None) -> Vocabulary:
    corpora = list(corpora)
    if not corpora:
        raise ContractError("build_vocabulary needs at least one corpus")
    words = set()
    chars = set()
    for corpus in corpora:
        for sentence in corpus.sentences:
            for token in sentence.tokens:
                words.add(token.surface)
                chars.update(token.surface)
    if embeddings is not None:
        words.update(embeddings.vectors)
    words -= {PAD, UNK}
    chars -= {PAD, UNK}
    word_to_id = {PAD: PAD_ID, UNK: UNK_ID}
    for w in sorted(words):
        word_to_id[w] = len(word_to_id)
    char_to_id = {PAD: PAD_ID, UNK: UNK_ID}
    for c in sorted(chars):
        char_to_id[c] = len(char_to_id)
    return Vocabulary(word_to_id, char_to_id)


def embedding_matrix(vocab: Vocabulary, embeddings: EmbeddingTable) -> np.ndarray:
    """Rows aligned with vocabulary ids; lowercase fallback, zeros for PAD/UNK/misses."""
    matrix = np.zeros((vocab.n_words, embeddings.dim))
    for word, wid in vocab.word_to_id.items():
        if wid in (PAD_ID, UNK_ID):
            continue
        vec = embeddings.vectors.get(word)
        if vec is None:
            vec = embeddings.vectors.get(word.lower())
        if vec is not None:
            matrix[wid] = vec
    return matrix


def tag_totals(corpus: Corpus) -> dict[str, int]:
    """Number of B-X tags per entity type (BIO2 input)."""
    counts = dict.fromkeys(ENTITY_TYPES, 0)
    for sentence in corpus.sentences:
        for tag in sentence.tags:
            if tag.startswith("B-"):
                counts[tag[2:]] += 1
    return counts

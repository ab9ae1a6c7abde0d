"""Entity-level precision/recall/F1 and convergence logs."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

from .corpus import ENTITY_TYPES, TAGS, Corpus, bio2_tags, extract_spans
from .tagger import decode, encode_sentence, make_batch


@dataclass(frozen=True)
class Scores:
    gold: int
    predicted: int
    correct: int

    @property
    def precision(self) -> float:
        return 100.0 * self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def to_json(self) -> dict:
        return {**asdict(self), "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class EvalReport:
    per_type: dict[str, Scores]
    micro: Scores

    @property
    def precision(self):
        return self.micro.precision

    @property
    def recall(self):
        return self.micro.recall

    @property
    def f1(self):
        return self.micro.f1

    def to_json(self) -> dict:
        return {"micro": self.micro.to_json(), "per_type": {t: s.to_json() for t, s in self.per_type.items()}}

    def csv_row(self) -> list:
        return [f"{self.precision:.4f}", f"{self.recall:.4f}", f"{self.f1:.4f}"]


def _key(span):
    return (span.entity_type, span.start, span.end)


def entity_prf(gold, pred) -> EvalReport:
    """Exact-match span scoring; ``gold`` and ``pred`` are per-sentence span collections."""
    gold, pred = list(gold), list(pred)
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    counts = {t: [0, 0, 0] for t in ENTITY_TYPES}
    for g_spans, p_spans in zip(gold, pred):
        g_keys = {_key(s) for s in g_spans}
        p_keys = {_key(s) for s in p_spans}
        for etype, _, _ in g_keys:
            counts[etype][0] += 1
        for etype, _, _ in p_keys:
            counts[etype][1] += 1
        for etype, _, _ in g_keys & p_keys:
            counts[etype][2] += 1
    per_type = {t: Scores(*c) for t, c in counts.items()}
    micro = Scores(*(sum(c[i] for c in counts.values()) for i in range(3)))
    return EvalReport(per_type, micro)


def score_tag_sequences(gold_tags, pred_tags) -> EvalReport:
    """Score raw tag sequences; ill-formed I- runs open a new entity as in conlleval."""
    return entity_prf(
        [extract_spans(bio2_tags(g)) for g in gold_tags],
        [extract_spans(bio2_tags(p)) for p in pred_tags],
    )


def predict_tags(corpus: Corpus, params, vocab, batch_size: int = 100, encoded=None) -> list[list[str]]:
    if encoded is None:
        encoded = [encode_sentence(s, vocab) for s in corpus.sentences]
    predicted = []
    for i in range(0, len(encoded), batch_size):
        for path in decode(make_batch(encoded[i : i + batch_size]), params):
            predicted.append([TAGS[t] for t in path])
    return predicted


def evaluate_model(test: Corpus, params, vocab, batch_size: int = 100, encoded=None) -> EvalReport:
    """Viterbi-decode ``test`` with dropout off and score against its (BIO2) gold tags."""
    predicted = predict_tags(test, params, vocab, batch_size, encoded)
    return score_tag_sequences([s.tags for s in test.sentences], predicted)


@dataclass(frozen=True)
class LogRecord:
    index: int
    loss: float
    precision: float
    recall: float
    f1: float


@dataclass
class ConvergenceLog:
    index_name: str = "epoch"
    records: list[LogRecord] = field(default_factory=list)

    def append(self, record: LogRecord) -> None:
        if self.records and record.index <= self.records[-1].index:
            raise ValueError(f"log index {record.index} not after {self.records[-1].index}")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    @property
    def best(self) -> LogRecord | None:
        best = None
        for r in self.records:
            if best is None or r.f1 > best.f1:
                best = r
        return best

    @property
    def best_f1(self) -> float:
        return self.best.f1 if self.records else 0.0

    @property
    def best_index(self) -> int | None:
        return self.best.index if self.records else None

    @property
    def last(self) -> LogRecord | None:
        return self.records[-1] if self.records else None

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([self.index_name, "loss", "precision", "recall", "f1"])
        for r in self.records:
            writer.writerow([r.index, repr(r.loss), repr(r.precision), repr(r.recall), repr(r.f1)])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ConvergenceLog:
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        log = cls(header[0])
        for row in reader:
            log.append(LogRecord(int(row[0]), *(float(v) for v in row[1:])))
        return log

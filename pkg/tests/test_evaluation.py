import random

import pytest

from fedner.corpus import TAG_TO_ID, TAGS, EntitySpan, bio2_tags, extract_spans, sentence_spans
from fedner.evaluation import (
    ConvergenceLog,
    LogRecord,
    entity_prf,
    evaluate_model,
    score_tag_sequences,
)

from .conftest import tiny_model
from .oracles import conlleval_counts


def spans(*triples):
    return [EntitySpan(s, e, t) for t, s, e in triples]


def test_perfect_match(synthetic_test):
    gold = [sentence_spans(s) for s in synthetic_test.sentences]
    report = entity_prf(gold, gold)
    assert report.precision == report.recall == report.f1 == 100.0


def test_hand_counted_confusion():
    report = entity_prf([spans(("PER", 0, 1), ("LOC", 3, 3))], [spans(("PER", 0, 0), ("LOC", 3, 3))])
    assert (report.micro.correct, report.micro.predicted - report.micro.correct,
            report.micro.gold - report.micro.correct) == (1, 1, 1)
    assert report.precision == report.recall == report.f1 == 50.0
    assert report.per_type["LOC"].f1 == 100.0 and report.per_type["PER"].f1 == 0.0


def test_no_predictions():
    report = entity_prf([spans(("PER", 0, 1))], [[]])
    assert report.precision == 0.0 and report.recall == 0.0 and report.f1 == 0.0


def test_type_must_match():
    report = entity_prf([spans(("PER", 0, 1))], [spans(("ORG", 0, 1))])
    assert report.micro.correct == 0


def test_length_mismatch():
    with pytest.raises(ValueError):
        entity_prf([[], []], [[]])


def random_tags(rng, n):
    return [rng.choice(TAGS) for _ in range(n)]


def test_matches_conlleval_on_random_pairs():
    rng = random.Random(3)
    for _ in range(300):
        pairs = []
        for _ in range(rng.randint(1, 4)):
            n = rng.randint(1, 12)
            pairs.append(list(zip(random_tags(rng, n), random_tags(rng, n))))
        report = score_tag_sequences([[g for g, _ in s] for s in pairs], [[p for _, p in s] for s in pairs])
        ref = conlleval_counts(pairs)
        for etype, scores in report.per_type.items():
            assert (scores.correct, scores.gold, scores.predicted) == ref.get(etype, (0, 0, 0))


def test_symmetry_and_micro_sums():
    rng = random.Random(4)
    gold, pred = [], []
    for _ in range(50):
        n = rng.randint(1, 10)
        gold.append(extract_spans(bio2_tags(random_tags(rng, n))))
        pred.append(extract_spans(bio2_tags(random_tags(rng, n))))
    a, b = entity_prf(gold, pred), entity_prf(pred, gold)
    assert a.precision == b.recall and a.recall == b.precision
    for field in ("gold", "predicted", "correct"):
        assert getattr(a.micro, field) == sum(getattr(s, field) for s in a.per_type.values())
    for s in a.per_type.values():
        assert s.correct <= min(s.gold, s.predicted)
    order = list(range(50))
    rng.shuffle(order)
    assert entity_prf([gold[i] for i in order], [pred[i] for i in order]) == a


def test_f1_formula():
    report = entity_prf([spans(("PER", 0, 0), ("PER", 2, 2), ("LOC", 4, 4))], [spans(("PER", 0, 0))])
    p, r = report.precision, report.recall
    assert (p, r) == (100.0, pytest.approx(100 / 3))
    assert report.f1 == pytest.approx(2 * p * r / (p + r))


def test_evaluate_model_random_params(synthetic_test, small_vocab, small_embeddings):
    _, params = tiny_model(small_vocab, small_embeddings)
    report = evaluate_model(synthetic_test, params, small_vocab)
    assert report.micro.gold == sum(len(sentence_spans(s)) for s in synthetic_test.sentences)
    assert 0.0 <= report.f1 <= 100.0


def test_evaluate_model_oracle_decoder(monkeypatch, synthetic_test, small_vocab, small_embeddings):
    # A decoder that returns the gold path must score 100.
    from fedner import evaluation

    def gold_decode(batch, params):
        return [list(batch.gold_tags[b, : batch.mask[b].sum()]) for b in range(len(batch))]

    monkeypatch.setattr(evaluation, "decode", gold_decode)
    _, params = tiny_model(small_vocab, small_embeddings)
    report = evaluate_model(synthetic_test, params, small_vocab, batch_size=7)
    assert report.f1 == 100.0
    assert report.micro.gold == report.micro.correct > 0


def test_ill_formed_predictions_open_entities():
    report = score_tag_sequences([["B-PER", "I-PER", "O"]], [["I-PER", "I-PER", "O"]])
    assert report.f1 == 100.0
    assert TAG_TO_ID["O"] == 0


def test_convergence_log_round_trip():
    log = ConvergenceLog("round")
    log.append(LogRecord(1, 3.5, 10.0, 20.0, 13.3))
    log.append(LogRecord(2, 2.5, 50.0, 40.0, 44.4))
    log.append(LogRecord(3, 2.0, 45.0, 40.0, 42.0))
    assert log.best_f1 == 44.4 and log.best_index == 2 and log.last.index == 3
    assert ConvergenceLog.from_csv(log.to_csv()) == log
    with pytest.raises(ValueError):
        log.append(LogRecord(3, 1.0, 0, 0, 0))
    assert ConvergenceLog().to_csv() == "epoch,loss,precision,recall,f1\n"

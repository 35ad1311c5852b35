import pytest

from conftest import make_doc
from epistact.corpus import Corpus, stratified_split
from epistact.errors import ConfigError, CorpusFormatError
from epistact.experiment import human_upper_bound, run_experiment


def _split(corpus):
    return corpus.with_split(stratified_split(corpus, seed=1))


def test_majority_runs_are_identical(synthetic_corpus):
    result = run_experiment(_split(synthetic_corpus), "maj", runs=3)
    records = [r.to_dict() for r in result.reports]
    assert records[0] == records[1] == records[2]
    assert result.seeds == [13, 14, 15]
    assert result.aggregate.hl == pytest.approx(result.reports[0].hl)
    assert result.selected_epochs == [0, 0, 0]


def test_single_run_aggregate_equals_report(synthetic_corpus):
    result = run_experiment(_split(synthetic_corpus), "concat", runs=1, epochs=2)
    assert result.aggregate.to_dict() == result.reports[0].to_dict()
    assert result.reports[0].confusion is None
    assert result.scores("m_a") == [result.reports[0].m_a]
    assert result.to_dict()["runs"][0]["hl"] == result.reports[0].hl


def test_explicit_seeds(synthetic_corpus):
    result = run_experiment(_split(synthetic_corpus), "separate", runs=2, seeds=[7, 8], epochs=1)
    assert result.seeds == [7, 8]
    with pytest.raises(ConfigError):
        run_experiment(_split(synthetic_corpus), "separate", runs=2, seeds=[7])


def test_experiment_needs_split(synthetic_corpus):
    with pytest.raises(CorpusFormatError):
        run_experiment(synthetic_corpus, "maj")


def test_human_upper_bound():
    gold = Corpus((make_doc("d", 6, [("EE", 0, 4)]),))
    annotated = Corpus((make_doc("d", 6, [("EE", 0, 4, "a1"), ("EE", 0, 3, "a2")]),))
    bound, per_annotator = human_upper_bound(gold, annotated)
    assert per_annotator["a1"].hl == 0
    assert per_annotator["a2"].hl > 0
    assert bound.hl == 0
    assert bound.m_a == pytest.approx(per_annotator["a1"].m_a)

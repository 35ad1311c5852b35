"""Repeated train/select/test runs and the human upper bound."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter
from typing import Sequence

from .const import (
    DEFAULT_EPOCHS,
    DEFAULT_RUNS,
    DEFAULT_SEED,
    DEFAULT_WORKERS,
    SELECT_HL,
    SPLIT_DEV,
    SPLIT_TEST,
    SPLIT_TRAIN,
)
from .corpus import ACTIVITIES, Corpus
from .encoding import corpus_labelsets
from .errors import ConfigError, CorpusFormatError
from .metrics import EvalReport, evaluate, mean_report
from .tagger import Strategy, TaggerModel, predict_corpus, train

_LOGGER = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    strategy: Strategy
    seeds: list[int]
    reports: list[EvalReport]
    aggregate: EvalReport
    selected_epochs: list[int] = field(default_factory=list)

    def scores(self, metric: str) -> list[float | None]:
        """Per-run values of one flat metric (e.g. ``"m_a"``), for significance tests."""
        return [report.metric(metric) for report in self.reports]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "seeds": list(self.seeds),
            "selected_epochs": list(self.selected_epochs),
            "runs": [report.to_dict() for report in self.reports],
            "aggregate": self.aggregate.to_dict(),
        }


def _single_run(
    corpus: Corpus, strategy: Strategy, seed: int, epochs: int, select: str
) -> tuple[EvalReport, int]:
    test = corpus.part(SPLIT_TEST)
    if strategy is Strategy.MAJ:
        model = TaggerModel.majority_baseline()
        epoch = 0
    else:
        model = train(
            corpus.part(SPLIT_TRAIN),
            strategy,
            epochs=epochs,
            seed=seed,
            dev=corpus.part(SPLIT_DEV),
            select=select,
        )
        epoch = model.tasks[0].epoch
    report = evaluate(corpus_labelsets(test), predict_corpus(model, test))
    report.confusion = None
    return report, epoch


def run_experiment(
    corpus: Corpus,
    strategy: Strategy | str,
    runs: int = DEFAULT_RUNS,
    seeds: Sequence[int] | None = None,
    epochs: int = DEFAULT_EPOCHS,
    select: str = SELECT_HL,
    workers: int = DEFAULT_WORKERS,
    base_seed: int = DEFAULT_SEED,
) -> ExperimentResult:
    """Train on train, select the epoch on dev, score on test; ``runs`` times.

    Run i uses ``seeds[i]`` or ``base_seed + i``. Runs are independent, so
    ``workers > 1`` farms them out to processes without changing results.
    """
    strategy = Strategy(strategy)
    if runs < 1:
        raise ConfigError("runs must be at least 1")
    if corpus.split is None:
        raise CorpusFormatError("experiment needs a corpus with a train/dev/test split", field="split")
    if seeds is None:
        seeds = [base_seed + i for i in range(runs)]
    elif len(seeds) != runs:
        raise ConfigError(f"{runs} runs need {runs} seeds, got {len(seeds)}")
    seeds = list(seeds)

    started = perf_counter()
    args = [(corpus, strategy, seed, epochs, select) for seed in seeds]
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_single_run, *zip(*args)))
    else:
        outcomes = [_single_run(*a) for a in args]

    reports = [report for report, _ in outcomes]
    result = ExperimentResult(
        strategy=strategy,
        seeds=seeds,
        reports=reports,
        aggregate=mean_report(reports),
        selected_epochs=[epoch for _, epoch in outcomes],
    )
    _LOGGER.info(
        "🧪 %s: %d runs in %.2fs, mean HL %.4f",
        strategy.value,
        runs,
        perf_counter() - started,
        result.aggregate.hl,
    )
    return result


def human_upper_bound(gold: Corpus, annotated: Corpus) -> tuple[EvalReport, dict[str, EvalReport]]:
    """Best score per metric reached by any single annotator against gold.

    Only documents present in both corpora are scored.
    """
    gold_sets = corpus_labelsets(gold)
    per_annotator: dict[str, EvalReport] = {}
    for annotator in annotated.annotators():
        if annotator is None:
            continue
        view = [d.for_annotator(annotator).gold_view() for d in annotated if d.doc_id in gold_sets]
        if not view:
            continue
        pred = corpus_labelsets(view)
        per_annotator[annotator] = evaluate({k: gold_sets[k] for k in pred}, pred)
    if not per_annotator:
        raise CorpusFormatError("no annotator overlaps the gold documents")

    reports = list(per_annotator.values())

    def best(values: list[float | None], lowest: bool = False) -> float | None:
        defined = [v for v in values if v is not None]
        if not defined:
            return None
        return min(defined) if lowest else max(defined)

    bound = EvalReport(
        hl=best([r.hl for r in reports], lowest=True),
        m_s={a: best([r.m_s[a] for r in reports]) for a in ACTIVITIES},
        m_a=best([r.m_a for r in reports]),
        m_o={a: best([r.m_o[a] for r in reports]) for a in ACTIVITIES},
        tokens=reports[0].tokens,
    )
    return bound, per_annotator

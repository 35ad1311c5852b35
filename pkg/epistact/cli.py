"""Command-line entry point.

Usage:
    python -m epistact stats --in med.jsonl
    python -m epistact gold --in med_annotators.jsonl --out med_gold.jsonl --threshold 4 --annotators 5
    python -m epistact experiment --in med_gold.jsonl --strategy concat --runs 10 --out concat.json
    python -m epistact significance --a concat.json --b separate.json --metric m_a --comparisons 3
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from .agreement import agreement_report, apply_resolutions, build_gold_corpus, study_from_corpus
from .config import STRATEGIES, RunConfig
from .const import (
    COMMANDS,
    FORMAT_CONLL,
    FORMAT_JSONL,
    REPORT_FORMATS,
    SELECT_HL,
    SELECT_MA,
    SPLIT_NAMES,
)
from .corpus import Corpus, Document, corpus_stats, read_corpus, serialize_corpus, stratified_split
from .encoding import (
    RepairPolicy,
    apply_preference,
    corpus_labelsets,
    export_conll,
    label_distribution,
    labelsets_to_segments,
    segments_to_labelsets,
    to_concat,
    to_multioutput,
    to_separate,
)
from .errors import ConfigError, CorpusFormatError, EpistactError
from .experiment import ExperimentResult, human_upper_bound, run_experiment
from .image_generator import generate_confusion_image
from .metrics import count_outperformed, evaluate, mann_whitney_u
from .reports import OutperformTable, distribution_table, emit_report, eval_table
from .tagger import Strategy, TaggerModel, predict, predict_corpus, train

_LOGGER = logging.getLogger(__name__)


class UsageError(EpistactError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epistact", description="Epistemic activity annotation toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--verbose", "-v", action="store_true", default=None, help="debug logging")
        p.add_argument("--seed", type=int, help="random seed (default: $EPISTACT_SEED or 13)")
        return p

    def fmt(p: argparse.ArgumentParser, *extra: str) -> None:
        p.add_argument("--format", choices=REPORT_FORMATS + extra, help="output format")

    p = command("validate", "check a corpus file")
    p.add_argument("--in", dest="input", required=True)

    p = command("stats", "corpus statistics")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", action="store_true", default=None, help="B/I/O token shares per activity")
    fmt(p)

    p = command("split", "stratified train/dev/test split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output")
    p.add_argument("--ratios", type=float, nargs=3, metavar=("TRAIN", "DEV", "TEST"))

    p = command("agreement", "alpha_U inter-annotator agreement")
    p.add_argument("--in", dest="input", required=True)
    fmt(p)

    p = command("gold", "majority-vote gold standard")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--threshold", type=int)
    p.add_argument("--annotators", type=int)
    p.add_argument("--undecided", help="write undecided segments (JSON lines)")
    p.add_argument("--resolved", help="adjudicated segments to add to the gold corpus")

    p = command("transform", "export label encodings")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output")
    p.add_argument("--strategy", choices=STRATEGIES)
    fmt(p, FORMAT_CONLL)

    p = command("train", "train a tagger")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dev")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--select", choices=(SELECT_HL, SELECT_MA))

    p = command("predict", "tag a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--out", dest="output")

    p = command("evaluate", "score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred")
    p.add_argument("--model")
    p.add_argument("--strategy", choices=STRATEGIES)
    fmt(p)

    p = command("confusion", "power-set confusion matrix")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred")
    p.add_argument("--model")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--image")
    fmt(p)

    p = command("significance", "Mann-Whitney U test of run scores")
    p.add_argument("--a", dest="scores_a", required=True)
    p.add_argument("--b", dest="scores_b")
    p.add_argument("--alpha", type=float)
    p.add_argument("--comparisons", type=int)
    p.add_argument("--metric")
    fmt(p)

    p = command("experiment", "repeated train/dev/test runs")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--split", help="split file written by 'split' (default: split with --seed)")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--runs", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--select", choices=(SELECT_HL, SELECT_MA))
    p.add_argument("--out", dest="output", help="write per-run results as JSON")
    fmt(p)

    p = command("upper-bound", "score every annotator against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--in", dest="input", required=True, help="corpus with annotator segments")
    fmt(p)
    return parser


# --- Helpers ---


def _emit(data: bytes | str, path: str | None = None) -> None:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    if path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(data, encoding="utf-8")
        _LOGGER.info("Wrote %s", target)
    else:
        sys.stdout.write(data)


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise CorpusFormatError(f"cannot read file: {err.strerror}", path=path) from err
    except json.JSONDecodeError as err:
        raise CorpusFormatError(err.msg, path=path, line=err.lineno) from err


def _require(config: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(config, n) is None]
    if missing:
        flag = {"scores_a": "a", "scores_b": "b"}.get(missing[0], missing[0])
        raise ConfigError(f"{config.command}: missing --{flag}")


def _prediction(config: RunConfig, gold: Corpus) -> dict:
    """Predicted LabelSets from --pred, --model or the majority baseline."""
    if config.pred:
        pred = read_corpus(config.pred)
        return corpus_labelsets(d.gold_view() for d in pred)
    if config.model:
        return predict_corpus(TaggerModel.load(config.model), gold)
    if config.strategy == Strategy.MAJ.value:
        return predict_corpus(TaggerModel.majority_baseline(), gold)
    raise ConfigError(f"{config.command}: give --pred, --model or --strategy maj")


def _load_split(config: RunConfig, corpus: Corpus) -> Corpus:
    if config.split:
        data = _read_json(config.split)
        if not isinstance(data, dict) or not set(data.values()) <= set(SPLIT_NAMES):
            raise CorpusFormatError("split file must map doc_id to train/dev/test", path=config.split)
        return corpus.with_split(data)
    return corpus.with_split(stratified_split(corpus, config.ratios, config.seed))


def _scores(data: Any, metric: str, path: str) -> list[float] | dict[str, list[float]]:
    """A score list, a method -> scores map, or an experiment result file."""
    if isinstance(data, list):
        return [float(v) for v in data]
    if isinstance(data, dict) and "runs" in data:
        return [float(run[metric]) for run in data["runs"] if run.get(metric) is not None]
    if isinstance(data, dict):
        return {
            method: _scores(value, metric, path)  # type: ignore[misc]
            for method, value in data.items()
        }
    raise CorpusFormatError("expected a list of scores or a mapping of method to scores", path=path)


# --- Subcommands ---


def cmd_validate(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    segments = sum(len(d.segments) for d in corpus)
    annotators = [a for a in corpus.annotators() if a is not None]
    _emit(f"OK: {len(corpus)} documents, {segments} segments, {len(annotators)} annotators\n")


def cmd_stats(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    if config.labels:
        _emit(emit_report(distribution_table(label_distribution(corpus)), config.format), config.output)
        return
    _emit(emit_report(corpus_stats(corpus), config.format), config.output)


def cmd_split(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    split = stratified_split(corpus, config.ratios, config.seed)
    _emit(json.dumps(split, ensure_ascii=False, indent=0) + "\n", config.output)


def cmd_agreement(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    report = agreement_report(study_from_corpus(corpus), label=Path(config.input).stem)
    _emit(emit_report(report, config.format), config.output)


def cmd_gold(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    # annotators who marked nothing on a document still count as votes against
    roster = tuple(a for a in corpus.annotators() if a is not None)
    if len(roster) != config.annotators:
        raise ConfigError(
            f"{config.input}: found {len(roster)} annotators ({', '.join(roster)}), "
            f"--annotators is {config.annotators}"
        )
    gold, undecided = build_gold_corpus(corpus, config.threshold, config.annotators, roster)
    if config.resolved:
        gold = apply_resolutions(gold, read_corpus(config.resolved))
    _emit(serialize_corpus(gold), config.output)
    if config.undecided:
        _emit(emit_report(undecided, FORMAT_JSONL) if undecided else b"", config.undecided)
    sys.stderr.write(f"{sum(len(d.segments) for d in gold)} gold segments, {len(undecided)} undecided\n")


def _strategy_record(strategy: Strategy, doc: Document) -> dict:
    labelsets = segments_to_labelsets(doc)
    if strategy is Strategy.SEPARATE:
        labels: Any = {a.value: [t.value for t in to_separate(labelsets, a)] for a in to_multioutput(labelsets)}
    elif strategy is Strategy.MULTIOUTPUT:
        outputs = to_multioutput(labelsets)
        labels = [[t.value for t in record] for record in zip(*outputs.values())]
    elif strategy is Strategy.CONCAT:
        labels = [str(c) for c in to_concat(labelsets)]
    elif strategy is Strategy.PREF:
        labels = [str(label) for label in apply_preference(doc)]
    else:
        labels = [str(next(iter(s))) for s in predict(TaggerModel.majority_baseline(), doc)]
    return {"doc_id": doc.doc_id, "strategy": strategy.value, "labels": labels}


def cmd_transform(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    if config.format == FORMAT_CONLL:
        _emit(export_conll(corpus), config.output)
        return
    strategy = Strategy(config.strategy)
    lines = [json.dumps(_strategy_record(strategy, doc), ensure_ascii=False) for doc in corpus]
    _emit("".join(line + "\n" for line in lines), config.output)


def cmd_train(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    dev = read_corpus(config.dev) if config.dev else None
    model = train(corpus, config.strategy, config.epochs, config.seed, dev=dev, select=config.select)
    model.save(config.model)


def cmd_predict(config: RunConfig) -> None:
    corpus = read_corpus(config.input)
    if config.model:
        model = TaggerModel.load(config.model)
    elif config.strategy == Strategy.MAJ.value:
        model = TaggerModel.majority_baseline()
    else:
        raise ConfigError("predict: give --model or --strategy maj")
    documents = []
    for doc in corpus:
        segments = labelsets_to_segments(predict(model, doc), RepairPolicy.IOB_REPAIR)
        documents.append(Document(doc.doc_id, doc.domain, doc.case_id, doc.tokens, segments, doc.extra))
    _emit(serialize_corpus(documents), config.output)


def cmd_evaluate(config: RunConfig) -> None:
    gold = read_corpus(config.gold)
    report = evaluate(corpus_labelsets(gold), _prediction(config, gold))
    _emit(emit_report(report, config.format), config.output)


def cmd_confusion(config: RunConfig) -> None:
    gold = read_corpus(config.gold)
    report = evaluate(corpus_labelsets(gold), _prediction(config, gold))
    if config.image:
        generate_confusion_image(report.confusion, config.image, title=Path(config.gold).stem)
    _emit(emit_report(report.confusion, config.format), config.output)


def cmd_significance(config: RunConfig) -> None:
    scores_a = _scores(_read_json(config.scores_a), config.metric, config.scores_a)
    higher_is_better = config.metric != "hl"
    if isinstance(scores_a, dict):
        wins = count_outperformed(scores_a, config.alpha, higher_is_better)
        means = {m: sum(v) / len(v) for m, v in scores_a.items()}
        _emit(emit_report(OutperformTable(config.metric, means, wins), config.format), config.output)
        return
    _require(config, "scores_b")
    scores_b = _scores(_read_json(config.scores_b), config.metric, config.scores_b)
    if isinstance(scores_b, dict):
        raise CorpusFormatError("--b must hold a single list of scores", path=config.scores_b)
    result = mann_whitney_u(scores_a, scores_b, config.alpha, config.comparisons)
    _emit(emit_report(result, config.format), config.output)


def cmd_experiment(config: RunConfig) -> None:
    corpus = _load_split(config, read_corpus(config.input))
    result: ExperimentResult = run_experiment(
        corpus,
        config.strategy,
        runs=config.runs,
        epochs=config.epochs,
        select=config.select,
        workers=config.workers,
        base_seed=config.seed,
    )
    if config.output:
        _emit(json.dumps(result.to_dict(), ensure_ascii=False, indent=1) + "\n", config.output)
    _emit(emit_report(result, config.format))


def cmd_upper_bound(config: RunConfig) -> None:
    bound, per_annotator = human_upper_bound(read_corpus(config.gold), read_corpus(config.input))
    table = eval_table({**per_annotator, "upper bound": bound})
    _emit(emit_report(table, config.format), config.output)


HANDLERS: dict[str, Callable[[RunConfig], None]] = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "split": cmd_split,
    "agreement": cmd_agreement,
    "gold": cmd_gold,
    "transform": cmd_transform,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "confusion": cmd_confusion,
    "significance": cmd_significance,
    "experiment": cmd_experiment,
    "upper-bound": cmd_upper_bound,
}
assert set(HANDLERS) == set(COMMANDS)


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger("epistact").setLevel(logging.DEBUG if verbose else logging.WARNING)


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; 0 on success, 1 on any input or usage error."""
    try:
        args = build_parser().parse_args(argv)
        config = RunConfig.from_mapping(vars(args))
    except EpistactError as err:
        sys.stderr.write(f"error: {err}\n")
        return 1
    _configure_logging(config.verbose)
    try:
        HANDLERS[config.command](config)
    except (EpistactError, OSError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 1
    return 0

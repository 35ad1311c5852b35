"""Structured perceptron tagger behind the five strategies.

Every strategy is a set of tasks. A task is one linear-chain model over its
own label inventory (B/I/O for one activity, observed ConcatLabels, or the
nine single labels). Decoding is Viterbi with illegal BIO transitions masked
out; task outputs are merged back into LabelSets through ``encoding``.
"""

from __future__ import annotations

import json
import logging
import random
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .const import (
    DEFAULT_EPOCHS,
    DEFAULT_SEED,
    FEATURE_WINDOW,
    MODEL_FORMAT,
    MODEL_VERSION,
    PAD_LEFT,
    PAD_RIGHT,
    SELECT_HL,
    SELECT_MA,
    SENTENCE_END_TOKENS,
    STRATEGY_CONCAT,
    STRATEGY_MAJ,
    STRATEGY_MULTIOUTPUT,
    STRATEGY_PREF,
    STRATEGY_SEPARATE,
)
from .corpus import ACTIVITIES, ALL_LABELS, Activity, BioTag, Corpus, Document, Label, make_labelset
from .encoding import (
    ALL_O,
    ConcatLabel,
    RepairPolicy,
    apply_preference,
    find_invalid_continuations,
    from_concat,
    from_separate,
    from_single_label,
    repair_labelsets,
    segments_to_labelsets,
    to_concat,
    to_separate,
)
from .errors import ConfigError, ModelFormatError
from .metrics import hamming_loss, m_a, m_s

_LOGGER = logging.getLogger(__name__)

LabelSets = list[frozenset[Label]]


class Strategy(str, Enum):
    SEPARATE = STRATEGY_SEPARATE
    CONCAT = STRATEGY_CONCAT
    MULTIOUTPUT = STRATEGY_MULTIOUTPUT
    PREF = STRATEGY_PREF
    MAJ = STRATEGY_MAJ

    @property
    def trainable(self) -> bool:
        return self is not Strategy.MAJ


TASK_CONCAT = "concat"
TASK_PREF = "pref"
MAJ_LABELSET = make_labelset([Label(BioTag.I, Activity.EE)])


# --- Features ---


def _is_punct(token: str) -> bool:
    return bool(token) and all(unicodedata.category(c).startswith("P") for c in token)


def _token_features(prefix: str, token: str) -> list[str]:
    features = [
        f"{prefix}w={token}",
        f"{prefix}lw={token.lower()}",
        f"{prefix}p3={token[:3]}",
        f"{prefix}s3={token[-3:]}",
    ]
    if token[:1].isupper():
        features.append(f"{prefix}cap")
    if token.isdigit():
        features.append(f"{prefix}digit")
    if _is_punct(token):
        features.append(f"{prefix}punct")
    return features


def extract_features(tokens: Sequence[str] | Document, index: int) -> tuple[str, ...]:
    """Binary indicator features of the token at ``index`` and its window."""
    if isinstance(tokens, Document):
        tokens = tokens.tokens
    if not 0 <= index < len(tokens):
        raise IndexError(f"token index {index} out of range")

    features = ["bias"]
    if index == 0:
        features.append("pos=first")
    if index == len(tokens) - 1:
        features.append("pos=last")
    if index == 0 or tokens[index - 1] in SENTENCE_END_TOKENS:
        features.append("pos=sent_start")
    for offset in range(-FEATURE_WINDOW, FEATURE_WINDOW + 1):
        position = index + offset
        prefix = f"{offset:+d}:" if offset else "0:"
        if position < 0:
            features.append(f"{prefix}pad={PAD_LEFT}")
        elif position >= len(tokens):
            features.append(f"{prefix}pad={PAD_RIGHT}")
        else:
            features.extend(_token_features(prefix, tokens[position]))
    return tuple(features)


# --- Tasks ---


def _components(task: str, label: str) -> dict[Activity, BioTag]:
    """Per-activity BIO tags carried by one task label."""
    if task == TASK_CONCAT:
        return dict(zip(ACTIVITIES, ConcatLabel.parse(label).tags))
    if task == TASK_PREF:
        parsed = Label.parse(label)
        return {} if parsed.activity is None else {parsed.activity: parsed.bio}
    return {Activity(task): BioTag(label)}


def _allowed(task: str, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Legal start labels and legal (previous, current) label pairs."""
    comps = [_components(task, label) for label in labels]
    start = np.array([all(tag is not BioTag.I for tag in c.values()) for c in comps])
    pairs = np.ones((len(labels), len(labels)), dtype=bool)
    for j, current in enumerate(comps):
        for activity, tag in current.items():
            if tag is not BioTag.I:
                continue
            for i, previous in enumerate(comps):
                if previous.get(activity, BioTag.O) is BioTag.O:
                    pairs[i, j] = False
    return start, pairs


def _targets(task: str, document: Document, labelsets: LabelSets) -> list[str]:
    if task == TASK_CONCAT:
        return [str(c) for c in to_concat(labelsets)]
    if task == TASK_PREF:
        return [str(label) for label in apply_preference(document)]
    return [tag.value for tag in to_separate(labelsets, Activity(task))]


def _task_names(strategy: Strategy) -> tuple[str, ...]:
    if strategy in (Strategy.SEPARATE, Strategy.MULTIOUTPUT):
        return tuple(a.value for a in ACTIVITIES)
    if strategy is Strategy.CONCAT:
        return (TASK_CONCAT,)
    if strategy is Strategy.PREF:
        return (TASK_PREF,)
    raise ConfigError(f"strategy {strategy.value} is not trainable")


def viterbi_decode(
    scores: np.ndarray, transitions: np.ndarray, start: np.ndarray
) -> list[int]:
    """Highest scoring label path; -inf entries are forbidden moves."""
    trellis = np.zeros_like(scores)
    backpointers = np.zeros(scores.shape, dtype=np.int64)
    trellis[0] = scores[0] + start
    for t in range(1, scores.shape[0]):
        v = trellis[t - 1][:, np.newaxis] + transitions
        backpointers[t] = np.argmax(v, axis=0)
        trellis[t] = scores[t] + np.max(v, axis=0)
    path = [int(np.argmax(trellis[-1]))]
    for bp in backpointers[:0:-1]:
        path.append(int(bp[path[-1]]))
    path.reverse()
    return path


@dataclass
class TaskModel:
    """Weights of one linear-chain task."""

    name: str
    labels: tuple[str, ...]
    weights: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    epoch: int = 0
    history: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        legal_start, legal_pairs = _allowed(self.name, self.labels)
        self._start_mask = np.where(legal_start, 0.0, -np.inf)
        self._pair_mask = np.where(legal_pairs, 0.0, -np.inf)

    def decode(self, feature_ids: Sequence[np.ndarray]) -> list[str]:
        if not feature_ids:
            return []
        scores = np.stack([self.weights[ids].sum(axis=0) for ids in feature_ids])
        path = viterbi_decode(
            scores, self.transitions + self._pair_mask, self.start + self._start_mask
        )
        return [self.labels[i] for i in path]

    def to_dict(self) -> dict:
        rows, cols = np.nonzero(self.weights)
        return {
            "name": self.name,
            "labels": list(self.labels),
            "epoch": self.epoch,
            "history": list(self.history),
            "weights": [[int(r), int(c), float(self.weights[r, c])] for r, c in zip(rows, cols)],
            "transitions": [[float(v) for v in row] for row in self.transitions],
            "start": [float(v) for v in self.start],
        }

    @classmethod
    def from_dict(cls, data: Mapping, n_features: int) -> "TaskModel":
        labels = tuple(data["labels"])
        weights = np.zeros((n_features, len(labels)))
        for row, col, value in data["weights"]:
            if not (0 <= row < n_features and 0 <= col < len(labels)):
                raise IndexError(f"weight [{row}, {col}] outside {n_features}x{len(labels)}")
            weights[row, col] = value
        return cls(
            name=data["name"],
            labels=labels,
            weights=weights,
            transitions=np.array(data["transitions"], dtype=float).reshape(len(labels), len(labels)),
            start=np.array(data["start"], dtype=float),
            epoch=data.get("epoch", 0),
            history=list(data.get("history", [])),
        )


@dataclass
class TaggerModel:
    """A trained strategy: shared feature vocabulary plus one TaskModel per task."""

    strategy: Strategy
    features: dict[str, int] = field(default_factory=dict)
    tasks: list[TaskModel] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    epochs: int = 0
    select: str | None = None
    averaged: bool = True

    @classmethod
    def majority_baseline(cls) -> "TaggerModel":
        return cls(Strategy.MAJ, averaged=False)

    def feature_ids(self, tokens: Sequence[str]) -> list[np.ndarray]:
        """Known feature ids per token; unseen features are dropped."""
        result = []
        for t in range(len(tokens)):
            ids = [self.features[f] for f in extract_features(tokens, t) if f in self.features]
            result.append(np.array(sorted(set(ids)), dtype=np.int64))
        return result

    def to_dict(self) -> dict:
        vocabulary = sorted(self.features, key=self.features.__getitem__)
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "strategy": self.strategy.value,
            "seed": self.seed,
            "epochs": self.epochs,
            "select": self.select,
            "averaged": self.averaged,
            "features": vocabulary,
            "tasks": [task.to_dict() for task in self.tasks],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TaggerModel":
        if data.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"not an {MODEL_FORMAT} model file")
        if data.get("version") != MODEL_VERSION:
            raise ModelFormatError(
                f"model version {data.get('version')} is not supported (expected {MODEL_VERSION})"
            )
        try:
            features = {name: i for i, name in enumerate(data["features"])}
            return cls(
                strategy=Strategy(data["strategy"]),
                features=features,
                tasks=[TaskModel.from_dict(t, len(features)) for t in data["tasks"]],
                seed=data["seed"],
                epochs=data["epochs"],
                select=data.get("select"),
                averaged=data.get("averaged", True),
            )
        except (IndexError, KeyError, TypeError, ValueError) as err:
            raise ModelFormatError(f"malformed model file: {err}") from err

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        _LOGGER.info("💾 Saved %s model to %s", self.strategy.value, path)

    @classmethod
    def load(cls, path: str | Path) -> "TaggerModel":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ModelFormatError(f"{path}: not JSON ({err.msg})") from err
        return cls.from_dict(data)


# --- Prediction ---


def _merge(model: TaggerModel, outputs: Mapping[str, list[str]], n_tokens: int) -> LabelSets:
    if model.strategy is Strategy.CONCAT:
        raw = from_concat([ConcatLabel.parse(x) for x in outputs[TASK_CONCAT]])
    elif model.strategy is Strategy.PREF:
        raw = from_single_label([Label.parse(x) for x in outputs[TASK_PREF]])
    else:
        sequences = {
            a: [BioTag(x) for x in outputs[a.value]] if a.value in outputs else [BioTag.O] * n_tokens
            for a in ACTIVITIES
        }
        raw = from_separate(sequences)
    invalid = find_invalid_continuations(raw)
    if invalid:
        _LOGGER.warning("🔧 Repairing %d invalid continuations in a decoded sequence", len(invalid))
    return repair_labelsets(raw, RepairPolicy.IOB_REPAIR)


def predict(model: TaggerModel, document: Document | Sequence[str]) -> LabelSets:
    """Per-token LabelSets for one document."""
    tokens = document.tokens if isinstance(document, Document) else tuple(document)
    if model.strategy is Strategy.MAJ:
        return [MAJ_LABELSET] * len(tokens)
    feature_ids = model.feature_ids(tokens)
    outputs = {task.name: task.decode(feature_ids) for task in model.tasks}
    return _merge(model, outputs, len(tokens))


def predict_corpus(model: TaggerModel, corpus: Corpus | Iterable[Document]) -> dict[str, LabelSets]:
    return {doc.doc_id: predict(model, doc) for doc in corpus}


# --- Training ---


@dataclass
class _Example:
    doc_id: str
    feature_ids: list[np.ndarray]
    gold: LabelSets
    targets: dict[str, list[int]] = field(default_factory=dict)


class _Averaged:
    """Perceptron weights of one task with running sums for averaging."""

    def __init__(self, name: str, labels: tuple[str, ...], n_features: int) -> None:
        self.name = name
        self.labels = labels
        n_labels = len(labels)
        self.w = np.zeros((n_features, n_labels))
        self.u = np.zeros((n_features, n_labels))
        self.t = np.zeros((n_labels, n_labels))
        self.tu = np.zeros((n_labels, n_labels))
        self.s = np.zeros(n_labels)
        self.su = np.zeros(n_labels)
        legal_start, legal_pairs = _allowed(name, labels)
        self.start_mask = np.where(legal_start, 0.0, -np.inf)
        self.pair_mask = np.where(legal_pairs, 0.0, -np.inf)

    def guess(self, feature_ids: Sequence[np.ndarray]) -> list[int]:
        if not feature_ids:
            return []
        scores = np.stack([self.w[ids].sum(axis=0) for ids in feature_ids])
        return viterbi_decode(scores, self.t + self.pair_mask, self.s + self.start_mask)

    def update(self, feature_ids, gold: Sequence[int], guess: Sequence[int], c: int) -> None:
        for t, (y, z) in enumerate(zip(gold, guess)):
            if y != z:
                ids = feature_ids[t]
                self.w[ids, y] += 1.0
                self.w[ids, z] -= 1.0
                self.u[ids, y] += c
                self.u[ids, z] -= c
            if t == 0:
                if y != z:
                    self.s[y] += 1.0
                    self.s[z] -= 1.0
                    self.su[y] += c
                    self.su[z] -= c
            elif (gold[t - 1], y) != (guess[t - 1], z):
                self.t[gold[t - 1], y] += 1.0
                self.t[guess[t - 1], z] -= 1.0
                self.tu[gold[t - 1], y] += c
                self.tu[guess[t - 1], z] -= c

    def snapshot(self, c: int, averaged: bool) -> TaskModel:
        if averaged:
            return TaskModel(
                self.name, self.labels, self.w - self.u / c, self.t - self.tu / c, self.s - self.su / c
            )
        return TaskModel(self.name, self.labels, self.w.copy(), self.t.copy(), self.s.copy())


def _build_vocabulary(documents: Sequence[Document]) -> dict[str, int]:
    vocabulary: dict[str, int] = {}
    for doc in documents:
        for t in range(len(doc.tokens)):
            for feature in extract_features(doc.tokens, t):
                if feature not in vocabulary:
                    vocabulary[feature] = len(vocabulary)
    return vocabulary


def _inventory(task: str, targets: Iterable[list[str]]) -> tuple[str, ...]:
    if task == TASK_CONCAT:
        seen = {ConcatLabel.parse(x) for sequence in targets for x in sequence}
        seen.add(ALL_O)
        return tuple(str(c) for c in sorted(seen))
    if task == TASK_PREF:
        return tuple(str(label) for label in ALL_LABELS)
    return tuple(tag.value for tag in (BioTag.B, BioTag.I, BioTag.O))


def _restrict(labelsets: LabelSets, activity: Activity) -> LabelSets:
    only = {a: [BioTag.O] * len(labelsets) for a in ACTIVITIES}
    only[activity] = to_separate(labelsets, activity)
    return from_separate(only)


def _dev_score(
    model: TaggerModel, snapshot: Sequence[TaskModel], dev_set: Sequence[_Example], select: str
) -> float:
    """Selection score of a snapshot on dev; higher is better.

    A single per-activity task is judged on that activity alone.
    """
    names = [task.name for task in snapshot]
    single = Activity(names[0]) if len(names) == 1 and names[0] not in (TASK_CONCAT, TASK_PREF) else None
    snapshot_model = TaggerModel(model.strategy, model.features, list(snapshot))
    gold_all: LabelSets = []
    pred_all: LabelSets = []
    for example in dev_set:
        outputs = {task.name: task.decode(example.feature_ids) for task in snapshot}
        pred = _merge(snapshot_model, outputs, len(example.gold))
        gold = example.gold
        if single is not None:
            pred, gold = _restrict(pred, single), _restrict(gold, single)
        gold_all.extend(gold)
        pred_all.extend(pred)
    if select == SELECT_MA:
        return m_s(gold_all, pred_all, single) if single is not None else m_a(gold_all, pred_all)
    return -hamming_loss(gold_all, pred_all)


def _train_tasks(
    model: TaggerModel,
    states: Sequence[_Averaged],
    train_set: Sequence[_Example],
    dev_set: Sequence[_Example],
    epochs: int,
    rng: random.Random,
    select: str,
) -> list[TaskModel]:
    """Jointly scheduled training of ``states``; returns the selected snapshots."""
    best: list[TaskModel] = []
    best_score = float("-inf")
    history: dict[str, list[int]] = {state.name: [] for state in states}
    order = list(range(len(train_set)))
    c = 1

    for epoch in range(1, epochs + 1):
        rng.shuffle(order)
        mistakes = {state.name: 0 for state in states}
        for k in order:
            example = train_set[k]
            for state in states:
                gold = example.targets[state.name]
                guess = state.guess(example.feature_ids)
                if guess != gold:
                    mistakes[state.name] += sum(1 for y, z in zip(gold, guess) if y != z)
                    state.update(example.feature_ids, gold, guess, c)
            c += 1
        for name, count in mistakes.items():
            history[name].append(count)
        _LOGGER.debug("🔁 Epoch %d/%d: token mistakes %s", epoch, epochs, mistakes)

        snapshot = [state.snapshot(c, model.averaged) for state in states]
        for task in snapshot:
            task.epoch = epoch
        if not dev_set:
            best = snapshot
            continue
        score = _dev_score(model, snapshot, dev_set, select)
        if score > best_score:
            best_score, best = score, snapshot

    for task in best:
        task.history = history[task.name]
    _LOGGER.info("Selected epoch %d for %s", best[0].epoch, "+".join(s.name for s in states))
    return best


def train(
    corpus: Corpus | Sequence[Document],
    strategy: Strategy | str,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = DEFAULT_SEED,
    dev: Corpus | Sequence[Document] | None = None,
    select: str = SELECT_HL,
    averaged: bool = True,
) -> TaggerModel:
    """Train an averaged structured perceptron for one strategy.

    Deterministic given (corpus, strategy, epochs, seed). With ``dev``, the
    epoch scoring best on ``select`` is kept, otherwise the last one.
    Separate trains each activity on its own schedule; MultiOutput updates
    all four tasks on every document of one shared schedule.
    """
    strategy = Strategy(strategy)
    documents = list(corpus)
    if not strategy.trainable:
        raise ConfigError("the majority baseline is not trainable")
    if not documents:
        raise ConfigError("empty training set")
    if epochs < 1:
        raise ConfigError("epochs must be at least 1")
    if select not in (SELECT_HL, SELECT_MA):
        raise ConfigError(f"unknown selection metric {select!r}")

    names = _task_names(strategy)
    model = TaggerModel(
        strategy,
        _build_vocabulary(documents),
        seed=seed,
        epochs=epochs,
        select=select if dev is not None else None,
        averaged=averaged,
    )

    train_set = []
    raw_targets = []
    for doc in documents:
        labelsets = segments_to_labelsets(doc)
        train_set.append(_Example(doc.doc_id, model.feature_ids(doc.tokens), labelsets))
        raw_targets.append({name: _targets(name, doc, labelsets) for name in names})
    inventories = {name: _inventory(name, (t[name] for t in raw_targets)) for name in names}
    for example, targets in zip(train_set, raw_targets):
        for name in names:
            index = {label: i for i, label in enumerate(inventories[name])}
            example.targets[name] = [index[x] for x in targets[name]]
    dev_set = [
        _Example(doc.doc_id, model.feature_ids(doc.tokens), segments_to_labelsets(doc))
        for doc in (dev or ())
    ]
    _LOGGER.debug(
        "🏋️ Training %s on %d documents, %d features, %d epochs, seed %d",
        strategy.value,
        len(train_set),
        len(model.features),
        epochs,
        seed,
    )

    def state(name: str) -> _Averaged:
        return _Averaged(name, inventories[name], len(model.features))

    if strategy is Strategy.SEPARATE:
        tasks: list[TaskModel] = []
        for offset, name in enumerate(names):
            rng = random.Random(seed * 1009 + offset)
            tasks.extend(_train_tasks(model, [state(name)], train_set, dev_set, epochs, rng, select))
    else:
        rng = random.Random(seed)
        tasks = _train_tasks(model, [state(n) for n in names], train_set, dev_set, epochs, rng, select)
    model.tasks = tasks
    return model

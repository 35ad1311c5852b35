"""Label encodings and problem transformations.

A document's segments map to one LabelSet per token. From there the three
transformations (Separate, Concat, Multi-Output) and the preference-order
single-label reduction are plain projections.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .const import ACTIVITY_ORDER, PREFERENCE_ORDER
from .corpus import (
    ACTIVITIES,
    OUTSIDE,
    Activity,
    BioTag,
    Corpus,
    Document,
    Label,
    Segment,
    make_labelset,
)
from .errors import CorpusFormatError, SequenceRepairError

_LOGGER = logging.getLogger(__name__)


class RepairPolicy(str, Enum):
    """How to decode an I tag that continues no open segment."""

    STRICT = "strict"
    IOB_REPAIR = "iob-repair"


@dataclass(frozen=True, order=True)
class ConcatLabel:
    """A token's BIO tags for all four activities, in canonical order."""

    tags: tuple[BioTag, ...]

    def __post_init__(self) -> None:
        tags = tuple(BioTag(t) for t in self.tags)
        if len(tags) != len(ACTIVITIES):
            raise ValueError(f"a concat label has {len(ACTIVITIES)} components, got {len(tags)}")
        object.__setattr__(self, "tags", tags)

    @classmethod
    def parse(cls, text: str) -> "ConcatLabel":
        parts = text.split("-")
        if len(parts) != len(ACTIVITIES) or any(p not in ("B", "I", "O") for p in parts):
            raise ValueError(f"not a concat label: {text!r}")
        return cls(tuple(BioTag(p) for p in parts))

    @classmethod
    def from_labelset(cls, labels: Iterable[Label]) -> "ConcatLabel":
        tags = [BioTag.O] * len(ACTIVITIES)
        for label in labels:
            if label.activity is not None:
                tags[label.activity.index] = label.bio
        return cls(tuple(tags))

    def tag(self, activity: Activity) -> BioTag:
        return self.tags[activity.index]

    def to_labelset(self) -> frozenset[Label]:
        labels = [Label(tag, a) for a, tag in zip(ACTIVITIES, self.tags) if tag is not BioTag.O]
        return make_labelset(labels or [OUTSIDE])

    def __str__(self) -> str:
        return "-".join(t.value for t in self.tags)


ALL_O = ConcatLabel((BioTag.O,) * len(ACTIVITIES))


# --- Segments <-> LabelSets ---


def encode_segments(segments: Iterable[Segment], length: int) -> list[frozenset[Label]]:
    """Per-token LabelSets for segments over a sequence of ``length`` tokens."""
    labels: list[list[Label]] = [[] for _ in range(length)]
    for segment in segments:
        labels[segment.begin].append(Label(BioTag.B, segment.activity))
        for t in range(segment.begin + 1, segment.end):
            labels[t].append(Label(BioTag.I, segment.activity))
    return [make_labelset(token or [OUTSIDE]) for token in labels]


def segments_to_labelsets(document: Document) -> list[frozenset[Label]]:
    """One LabelSet per token of a single-annotator (or gold) document."""
    if len(document.annotators()) > 1:
        raise CorpusFormatError(
            "labels are defined per annotator; select one annotator first",
            doc_id=document.doc_id,
        )
    return encode_segments(document.segments, len(document.tokens))


def _project(labels: Iterable[Label], activity: Activity) -> BioTag:
    for label in labels:
        if label.activity is activity:
            return label.bio
    return BioTag.O


def find_invalid_continuations(labelsets: Sequence[Iterable[Label]]) -> list[tuple[int, Activity]]:
    """Positions where an I tag continues no open segment of its activity."""
    found = []
    for activity in ACTIVITIES:
        previous = BioTag.O
        for t, labels in enumerate(labelsets):
            tag = _project(labels, activity)
            if tag is BioTag.I and previous is BioTag.O:
                found.append((t, activity))
            previous = tag
    return sorted(found, key=lambda item: (item[0], item[1].index))


def labelsets_to_segments(
    labelsets: Sequence[Iterable[Label]],
    policy: RepairPolicy | str = RepairPolicy.STRICT,
    annotator: str | None = None,
) -> tuple[Segment, ...]:
    """Decode per-token labels into segments, activity by activity."""
    policy = RepairPolicy(policy)
    if policy is RepairPolicy.STRICT:
        invalid = find_invalid_continuations(labelsets)
        if invalid:
            raise SequenceRepairError(invalid[0][0], invalid[0][1].value)

    segments: list[Segment] = []
    repaired = 0
    for activity in ACTIVITIES:
        start: int | None = None
        for t, labels in enumerate(labelsets):
            tag = _project(labels, activity)
            if tag is BioTag.B or (tag is BioTag.I and start is None):
                if tag is BioTag.I:
                    repaired += 1
                if start is not None:
                    segments.append(Segment(activity, start, t, annotator))
                start = t
            elif tag is BioTag.O and start is not None:
                segments.append(Segment(activity, start, t, annotator))
                start = None
        if start is not None:
            segments.append(Segment(activity, start, len(labelsets), annotator))
    if repaired:
        _LOGGER.debug("🔧 Repaired %d dangling I tags into B", repaired)
    return tuple(sorted(segments, key=Segment.sort_key))


def repair_labelsets(
    labelsets: Sequence[Iterable[Label]], policy: RepairPolicy | str = RepairPolicy.IOB_REPAIR
) -> list[frozenset[Label]]:
    """Normalise a label sequence by decoding and re-encoding it."""
    return encode_segments(labelsets_to_segments(labelsets, policy), len(labelsets))


# --- Transformations ---


def to_separate(labelsets: Sequence[Iterable[Label]], activity: Activity) -> list[BioTag]:
    """Projection onto one activity's BIO tags."""
    activity = Activity(activity)
    return [_project(labels, activity) for labels in labelsets]


def to_concat(labelsets: Sequence[Iterable[Label]]) -> list[ConcatLabel]:
    return [ConcatLabel.from_labelset(labels) for labels in labelsets]


def to_multioutput(labelsets: Sequence[Iterable[Label]]) -> dict[Activity, list[BioTag]]:
    """Four aligned BIO sequences, one per activity."""
    return {activity: to_separate(labelsets, activity) for activity in ACTIVITIES}


def multioutput_records(outputs: Mapping[Activity, Sequence[BioTag]]) -> list[tuple[BioTag, ...]]:
    """The same content as one (HG, EG, EE, DC) record per token."""
    return list(zip(*(outputs[a] for a in ACTIVITIES)))


def from_separate(sequences: Mapping[Activity, Sequence[BioTag]]) -> list[frozenset[Label]]:
    """Merge per-activity BIO sequences back into LabelSets (no repair)."""
    lengths = {len(sequences[a]) for a in ACTIVITIES}
    if len(lengths) != 1:
        raise ValueError(f"per-activity sequences differ in length: {sorted(lengths)}")
    return [ConcatLabel(record).to_labelset() for record in multioutput_records(sequences)]


from_multioutput = from_separate


def from_concat(labels: Sequence[ConcatLabel]) -> list[frozenset[Label]]:
    return [label.to_labelset() for label in labels]


def from_single_label(labels: Sequence[Label]) -> list[frozenset[Label]]:
    return [make_labelset([label]) for label in labels]


# --- Preference reduction ---


def _preference_rank(segment: Segment) -> tuple[int, int, int]:
    return (PREFERENCE_ORDER.index(segment.activity.value), segment.begin, segment.end)


def apply_preference(document: Document) -> list[Label]:
    """Single-label reduction keeping whole segments in preference order.

    A segment sharing any token with an already kept segment is dropped
    entirely; kept segments keep their boundaries.
    """
    kept: list[Segment] = []
    for segment in sorted(document.segments, key=_preference_rank):
        if any(segment.overlaps(other) for other in kept):
            _LOGGER.debug("Preference drops %s in %s", segment, document.doc_id)
            continue
        kept.append(segment)
    labels = [OUTSIDE] * len(document.tokens)
    for segment in kept:
        labels[segment.begin] = Label(BioTag.B, segment.activity)
        for t in range(segment.begin + 1, segment.end):
            labels[t] = Label(BioTag.I, segment.activity)
    return labels


# --- Corpus-level views ---


def corpus_labelsets(corpus: Corpus | Iterable[Document]) -> dict[str, list[frozenset[Label]]]:
    """LabelSets of every document, keyed by doc_id."""
    return {doc.doc_id: segments_to_labelsets(doc) for doc in corpus}


def concat_inventory(corpus: Corpus | Iterable[Document]) -> Counter:
    """Token counts of every ConcatLabel occurring in the corpus."""
    inventory: Counter = Counter()
    for doc in corpus:
        inventory.update(to_concat(segments_to_labelsets(doc)))
    return inventory


def label_distribution(corpus: Corpus | Iterable[Document]) -> dict[Activity, dict[BioTag, float]]:
    """Share of B, I and O tokens per activity."""
    counts = {a: Counter() for a in ACTIVITIES}
    for doc in corpus:
        labelsets = segments_to_labelsets(doc)
        for activity in ACTIVITIES:
            counts[activity].update(to_separate(labelsets, activity))
    result = {}
    for activity, counter in counts.items():
        total = sum(counter.values())
        result[activity] = {tag: (counter[tag] / total if total else 0.0) for tag in BioTag}
    return result


# --- CoNLL export ---

CONLL_COLUMNS = ("token",) + ACTIVITY_ORDER + ("concat", "pref")
CONLL_DOC_PREFIX = "# doc_id = "


def export_conll(corpus: Corpus | Iterable[Document]) -> str:
    """One token per line: token, four activity tags, concat tag, preference tag."""
    blocks = []
    for doc in corpus:
        labelsets = segments_to_labelsets(doc)
        separate = to_multioutput(labelsets)
        concat = to_concat(labelsets)
        pref = apply_preference(doc)
        if any(c in doc.doc_id for c in "\n\r"):
            raise CorpusFormatError(
                "doc_id cannot be written as a CoNLL header", doc_id=doc.doc_id, field="doc_id"
            )
        lines = [f"{CONLL_DOC_PREFIX}{doc.doc_id}"]
        for t, token in enumerate(doc.tokens):
            if not token or any(c in token for c in "\t\n\r"):
                raise CorpusFormatError(
                    f"token {t} cannot be written as a CoNLL column: {token!r}",
                    doc_id=doc.doc_id,
                    field="tokens",
                )
            columns = [token] + [separate[a][t].value for a in ACTIVITIES]
            columns += [str(concat[t]), str(pref[t])]
            lines.append("\t".join(columns))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


@dataclass(frozen=True)
class ConllDocument:
    doc_id: str
    tokens: tuple[str, ...]
    labelsets: tuple[frozenset[Label], ...]
    pref: tuple[Label, ...]


def read_conll(text: str, path: str | None = None) -> list[ConllDocument]:
    """Strictly parse the CoNLL export back into label sequences."""
    documents: list[ConllDocument] = []
    doc_id: str | None = None
    tokens: list[str] = []
    labelsets: list[frozenset[Label]] = []
    prefs: list[Label] = []

    def flush() -> None:
        nonlocal doc_id, tokens, labelsets, prefs
        if doc_id is not None:
            documents.append(ConllDocument(doc_id, tuple(tokens), tuple(labelsets), tuple(prefs)))
        doc_id, tokens, labelsets, prefs = None, [], [], []

    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.removesuffix("\r")
        if not line.strip():
            continue
        if line.startswith(CONLL_DOC_PREFIX):
            flush()
            doc_id = line[len(CONLL_DOC_PREFIX) :]
            continue
        if doc_id is None:
            raise CorpusFormatError("token line before any '# doc_id = ' header", path=path, line=lineno)
        columns = line.split("\t")
        if len(columns) != len(CONLL_COLUMNS):
            raise CorpusFormatError(
                f"expected {len(CONLL_COLUMNS)} columns, got {len(columns)}",
                path=path,
                line=lineno,
                doc_id=doc_id,
            )
        try:
            tags = tuple(BioTag(c) for c in columns[1:5])
        except ValueError as err:
            raise CorpusFormatError(str(err), path=path, line=lineno, doc_id=doc_id, field="tag") from err
        try:
            concat = ConcatLabel.parse(columns[5])
            pref = Label.parse(columns[6])
        except ValueError as err:
            raise CorpusFormatError(str(err), path=path, line=lineno, doc_id=doc_id) from err
        if concat.tags != tags:
            raise CorpusFormatError(
                f"concat column {concat} disagrees with activity columns",
                path=path,
                line=lineno,
                doc_id=doc_id,
                field="concat",
            )
        tokens.append(columns[0])
        labelsets.append(concat.to_labelset())
        prefs.append(pref)
    flush()
    return documents

"""Corpus model for epistemic-activity annotation.

Documents are pre-tokenized; segments are typed token spans with an
exclusive end. Segments of different activities may overlap, segments of
the same activity by the same annotator may not.
"""

from __future__ import annotations

import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import voluptuous as vol

from .const import (
    ACTIVITY_ORDER,
    ANNOTATION_KEYS,
    DEFAULT_RATIOS,
    KEY_ACTIVITY,
    KEY_ANNOTATIONS,
    KEY_ANNOTATOR,
    KEY_BEGIN,
    KEY_CASE_ID,
    KEY_DOC_ID,
    KEY_DOMAIN,
    KEY_END,
    KEY_TOKENS,
    RATIO_TOLERANCE,
    RECORD_KEYS,
    SPLIT_NAMES,
)
from .errors import ConfigError, CorpusFormatError

_LOGGER = logging.getLogger(__name__)


class Activity(str, Enum):
    """Epistemic activity, declared in canonical order."""

    HG = "HG"
    EG = "EG"
    EE = "EE"
    DC = "DC"

    @property
    def index(self) -> int:
        return ACTIVITY_ORDER.index(self.value)


class BioTag(str, Enum):
    """Segment boundary tag."""

    B = "B"
    I = "I"  # noqa: E741
    O = "O"  # noqa: E741


ACTIVITIES: tuple[Activity, ...] = tuple(Activity)


@dataclass(frozen=True)
class Label:
    """One element of C: Outside, or a B/I tag typed with an activity."""

    bio: BioTag
    activity: Activity | None = None

    def __post_init__(self) -> None:
        if self.bio is BioTag.O and self.activity is not None:
            raise ValueError("Outside label carries no activity")
        if self.bio is not BioTag.O and self.activity is None:
            raise ValueError(f"{self.bio.value} label needs an activity")

    @property
    def is_outside(self) -> bool:
        return self.bio is BioTag.O

    @classmethod
    def parse(cls, text: str) -> "Label":
        """Parse "O", "B-EE" or "I-DC"."""
        if text == BioTag.O.value:
            return OUTSIDE
        bio, sep, activity = text.partition("-")
        if not sep or bio not in (BioTag.B.value, BioTag.I.value) or activity not in ACTIVITY_ORDER:
            raise ValueError(f"not a label: {text!r}")
        return cls(BioTag(bio), Activity(activity))

    def sort_key(self) -> tuple[int, int]:
        if self.activity is None:
            return (-1, 0)
        return (self.activity.index, 0 if self.bio is BioTag.B else 1)

    def __str__(self) -> str:
        if self.activity is None:
            return BioTag.O.value
        return f"{self.bio.value}-{self.activity.value}"


OUTSIDE = Label(BioTag.O)

# The 9 labels of C, Outside first
ALL_LABELS: tuple[Label, ...] = (OUTSIDE,) + tuple(
    Label(bio, activity) for activity in ACTIVITIES for bio in (BioTag.B, BioTag.I)
)

LabelSet = frozenset


def make_labelset(labels: Iterable[Label]) -> frozenset[Label]:
    """Build a LabelSet, enforcing Outside exclusivity and one label per activity."""
    result = frozenset(labels)
    if not result:
        raise ValueError("a LabelSet is never empty")
    if OUTSIDE in result and len(result) > 1:
        raise ValueError("Outside cannot be combined with typed labels")
    activities = [label.activity for label in result if label.activity is not None]
    if len(activities) != len(set(activities)):
        raise ValueError(f"more than one label per activity in {format_labelset(result)}")
    return result


def format_labelset(labels: Iterable[Label]) -> str:
    """Render a LabelSet as "B-EE|I-DC" in canonical activity order."""
    return "|".join(str(label) for label in sorted(labels, key=Label.sort_key))


@dataclass(frozen=True)
class Segment:
    """A typed token span [begin, end)."""

    activity: Activity
    begin: int
    end: int
    annotator: str | None = None

    @property
    def length(self) -> int:
        return self.end - self.begin

    def sort_key(self) -> tuple:
        return (
            self.begin,
            self.end,
            self.activity.index,
            self.annotator is not None,
            self.annotator or "",
        )

    def overlaps(self, other: "Segment") -> bool:
        return self.begin < other.end and other.begin < self.end

    def intersection(self, other: "Segment") -> int:
        return max(0, min(self.end, other.end) - max(self.begin, other.begin))

    def triple(self) -> tuple[int, int, Activity]:
        return (self.begin, self.end, self.activity)

    def __str__(self) -> str:
        who = f"@{self.annotator}" if self.annotator is not None else ""
        return f"{self.activity.value}[{self.begin},{self.end}){who}"


def sort_segments(segments: Iterable[Segment]) -> tuple[Segment, ...]:
    return tuple(sorted(segments, key=Segment.sort_key))


@dataclass(frozen=True)
class Document:
    """A tokenized reasoning text with gold or per-annotator segments."""

    doc_id: str
    domain: str
    case_id: str
    tokens: tuple[str, ...]
    segments: tuple[Segment, ...] = ()
    extra: Mapping[str, object] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "segments", sort_segments(self.segments))

    def __len__(self) -> int:
        return len(self.tokens)

    def annotators(self) -> tuple[str | None, ...]:
        """Annotator ids present on this document, None for gold segments."""
        seen = {segment.annotator for segment in self.segments}
        return tuple(sorted(seen, key=lambda a: (a is not None, a or "")))

    def for_annotator(self, annotator: str | None) -> "Document":
        """The same document restricted to one annotator's segments."""
        return replace(
            self, segments=tuple(s for s in self.segments if s.annotator == annotator)
        )

    def gold_view(self) -> "Document":
        """Segments with the annotator field cleared (single-annotator documents only)."""
        if len(self.annotators()) > 1:
            raise CorpusFormatError(
                "document carries segments of several annotators", doc_id=self.doc_id
            )
        return replace(self, segments=tuple(replace(s, annotator=None) for s in self.segments))


@dataclass(frozen=True)
class Corpus:
    """An ordered collection of documents with an optional train/dev/test split."""

    documents: tuple[Document, ...]
    split: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "documents", tuple(self.documents))
        if self.split is not None:
            _validate_split(self.documents, self.split)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def by_id(self) -> dict[str, Document]:
        return {doc.doc_id: doc for doc in self.documents}

    def with_split(self, split: Mapping[str, str]) -> "Corpus":
        return Corpus(self.documents, dict(split))

    def part(self, name: str) -> "Corpus":
        """Documents assigned to one split part, in corpus order."""
        if self.split is None:
            raise CorpusFormatError("corpus has no split")
        return Corpus(tuple(d for d in self.documents if self.split[d.doc_id] == name))

    def for_annotator(self, annotator: str | None) -> "Corpus":
        return Corpus(tuple(d.for_annotator(annotator) for d in self.documents), self.split)

    def annotators(self) -> tuple[str | None, ...]:
        seen = {a for doc in self.documents for a in doc.annotators()}
        return tuple(sorted(seen, key=lambda a: (a is not None, a or "")))


def _validate_split(documents: Sequence[Document], split: Mapping[str, str]) -> None:
    ids = {doc.doc_id for doc in documents}
    missing = ids - set(split)
    unknown = set(split) - ids
    if missing or unknown:
        raise CorpusFormatError(
            f"split must cover every document exactly once "
            f"(missing {sorted(missing)[:3]}, unknown {sorted(unknown)[:3]})",
            field="split",
        )
    for doc_id, name in split.items():
        if name not in SPLIT_NAMES:
            raise CorpusFormatError(f"unknown split part {name!r}", doc_id=doc_id, field="split")


# --- Record schema ---


def _strict_int(value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise vol.Invalid("expected an integer")
    return value


ANNOTATION_SCHEMA = vol.Schema(
    {
        vol.Optional(KEY_ANNOTATOR, default=None): vol.Any(None, str),
        vol.Required(KEY_ACTIVITY): vol.In(ACTIVITY_ORDER),
        vol.Required(KEY_BEGIN): vol.All(_strict_int, vol.Range(min=0)),
        vol.Required(KEY_END): _strict_int,
    },
    extra=vol.ALLOW_EXTRA,
)

RECORD_SCHEMA = vol.Schema(
    {
        vol.Required(KEY_DOC_ID): vol.All(str, vol.Length(min=1)),
        vol.Required(KEY_DOMAIN): str,
        vol.Required(KEY_CASE_ID): str,
        vol.Required(KEY_TOKENS): [str],
        vol.Optional(KEY_ANNOTATIONS, default=list): [ANNOTATION_SCHEMA],
    },
    extra=vol.ALLOW_EXTRA,
)


def validate_document(doc: Document, line: int | None = None) -> None:
    """Check segment ranges and same-activity overlaps per annotator."""
    n = len(doc.tokens)
    for segment in doc.segments:
        if not 0 <= segment.begin < segment.end <= n:
            raise CorpusFormatError(
                f"segment {segment} out of range for {n} tokens",
                line=line,
                doc_id=doc.doc_id,
                field=KEY_ANNOTATIONS,
            )
    groups: dict[tuple[str | None, Activity], list[Segment]] = defaultdict(list)
    for segment in doc.segments:
        groups[(segment.annotator, segment.activity)].append(segment)
    for group in groups.values():
        # segments are sorted by begin, so checking neighbours suffices
        for prev, nxt in zip(group, group[1:]):
            if prev.overlaps(nxt):
                raise CorpusFormatError(
                    f"same-activity overlap between {prev} and {nxt}",
                    line=line,
                    doc_id=doc.doc_id,
                    field=KEY_ANNOTATIONS,
                )


def document_from_record(record: Mapping, line: int | None = None) -> Document:
    """Validate one decoded JSON record and build a Document."""
    try:
        checked = RECORD_SCHEMA(dict(record))
    except vol.Invalid as err:
        field_path = ".".join(str(p) for p in err.path) or None
        doc_id = record.get(KEY_DOC_ID) if isinstance(record, Mapping) else None
        raise CorpusFormatError(
            err.msg, line=line, doc_id=doc_id if isinstance(doc_id, str) else None, field=field_path
        ) from err
    segments = tuple(
        Segment(
            Activity(ann[KEY_ACTIVITY]),
            ann[KEY_BEGIN],
            ann[KEY_END],
            ann[KEY_ANNOTATOR],
        )
        for ann in checked[KEY_ANNOTATIONS]
    )
    extra = {k: v for k, v in checked.items() if k not in RECORD_KEYS}
    doc = Document(
        doc_id=checked[KEY_DOC_ID],
        domain=checked[KEY_DOMAIN],
        case_id=checked[KEY_CASE_ID],
        tokens=tuple(checked[KEY_TOKENS]),
        segments=segments,
        extra=extra,
    )
    validate_document(doc, line)
    return doc


def _decode_line(raw: bytes | str, lineno: int) -> str:
    if isinstance(raw, str):
        return raw
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as err:
        raise CorpusFormatError(
            f"invalid UTF-8 at byte {err.start}: {raw[err.start:err.end]!r}", line=lineno
        ) from err


def parse_corpus(data: bytes | str, path: str | None = None) -> Corpus:
    """Parse the JSON-lines corpus format into a validated Corpus.

    Records are separated by "\\n" only; other line breaks may occur inside
    JSON strings written with ``ensure_ascii=False``.
    """
    raw_lines = data.split(b"\n") if isinstance(data, bytes) else data.split("\n")
    documents: list[Document] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(raw_lines, 1):
        try:
            line = _decode_line(raw, lineno)
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusFormatError(f"malformed JSON: {err.msg}", line=lineno) from err
            if not isinstance(record, dict):
                raise CorpusFormatError("record must be a JSON object", line=lineno)
            doc = document_from_record(record, lineno)
            if doc.doc_id in seen:
                raise CorpusFormatError(
                    f"duplicate doc_id (first seen on line {seen[doc.doc_id]})",
                    line=lineno,
                    doc_id=doc.doc_id,
                    field=KEY_DOC_ID,
                )
        except CorpusFormatError as err:
            raise err.with_path(path) if path else err
        seen[doc.doc_id] = lineno
        documents.append(doc)
    _LOGGER.debug("📖 Parsed %d documents%s", len(documents), f" from {path}" if path else "")
    return Corpus(tuple(documents))


def document_to_record(doc: Document) -> dict:
    """Canonical record: fixed key order, segments sorted."""
    record = {
        KEY_DOC_ID: doc.doc_id,
        KEY_DOMAIN: doc.domain,
        KEY_CASE_ID: doc.case_id,
        KEY_TOKENS: list(doc.tokens),
        KEY_ANNOTATIONS: [
            dict(zip(ANNOTATION_KEYS, (s.annotator, s.activity.value, s.begin, s.end)))
            for s in sort_segments(doc.segments)
        ],
    }
    for key in sorted(doc.extra):
        record[key] = doc.extra[key]
    return record


def serialize_corpus(corpus: Corpus | Iterable[Document]) -> str:
    """Canonical JSON-lines serialization."""
    return "".join(
        json.dumps(document_to_record(doc), ensure_ascii=False) + "\n" for doc in corpus
    )


def read_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise CorpusFormatError(f"cannot read file: {err.strerror}", path=str(path)) from err
    return parse_corpus(data, str(path))


def write_corpus(corpus: Corpus | Iterable[Document], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_corpus(corpus), encoding="utf-8")
    _LOGGER.info("Wrote corpus to %s", path)


def merge_corpora(
    corpora: Sequence[Corpus], annotators: Sequence[str] | None = None
) -> Corpus:
    """Join several annotations of the same documents by doc_id.

    With ``annotators`` given, every segment of the i-th corpus is stamped
    with the i-th id (for single-annotator files without annotator field).
    """
    if annotators is not None and len(annotators) != len(corpora):
        raise ConfigError("one annotator id per corpus is required")
    merged: dict[str, Document] = {}
    order: list[str] = []
    for i, corpus in enumerate(corpora):
        for doc in corpus:
            segments = doc.segments
            if annotators is not None:
                segments = tuple(replace(s, annotator=annotators[i]) for s in segments)
            if doc.doc_id not in merged:
                merged[doc.doc_id] = replace(doc, segments=segments)
                order.append(doc.doc_id)
                continue
            base = merged[doc.doc_id]
            if base.tokens != doc.tokens:
                raise CorpusFormatError(
                    "token sequences differ between inputs", doc_id=doc.doc_id, field=KEY_TOKENS
                )
            merged[doc.doc_id] = replace(base, segments=base.segments + segments)
    for doc_id in order:
        validate_document(merged[doc_id])
    return Corpus(tuple(merged[doc_id] for doc_id in order))


# --- Splitting ---


def _largest_remainder(n: int, ratios: Sequence[Fraction]) -> list[int]:
    quotas = [ratio * n for ratio in ratios]
    sizes = [int(q) for q in quotas]
    leftover = n - sum(sizes)
    # ties go to the earlier part (train before dev before test)
    by_remainder = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in by_remainder[:leftover]:
        sizes[i] += 1
    return sizes


def stratified_split(
    corpus: Corpus, ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 13
) -> dict[str, str]:
    """Split doc_ids into train/dev/test with the same proportions per case scenario."""
    if not len(corpus):
        raise CorpusFormatError("cannot split an empty corpus")
    if len(ratios) != len(SPLIT_NAMES):
        raise ConfigError(f"expected {len(SPLIT_NAMES)} ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be non-negative: {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > RATIO_TOLERANCE:
        raise ConfigError(f"ratios must sum to 1: {tuple(ratios)}")
    exact = [Fraction(r).limit_denominator(10**6) for r in ratios]

    groups: dict[str, list[str]] = defaultdict(list)
    for doc in corpus:
        groups[doc.case_id].append(doc.doc_id)

    rng = random.Random(seed)
    split: dict[str, str] = {}
    for case_id in sorted(groups):
        doc_ids = sorted(groups[case_id])
        rng.shuffle(doc_ids)
        sizes = _largest_remainder(len(doc_ids), exact)
        start = 0
        for name, size in zip(SPLIT_NAMES, sizes):
            for doc_id in doc_ids[start : start + size]:
                split[doc_id] = name
            start += size
        _LOGGER.debug("✂️  Case %s: %d docs → %s", case_id, len(doc_ids), sizes)
    return {doc.doc_id: split[doc.doc_id] for doc in corpus}


# --- Statistics ---


@dataclass(frozen=True)
class ActivityStats:
    count: int
    av_count: float | None
    av_len: float | None


@dataclass(frozen=True)
class OverlapStats:
    count: int
    av_len: float | None


def activity_pairs() -> tuple[tuple[Activity, Activity], ...]:
    """Unordered activity pairs, each in canonical order."""
    return tuple(combinations(ACTIVITIES, 2))


def pair_key(a: Activity, b: Activity) -> tuple[Activity, Activity]:
    if a == b:
        raise ValueError("an activity pair needs two distinct activities")
    return (a, b) if a.index < b.index else (b, a)


@dataclass(frozen=True)
class StatsTable:
    """Descriptive corpus statistics (counts, averages, overlaps)."""

    documents: int
    activities: Mapping[Activity, ActivityStats]
    overlaps: Mapping[tuple[Activity, Activity], OverlapStats]
    av_tokens: float
    av_uncovered: float
    share: Mapping[Activity, float | None]

    def overlap(self, a: Activity, b: Activity) -> OverlapStats:
        return self.overlaps[pair_key(a, b)]


def corpus_stats(corpus: Corpus) -> StatsTable:
    """Compute per-activity and per-pair statistics over all segments."""
    if not len(corpus):
        raise CorpusFormatError("corpus_stats needs a non-empty corpus")
    n_docs = len(corpus)
    counts = {a: 0 for a in ACTIVITIES}
    lengths = {a: 0 for a in ACTIVITIES}
    pair_counts = {p: 0 for p in activity_pairs()}
    pair_lengths = {p: 0 for p in activity_pairs()}
    total_tokens = 0
    uncovered = 0

    for doc in corpus:
        total_tokens += len(doc.tokens)
        covered = set()
        for segment in doc.segments:
            counts[segment.activity] += 1
            lengths[segment.activity] += segment.length
            covered.update(range(segment.begin, segment.end))
        uncovered += len(doc.tokens) - len(covered)

        by_annotator: dict[str | None, list[Segment]] = defaultdict(list)
        for segment in doc.segments:
            by_annotator[segment.annotator].append(segment)
        for segments in by_annotator.values():
            for first, second in combinations(segments, 2):
                if first.activity == second.activity or not first.overlaps(second):
                    continue
                key = pair_key(first.activity, second.activity)
                pair_counts[key] += 1
                pair_lengths[key] += first.intersection(second)

    total_segments = sum(counts.values())
    activities = {
        a: ActivityStats(
            count=counts[a],
            av_count=counts[a] / n_docs if counts[a] else None,
            av_len=lengths[a] / counts[a] if counts[a] else None,
        )
        for a in ACTIVITIES
    }
    overlaps = {
        p: OverlapStats(pair_counts[p], pair_lengths[p] / pair_counts[p] if pair_counts[p] else None)
        for p in activity_pairs()
    }
    share = {a: (counts[a] / total_segments if total_segments else None) for a in ACTIVITIES}
    _LOGGER.debug(
        "📊 Stats: %d docs, %d segments, %s",
        n_docs,
        total_segments,
        ", ".join(f"{a.value}={counts[a]}" for a in ACTIVITIES),
    )
    return StatsTable(
        documents=n_docs,
        activities=activities,
        overlaps=overlaps,
        av_tokens=total_tokens / n_docs,
        av_uncovered=uncovered / n_docs,
        share=share,
    )

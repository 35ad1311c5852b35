"""Unitizing agreement (alpha_U) and majority-vote gold creation.

Units live on one token continuum; documents are sections of it, so units
of different documents are never compared. Disagreements are accumulated as
exact integers per category and only divided at the end.
"""

from __future__ import annotations

import bisect
import itertools
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .const import ALPHA_OVERALL, ALPHA_SEGMENT, SEGMENT_CATEGORY
from .corpus import (
    ACTIVITIES,
    Activity,
    Corpus,
    Document,
    Segment,
    activity_pairs,
    validate_document,
)
from .errors import AgreementError, CorpusFormatError

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Unit:
    """A categorised stretch [begin, end) of one section, in section-local token indices."""

    section: int
    begin: int
    end: int
    category: str

    @property
    def length(self) -> int:
        return self.end - self.begin


@dataclass(frozen=True)
class AnnotationStudy:
    """Aligned unitizations of several annotators over a sectioned continuum."""

    sections: tuple[tuple[str, int], ...]
    annotators: tuple[str, ...]
    units: Mapping[str, tuple[Unit, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        units = {a: tuple(sorted(self.units.get(a, ()))) for a in self.annotators}
        object.__setattr__(self, "units", units)
        for annotator, annotated in units.items():
            for unit in annotated:
                if not 0 <= unit.section < len(self.sections):
                    raise AgreementError(f"{annotator}: unit in unknown section {unit.section}")
                if not 0 <= unit.begin < unit.end <= self.sections[unit.section][1]:
                    raise AgreementError(
                        f"{annotator}: unit [{unit.begin},{unit.end}) outside section "
                        f"{self.sections[unit.section][0]}"
                    )
            _check_no_overlap(annotator, annotated)

    @property
    def length(self) -> int:
        return sum(length for _, length in self.sections)

    def categories(self) -> tuple[str, ...]:
        return tuple(sorted({u.category for units in self.units.values() for u in units}))

    def restrict(self, annotators: Iterable[str]) -> "AnnotationStudy":
        chosen = tuple(annotators)
        unknown = set(chosen) - set(self.annotators)
        if unknown:
            raise AgreementError(f"unknown annotators: {sorted(unknown)}")
        return AnnotationStudy(self.sections, chosen, {a: self.units[a] for a in chosen})

    def relabel(self, mapping: Mapping[str, str]) -> "AnnotationStudy":
        """Rename categories; same-category units that now overlap are joined."""
        relabeled = {}
        for annotator in self.annotators:
            units = [replace(u, category=mapping.get(u.category, u.category)) for u in self.units[annotator]]
            relabeled[annotator] = _join_overlapping(units)
        return AnnotationStudy(self.sections, self.annotators, relabeled)


def _check_no_overlap(annotator: str, units: Sequence[Unit]) -> None:
    last_end: dict[tuple[int, str], int] = {}
    for unit in units:
        key = (unit.section, unit.category)
        if unit.begin < last_end.get(key, 0):
            raise AgreementError(f"{annotator}: overlapping {unit.category} units in one section")
        last_end[key] = max(last_end.get(key, 0), unit.end)


def _join_overlapping(units: Iterable[Unit]) -> tuple[Unit, ...]:
    by_key: dict[tuple[int, str], list[Unit]] = defaultdict(list)
    for unit in units:
        by_key[(unit.section, unit.category)].append(unit)
    joined: list[Unit] = []
    for (section, category), group in by_key.items():
        group.sort()
        current = group[0]
        for unit in group[1:]:
            # adjacent units stay separate
            if unit.begin < current.end:
                current = Unit(section, current.begin, max(current.end, unit.end), category)
            else:
                joined.append(current)
                current = unit
        joined.append(current)
    return tuple(sorted(joined))


def study_from_corpus(corpus: Corpus, annotators: Sequence[str] | None = None) -> AnnotationStudy:
    """One section per document, one category per activity."""
    if annotators is None:
        annotators = [a for a in corpus.annotators() if a is not None]
    annotators = tuple(annotators)
    if len(annotators) < 2:
        raise AgreementError("agreement needs at least two annotators")
    sections = []
    units: dict[str, list[Unit]] = {a: [] for a in annotators}
    for index, doc in enumerate(corpus):
        sections.append((doc.doc_id, len(doc.tokens)))
        for segment in doc.segments:
            if segment.annotator is None:
                raise AgreementError(f"{doc.doc_id}: segment {segment} has no annotator")
            if segment.annotator in units:
                units[segment.annotator].append(
                    Unit(index, segment.begin, segment.end, segment.activity.value)
                )
    return AnnotationStudy(tuple(sections), annotators, {a: tuple(u) for a, u in units.items()})


# --- alpha_U ---


@dataclass(frozen=True)
class _Disagreement:
    """Integer parts of D_o and D_e for one category."""

    observed: int
    expected_num: int
    expected_den: int


def _gaps(units: Sequence[Unit], sections: Sequence[tuple[str, int]]) -> list[int]:
    """Lengths of the stretches not covered by any of ``units``, per section."""
    by_section: dict[int, list[Unit]] = defaultdict(list)
    for unit in units:
        by_section[unit.section].append(unit)
    lengths = []
    for index, (_, length) in enumerate(sections):
        position = 0
        for unit in sorted(by_section.get(index, ())):
            if unit.begin > position:
                lengths.append(unit.begin - position)
            position = max(position, unit.end)
        if length > position:
            lengths.append(length - position)
    return lengths


def _observed(units_i: Sequence[Unit], units_j: Sequence[Unit]) -> int:
    """Sum of squared mismatches of i's units against j's unitization (ordered pair)."""
    by_section: dict[int, list[Unit]] = defaultdict(list)
    for unit in units_j:
        by_section[unit.section].append(unit)
    total = 0
    for g in units_i:
        overlapping = [
            h for h in by_section.get(g.section, ()) if h.begin < g.end and g.begin < h.end
        ]
        if overlapping:
            total += sum((g.begin - h.begin) ** 2 + (g.end - h.end) ** 2 for h in overlapping)
        else:
            # g lies inside one of j's gaps; the mirrored gap/unit term counts the same
            total += 2 * g.length**2
    return total


def _category_disagreement(study: AnnotationStudy, category: str) -> _Disagreement:
    m = len(study.annotators)
    length = study.length
    units = {a: [u for u in study.units[a] if u.category == category] for a in study.annotators}

    observed = 0
    for i, j in itertools.permutations(study.annotators, 2):
        observed += _observed(units[i], units[j])

    all_units = [u for a in study.annotators for u in units[a]]
    gap_lengths = sorted(g for a in study.annotators for g in _gaps(units[a], study.sections))
    suffix = [0] * (len(gap_lengths) + 1)
    for k in range(len(gap_lengths) - 1, -1, -1):
        suffix[k] = suffix[k + 1] + gap_lengths[k]

    n_units = len(all_units)
    expected_num = 0
    for unit in all_units:
        l = unit.length
        # l(l-1)(2l-1) is divisible by 6, so the division by 3 is exact
        expected_num += (n_units - 1) * (l * (l - 1) * (2 * l - 1) // 3)
        start = bisect.bisect_left(gap_lengths, l)
        count = len(gap_lengths) - start
        expected_num += l * l * (suffix[start] - (l - 1) * count)
    expected_den = m * length * (m * length - 1) - sum(u.length * (u.length - 1) for u in all_units)
    return _Disagreement(observed, expected_num, expected_den)


def _ratio(study: AnnotationStudy, parts: Sequence[_Disagreement]) -> float | None:
    m = len(study.annotators)
    length = study.length
    d_o = sum((Fraction(p.observed, m * (m - 1) * length * length) for p in parts), Fraction(0))
    d_e = sum(
        (Fraction(2 * p.expected_num, m * length * p.expected_den) for p in parts if p.expected_den > 0),
        Fraction(0),
    )
    if d_e == 0:
        return None
    return float(1 - d_o / d_e)


def alpha_u(study: AnnotationStudy, mode: str | Activity = ALPHA_OVERALL) -> float | None:
    """Krippendorff's alpha_U; None when expected disagreement is zero.

    ``mode`` is ``"overall"`` (all categories jointly), ``"segment"``
    (categories ignored) or a single category / Activity.
    """
    if len(study.annotators) < 2:
        raise AgreementError("agreement needs at least two annotators")
    if study.length < 1:
        raise AgreementError("empty continuum")

    if mode == ALPHA_OVERALL:
        categories = study.categories()
    elif mode == ALPHA_SEGMENT:
        study = study.relabel({c: SEGMENT_CATEGORY for c in study.categories()})
        categories = (SEGMENT_CATEGORY,)
    else:
        categories = (mode.value if isinstance(mode, Activity) else str(mode),)

    value = _ratio(study, [_category_disagreement(study, c) for c in categories])
    if value is None:
        _LOGGER.warning("⚠️ alpha_U undefined for mode %s: no expected disagreement", mode)
    return value


def merged_category(a: Activity | str, b: Activity | str) -> str:
    first, second = sorted((Activity(a), Activity(b)), key=lambda x: x.index)
    return f"{first.value}&{second.value}"


def merged_alpha(study: AnnotationStudy, a: Activity | str, b: Activity | str) -> float | None:
    """alpha_U of the category formed by joining two activities."""
    if Activity(a) is Activity(b):
        raise AgreementError("merging needs two distinct activities")
    name = merged_category(a, b)
    merged = study.relabel({Activity(a).value: name, Activity(b).value: name})
    return alpha_u(merged, name)


@dataclass(frozen=True)
class PairwiseResult:
    values: dict[tuple[str, str], float | None]

    def _defined(self) -> list[tuple[tuple[str, str], float]]:
        return [(pair, v) for pair, v in self.values.items() if v is not None]

    @property
    def max(self) -> tuple[tuple[str, str], float] | None:
        defined = self._defined()
        return max(defined, key=lambda item: item[1]) if defined else None

    @property
    def min(self) -> tuple[tuple[str, str], float] | None:
        defined = self._defined()
        return min(defined, key=lambda item: item[1]) if defined else None


def pairwise_alpha(study: AnnotationStudy) -> PairwiseResult:
    values = {}
    for pair in itertools.combinations(sorted(study.annotators), 2):
        values[pair] = alpha_u(study.restrict(pair), ALPHA_OVERALL)
    return PairwiseResult(values)


def subgroup_alpha(study: AnnotationStudy, size: int) -> dict[tuple[str, ...], float | None]:
    """Overall alpha_U for every annotator subgroup of the given size."""
    if not 2 <= size <= len(study.annotators):
        raise AgreementError(f"subgroup size must be between 2 and {len(study.annotators)}")
    return {
        group: alpha_u(study.restrict(group), ALPHA_OVERALL)
        for group in itertools.combinations(sorted(study.annotators), size)
    }


@dataclass
class AgreementReport:
    alpha_overall: float | None
    alpha_per_category: dict[Activity, float | None]
    alpha_segment: float | None
    pairwise: PairwiseResult
    merged: dict[tuple[Activity, Activity], float | None]
    annotators: tuple[str, ...] = ()
    label: str = ""

    def to_dict(self) -> dict:
        record: dict = {"label": self.label, "alpha_u": self.alpha_overall}
        for activity in ACTIVITIES:
            record[f"alpha_u_{activity.value}"] = self.alpha_per_category[activity]
        record["alpha_u_segment"] = self.alpha_segment
        best, worst = self.pairwise.max, self.pairwise.min
        record["pair_max"] = best[1] if best else None
        record["pair_max_annotators"] = "/".join(best[0]) if best else None
        record["pair_min"] = worst[1] if worst else None
        record["pair_min_annotators"] = "/".join(worst[0]) if worst else None
        for (a, b), value in self.merged.items():
            record[f"merged_{a.value}_{b.value}"] = value
        return record


def agreement_report(study: AnnotationStudy, label: str = "") -> AgreementReport:
    _LOGGER.debug("🤝 Scoring agreement of %d annotators over %d tokens", len(study.annotators), study.length)
    return AgreementReport(
        alpha_overall=alpha_u(study, ALPHA_OVERALL),
        alpha_per_category={a: alpha_u(study, a) for a in ACTIVITIES},
        alpha_segment=alpha_u(study, ALPHA_SEGMENT),
        pairwise=pairwise_alpha(study),
        merged={pair: merged_alpha(study, *pair) for pair in activity_pairs()},
        annotators=study.annotators,
        label=label,
    )


# --- Majority-vote gold ---


@dataclass(frozen=True)
class Undecided:
    segment: Segment
    support: int
    doc_id: str = ""

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "activity": self.segment.activity.value,
            "begin": self.segment.begin,
            "end": self.segment.end,
            "support": self.support,
        }


@dataclass(frozen=True)
class GoldResult:
    gold: tuple[Segment, ...]
    undecided: tuple[Undecided, ...]


def majority_gold(
    document: Document,
    threshold: int,
    n_annotators: int,
    annotators: Sequence[str] | None = None,
) -> GoldResult:
    """Accept (begin, end, activity) triples marked identically by >= threshold annotators.

    Every other annotated triple is returned as undecided with its support.
    When ``annotators`` is given, annotators without segments on this
    document still count towards ``n_annotators``.
    """
    if not 1 <= threshold <= n_annotators:
        raise AgreementError(f"threshold {threshold} must be between 1 and {n_annotators}")
    present = document.annotators()
    if None in present:
        raise AgreementError(f"{document.doc_id}: gold segments cannot be voted on")
    if annotators is not None:
        extra = set(present) - set(annotators)
        if extra or len(annotators) != n_annotators:
            raise AgreementError(
                f"{document.doc_id}: expected annotators {sorted(annotators)}, found {sorted(present)}"
            )
    elif len(present) != n_annotators:
        raise AgreementError(
            f"{document.doc_id}: annotated by {len(present)} annotators, expected {n_annotators}"
        )

    support: Counter = Counter()
    for triple in {(s.annotator, s.triple()) for s in document.segments}:
        support[triple[1]] += 1

    accepted = sorted(t for t, count in support.items() if count >= threshold)
    conflicts = set()
    for (b1, e1, a1), (b2, e2, a2) in itertools.combinations(accepted, 2):
        if a1 is a2 and b1 < e2 and b2 < e1:
            conflicts.update({(b1, e1, a1), (b2, e2, a2)})
    if conflicts:
        _LOGGER.warning(
            "⚠️ %s: %d overlapping same-activity candidates left undecided", document.doc_id, len(conflicts)
        )

    gold = tuple(
        sorted(
            (Segment(activity, begin, end) for begin, end, activity in accepted if (begin, end, activity) not in conflicts),
            key=Segment.sort_key,
        )
    )
    gold_triples = {s.triple() for s in gold}
    undecided = tuple(
        Undecided(Segment(activity, begin, end), count, document.doc_id)
        for (begin, end, activity), count in sorted(
            support.items(), key=lambda item: (item[0][0], item[0][1], item[0][2].index)
        )
        if (begin, end, activity) not in gold_triples
    )
    return GoldResult(gold, undecided)


def build_gold_corpus(
    corpus: Corpus,
    threshold: int,
    n_annotators: int,
    annotators: Sequence[str] | None = None,
) -> tuple[Corpus, list[Undecided]]:
    """Majority gold for every document plus the list left for adjudication."""
    documents = []
    undecided: list[Undecided] = []
    for doc in corpus:
        result = majority_gold(doc, threshold, n_annotators, annotators)
        documents.append(replace(doc, segments=result.gold))
        undecided.extend(result.undecided)
    _LOGGER.info(
        "Gold: %d segments accepted, %d undecided",
        sum(len(d.segments) for d in documents),
        len(undecided),
    )
    return Corpus(tuple(documents), corpus.split), undecided


def apply_resolutions(gold: Corpus, resolved: Corpus | Iterable[Document]) -> Corpus:
    """Add adjudicated segments to the gold corpus and re-validate it."""
    by_id = gold.by_id()
    for doc in resolved:
        if doc.doc_id not in by_id:
            raise CorpusFormatError("resolution for unknown document", doc_id=doc.doc_id)
        base = by_id[doc.doc_id]
        if doc.tokens and doc.tokens != base.tokens:
            raise CorpusFormatError("token sequences differ from gold", doc_id=doc.doc_id, field="tokens")
        known = {s.triple() for s in base.segments}
        added = tuple(replace(s, annotator=None) for s in doc.segments if s.triple() not in known)
        updated = replace(base, segments=base.segments + added)
        validate_document(updated)
        by_id[doc.doc_id] = updated
    return Corpus(tuple(by_id[d.doc_id] for d in gold), gold.split)

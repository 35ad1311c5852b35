import random

import pytest

from conftest import make_doc
from epistact.agreement import (
    AnnotationStudy,
    Unit,
    agreement_report,
    alpha_u,
    apply_resolutions,
    build_gold_corpus,
    majority_gold,
    merged_alpha,
    merged_category,
    pairwise_alpha,
    study_from_corpus,
    subgroup_alpha,
)
from epistact.corpus import Activity, Corpus, Segment
from epistact.errors import AgreementError, CorpusFormatError


def study(length, **annotators):
    """Single-section study; units given as (category, begin, end)."""
    units = {
        name: tuple(Unit(0, b, e, c) for c, b, e in spec) for name, spec in annotators.items()
    }
    return AnnotationStudy((("doc", length),), tuple(annotators), units)


# Values below follow Krippendorff's unitizing alpha computed by hand over
# integer token positions.


def test_shifted_begin():
    s = study(20, a1=[("EE", 3, 8)], a2=[("EE", 4, 8)])
    assert alpha_u(s, "EE") == pytest.approx(1789 / 1980, abs=1e-9)
    assert alpha_u(s) == pytest.approx(1789 / 1980, abs=1e-9)


def test_disjoint_units_are_worse_than_chance():
    s = study(10, a1=[("EE", 0, 5)], a2=[("EE", 5, 10)])
    assert alpha_u(s, "EE") == pytest.approx(-74 / 11, abs=1e-9)


def test_categories_segment_and_overall():
    s = study(
        10,
        a1=[("HG", 0, 4), ("EE", 4, 10)],
        a2=[("HG", 0, 4), ("DC", 4, 10)],
    )
    assert alpha_u(s, Activity.HG) == pytest.approx(1.0)
    assert alpha_u(s, Activity.EE) == pytest.approx(-6.0)
    assert alpha_u(s, "segment") == pytest.approx(1.0)
    expected = 1 - (144 / 200) / (24.8 / 356 + 2 * 18 / 350)
    assert alpha_u(s, "overall") == pytest.approx(expected, abs=1e-9)
    assert merged_alpha(s, "HG", "DC") == pytest.approx(1 - 0.36 / (46.4 / 326), abs=1e-9)


def _reference_alpha(s, categories):
    """alpha_U straight from the definition: every unit and gap of every ordered pair."""
    m, total = len(s.annotators), s.length
    offsets = [sum(length for _, length in s.sections[:k]) for k in range(len(s.sections))]

    def segments(annotator, category):
        result = []
        for k, (_, length) in enumerate(s.sections):
            position = 0
            for u in sorted(u for u in s.units[annotator] if u.section == k and u.category == category):
                if u.begin > position:
                    result.append((offsets[k] + position, offsets[k] + u.begin, False))
                result.append((offsets[k] + u.begin, offsets[k] + u.end, True))
                position = u.end
            if length > position:
                result.append((offsets[k] + position, offsets[k] + length, False))
        return result

    def delta2(g, h):
        (bg, eg, unit_g), (bh, eh, unit_h) = g, h
        if unit_g and unit_h:
            return (bg - bh) ** 2 + (eg - eh) ** 2 if bg < eh and bh < eg else 0
        if unit_g:
            return (eg - bg) ** 2 if bh <= bg and eg <= eh else 0
        if unit_h:
            return (eh - bh) ** 2 if bg <= bh and eh <= eg else 0
        return 0

    d_o = d_e = 0.0
    for c in categories:
        segs = {a: segments(a, c) for a in s.annotators}
        for i in s.annotators:
            for j in s.annotators:
                if i != j:
                    d_o += sum(delta2(g, h) for g in segs[i] for h in segs[j])
        units = [e - b for a in s.annotators for b, e, unit in segs[a] if unit]
        gaps = [e - b for a in s.annotators for b, e, unit in segs[a] if not unit]
        num = sum(
            (len(units) - 1) * (2 * l**3 - 3 * l**2 + l) / 3
            + l**2 * sum(g - l + 1 for g in gaps if g >= l)
            for l in units
        )
        den = m * total * (m * total - 1) - sum(l * (l - 1) for l in units)
        if den > 0:
            d_e += 2 * num / (m * total * den)
    d_o /= m * (m - 1) * total**2
    return None if d_e == 0 else 1 - d_o / d_e


def _random_study(rng):
    sections = tuple((f"s{k}", rng.randint(4, 14)) for k in range(rng.randint(1, 3)))
    names = tuple(f"a{n}" for n in range(rng.randint(2, 4)))
    units = {}
    for name in names:
        drawn = []
        for k, (_, length) in enumerate(sections):
            for category in ("HG", "EE", "DC"):
                position = rng.randint(0, 3)
                while position < length and rng.random() < 0.7:
                    end = rng.randint(position + 1, min(length, position + 6))
                    drawn.append(Unit(k, position, end, category))
                    position = end + rng.randint(0, 4)
        units[name] = tuple(drawn)
    return AnnotationStudy(sections, names, units)


@pytest.mark.parametrize("seed", range(8))
def test_matches_definition_on_random_studies(seed):
    s = _random_study(random.Random(seed))
    merged = s.relabel({c: "SEG" for c in s.categories()})
    cases = [("overall", s.categories()), ("segment", ("SEG",))] + [(c, (c,)) for c in ("HG", "EE", "DC")]
    for mode, categories in cases:
        expected = _reference_alpha(merged if mode == "segment" else s, categories)
        actual = alpha_u(s, mode)
        if expected is None:
            assert actual is None
        else:
            assert actual == pytest.approx(expected, abs=1e-6)


def test_identical_annotators_score_one():
    units = [("HG", 0, 4), ("EE", 4, 10), ("DC", 6, 9)]
    s = study(12, a1=units, a2=units)
    for mode in ("overall", "segment", "HG", "EE", "DC"):
        assert alpha_u(s, mode) == 1.0
    assert alpha_u(s, "EG") is None


def test_merge_makes_relabeled_units_agree():
    s = study(10, a1=[("HG", 2, 6)], a2=[("DC", 2, 6)])
    assert merged_alpha(s, "HG", "DC") == pytest.approx(1.0)
    assert merged_alpha(s, "DC", "HG") == merged_alpha(s, "HG", "DC")
    assert alpha_u(s, "HG") < 1.0
    assert alpha_u(s, "DC") < 1.0
    assert merged_category("DC", "HG") == "HG&DC"


def test_merging_unused_categories_is_undefined():
    s = study(10, a1=[("EE", 0, 5)], a2=[("EE", 0, 4)])
    assert merged_alpha(s, "HG", "EG") is None


def test_invariant_under_annotator_order_and_translation():
    base = study(30, a1=[("EE", 8, 13), ("DC", 10, 12)], a2=[("EE", 9, 13)])
    swapped = study(30, a2=[("EE", 9, 13)], a1=[("EE", 8, 13), ("DC", 10, 12)])
    shifted = study(30, a1=[("EE", 12, 17), ("DC", 14, 16)], a2=[("EE", 13, 17)])
    for mode in ("overall", "EE", "DC", "segment"):
        assert alpha_u(swapped, mode) == pytest.approx(alpha_u(base, mode))
        assert alpha_u(shifted, mode) == pytest.approx(alpha_u(base, mode))


def test_single_annotator_rejected():
    with pytest.raises(AgreementError):
        alpha_u(study(10, a1=[("EE", 0, 5)]))


def test_same_category_overlap_rejected():
    with pytest.raises(AgreementError):
        study(10, a1=[("EE", 0, 5), ("EE", 3, 6)], a2=[])


def test_unit_outside_section_rejected():
    with pytest.raises(AgreementError):
        study(4, a1=[("EE", 0, 5)], a2=[])


def test_sections_never_pair_units():
    corpus = Corpus(
        (
            make_doc("d1", 10, [("EE", 0, 5, "a1")]),
            make_doc("d2", 10, [("EE", 0, 5, "a2")]),
        )
    )
    sectioned = study_from_corpus(corpus)
    assert sectioned.sections == (("d1", 10), ("d2", 10))
    # same units in one continuum would overlap completely
    joined = study(20, a1=[("EE", 0, 5)], a2=[("EE", 0, 5)])
    assert alpha_u(joined, "EE") == 1.0
    assert alpha_u(sectioned, "EE") < 0


def test_pairwise_with_identical_pair():
    s = study(
        12,
        a1=[("EE", 2, 6), ("HG", 0, 2)],
        a2=[("EE", 2, 6), ("HG", 0, 2)],
        a3=[],
    )
    pairs = pairwise_alpha(s)
    assert pairs.values[("a1", "a2")] == 1.0
    assert pairs.max == (("a1", "a2"), 1.0)
    assert pairs.min[1] < 1.0
    assert set(subgroup_alpha(s, 2)) == set(pairs.values)


def test_two_annotators_single_pair():
    s = study(20, a1=[("EE", 3, 8)], a2=[("EE", 4, 8)])
    pairs = pairwise_alpha(s)
    assert pairs.max == pairs.min
    assert pairs.max[1] == pytest.approx(alpha_u(s))


def test_agreement_report_fields():
    corpus = Corpus(
        (
            make_doc("d1", 12, [("EE", 2, 6, "a1"), ("EE", 2, 6, "a2"), ("DC", 4, 9, "a1")]),
            make_doc("d2", 8, [("HG", 0, 3, "a1"), ("HG", 0, 4, "a2")]),
        )
    )
    report = agreement_report(study_from_corpus(corpus), label="toy")
    record = report.to_dict()
    assert record["label"] == "toy"
    assert record["alpha_u_EE"] == 1.0
    assert record["alpha_u_EG"] is None
    assert record["pair_max_annotators"] == "a1/a2"
    assert "merged_EE_DC" in record
    assert report.alpha_overall < 1.0


# --- Majority voting ---

FIVE = ("a1", "a2", "a3", "a4", "a5")


def test_unanimous_annotations_are_gold():
    segments = [(act, b, e, who) for who in FIVE for act, b, e in (("EE", 0, 3), ("DC", 2, 6))]
    result = majority_gold(make_doc("d", 8, segments), threshold=4, n_annotators=5)
    assert result.gold == (Segment(Activity.EE, 0, 3), Segment(Activity.DC, 2, 6))
    assert result.undecided == ()


def test_three_of_five_is_undecided():
    segments = [("HG", 0, 2, who) for who in FIVE]
    segments += [("EE", 2, 7, who) for who in FIVE[:3]]
    result = majority_gold(make_doc("d", 10, segments), threshold=4, n_annotators=5)
    assert result.gold == (Segment(Activity.HG, 0, 2),)
    assert len(result.undecided) == 1
    assert result.undecided[0].segment == Segment(Activity.EE, 2, 7)
    assert result.undecided[0].support == 3


def test_boundary_mismatch_is_not_merged():
    segments = [("EE", 0, 5, who) for who in ("a1", "a2", "a3")] + [("EE", 0, 4, "a4")]
    result = majority_gold(make_doc("d", 6, segments), threshold=3, n_annotators=4)
    assert result.gold == (Segment(Activity.EE, 0, 5),)
    assert [(u.segment, u.support) for u in result.undecided] == [(Segment(Activity.EE, 0, 4), 1)]


def test_voting_ignores_annotator_order():
    segments = [("EE", 0, 5, who) for who in ("a1", "a2", "a3")] + [("EE", 0, 4, "a4")]
    forward = majority_gold(make_doc("d", 6, segments), 3, 4)
    backward = majority_gold(make_doc("d", 6, list(reversed(segments))), 3, 4)
    assert forward == backward


def test_wrong_annotator_count():
    segments = [("EE", 0, 5, who) for who in ("a1", "a2", "a3")]
    with pytest.raises(AgreementError):
        majority_gold(make_doc("d", 6, segments), threshold=3, n_annotators=4)


def test_silent_annotator_counts_when_listed():
    segments = [("EE", 0, 5, who) for who in ("a1", "a2", "a3")]
    result = majority_gold(make_doc("d", 6, segments), 3, 4, annotators=("a1", "a2", "a3", "a4"))
    assert result.gold == (Segment(Activity.EE, 0, 5),)


def test_conflicting_candidates_left_undecided():
    segments = [("EE", 0, 5, "a1"), ("EE", 0, 5, "a2"), ("EE", 3, 8, "a3"), ("EE", 3, 8, "a4")]
    result = majority_gold(make_doc("d", 8, segments), threshold=2, n_annotators=4)
    assert result.gold == ()
    assert {u.support for u in result.undecided} == {2}


def test_gold_corpus_and_resolutions():
    segments = [("HG", 0, 2, who) for who in FIVE] + [("EE", 2, 7, who) for who in FIVE[:3]]
    corpus = Corpus((make_doc("d", 10, segments),))
    gold, undecided = build_gold_corpus(corpus, threshold=4, n_annotators=5)
    assert gold.documents[0].segments == (Segment(Activity.HG, 0, 2),)
    assert undecided[0].to_dict() == {"doc_id": "d", "activity": "EE", "begin": 2, "end": 7, "support": 3}

    resolved = Corpus((make_doc("d", 10, [("EE", 2, 7)]),))
    final = apply_resolutions(gold, resolved)
    assert final.documents[0].segments == (Segment(Activity.HG, 0, 2), Segment(Activity.EE, 2, 7))
    with pytest.raises(CorpusFormatError):
        apply_resolutions(gold, Corpus((make_doc("unknown", 10),)))

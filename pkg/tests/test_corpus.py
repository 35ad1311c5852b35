import json
from collections import Counter

import pytest

from conftest import make_doc
from epistact.corpus import (
    Activity,
    Corpus,
    Label,
    Segment,
    corpus_stats,
    make_labelset,
    merge_corpora,
    parse_corpus,
    read_corpus,
    serialize_corpus,
    stratified_split,
)
from epistact.errors import ConfigError, CorpusFormatError


def _record(doc_id="d1", tokens=("a", "b"), annotations=(), **extra):
    record = {"doc_id": doc_id, "domain": "MeD", "case_id": "c1", "tokens": list(tokens)}
    record["annotations"] = [
        {"annotator": who, "activity": act, "begin": b, "end": e} for who, act, b, e in annotations
    ]
    record.update(extra)
    return json.dumps(record)


def test_parse_minimal_record():
    corpus = parse_corpus(_record(annotations=[(None, "EE", 0, 2)]) + "\n")
    assert len(corpus) == 1
    doc = corpus.documents[0]
    assert doc.segments == (Segment(Activity.EE, 0, 2),)


def test_segment_out_of_range_names_document():
    with pytest.raises(CorpusFormatError) as err:
        parse_corpus(_record(annotations=[(None, "EE", 0, 3)]))
    assert "EE[0,3)" in str(err.value)
    assert err.value.doc_id == "d1"
    assert err.value.line == 1


def test_same_activity_overlap_rejected():
    text = _record(tokens="abc", annotations=[("a1", "EE", 0, 2), ("a1", "EE", 1, 3)])
    with pytest.raises(CorpusFormatError, match="same-activity overlap"):
        parse_corpus(text)


def test_overlap_across_annotators_and_activities_allowed():
    text = _record(
        tokens="abc",
        annotations=[("a1", "EE", 0, 2), ("a2", "EE", 1, 3), ("a1", "DC", 1, 3)],
    )
    assert len(parse_corpus(text).documents[0].segments) == 3


def test_malformed_json_reports_line_and_path(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(_record() + "\n{not json\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError) as err:
        read_corpus(path)
    assert err.value.line == 2
    assert str(err.value).startswith(f"{path}:2")


def test_schema_error_names_field():
    record = json.loads(_record(annotations=[(None, "XX", 0, 1)]))
    with pytest.raises(CorpusFormatError) as err:
        parse_corpus(json.dumps(record))
    assert err.value.field.endswith("activity")


def test_boolean_offsets_rejected():
    record = json.loads(_record())
    record["annotations"] = [{"annotator": None, "activity": "EE", "begin": True, "end": 2}]
    with pytest.raises(CorpusFormatError):
        parse_corpus(json.dumps(record))


def test_duplicate_doc_id():
    with pytest.raises(CorpusFormatError, match="duplicate doc_id"):
        parse_corpus(_record() + "\n" + _record() + "\n")


def test_serialization_is_canonical_and_keeps_extra_fields():
    text = _record(
        tokens="abcd",
        annotations=[("a2", "DC", 1, 4), (None, "EE", 0, 2), ("a1", "DC", 1, 4)],
        source="case-file",
    )
    first = serialize_corpus(parse_corpus(text))
    assert serialize_corpus(parse_corpus(first)) == first
    record = json.loads(first)
    assert list(record)[:5] == ["doc_id", "domain", "case_id", "tokens", "annotations"]
    assert record["source"] == "case-file"
    # sorted by (begin, end, activity, annotator), gold before annotators
    assert [(a["begin"], a["activity"], a["annotator"]) for a in record["annotations"]] == [
        (0, "EE", None),
        (1, "DC", "a1"),
        (1, "DC", "a2"),
    ]


def test_round_trip_keeps_unicode_line_separators():
    doc = make_doc("d", ["a b", "c\x85d", "e\u2028f", "g\u2029h"], [("EE", 0, 2), ("DC", 1, 4)])
    text = serialize_corpus(Corpus((doc, make_doc("e", ["x"]))))
    assert text.count("\n") == 2
    parsed = parse_corpus(text)
    assert parsed.documents == (doc, make_doc("e", ["x"]))
    assert parse_corpus(text.encode("utf-8")).documents[0].tokens == doc.tokens


def test_invalid_utf8_reports_line(tmp_path):
    path = tmp_path / "latin1.jsonl"
    broken = _record(doc_id="d2").encode().replace(b"d2", b"d\xff")
    path.write_bytes(_record().encode() + b"\n" + broken + b"\n")
    with pytest.raises(CorpusFormatError, match="invalid UTF-8") as err:
        read_corpus(path)
    assert err.value.line == 2
    assert str(err.value).startswith(f"{path}:2")


def test_labelset_invariants():
    with pytest.raises(ValueError):
        make_labelset([Label.parse("O"), Label.parse("B-EE")])
    with pytest.raises(ValueError):
        make_labelset([Label.parse("B-EE"), Label.parse("I-EE")])
    with pytest.raises(ValueError):
        make_labelset([])
    assert str(Label.parse("I-DC")) == "I-DC"


def test_gold_view_requires_single_annotator():
    doc = make_doc("d", 4, [("EE", 0, 2, "a1"), ("EE", 0, 2, "a2")])
    with pytest.raises(CorpusFormatError):
        doc.gold_view()
    assert doc.for_annotator("a1").gold_view().segments == (Segment(Activity.EE, 0, 2),)


def test_merge_corpora_stamps_annotators():
    one = Corpus((make_doc("d", 4, [("EE", 0, 2)]),))
    two = Corpus((make_doc("d", 4, [("EE", 1, 3)]),))
    merged = merge_corpora([one, two], annotators=["a1", "a2"])
    assert merged.annotators() == ("a1", "a2")
    assert len(merged.documents[0].segments) == 2


def test_merge_corpora_rejects_token_mismatch():
    one = Corpus((make_doc("d", ["a", "b"]),))
    two = Corpus((make_doc("d", ["a", "c"]),))
    with pytest.raises(CorpusFormatError):
        merge_corpora([one, two])


def _corpus(sizes):
    docs = []
    for case, size in enumerate(sizes):
        docs += [make_doc(f"c{case}d{i}", 3, case_id=f"case{case}") for i in range(size)]
    return Corpus(tuple(docs))


@pytest.mark.parametrize(
    "size, expected",
    [(10, (6, 2, 2)), (5, (3, 1, 1)), (7, (4, 2, 1))],
)
def test_split_sizes_per_case(size, expected):
    split = stratified_split(_corpus([size]), (0.6, 0.2, 0.2), seed=7)
    counts = Counter(split.values())
    assert (counts["train"], counts["dev"], counts["test"]) == expected


def test_split_is_stratified_and_deterministic():
    corpus = _corpus([10, 10])
    split = stratified_split(corpus, seed=3)
    assert split == stratified_split(corpus, seed=3)
    assert set(split) == {d.doc_id for d in corpus}
    for case in (0, 1):
        counts = Counter(part for doc_id, part in split.items() if doc_id.startswith(f"c{case}d"))
        assert (counts["train"], counts["dev"], counts["test"]) == (6, 2, 2)
    assert corpus.with_split(split).part("dev").documents


def test_split_errors():
    with pytest.raises(ConfigError):
        stratified_split(_corpus([5]), (1.2, -0.1, -0.1))
    with pytest.raises(ConfigError):
        stratified_split(_corpus([5]), (0.5, 0.2, 0.2))
    with pytest.raises(CorpusFormatError):
        stratified_split(Corpus(()))


def test_split_must_cover_every_document():
    corpus = _corpus([3])
    with pytest.raises(CorpusFormatError):
        corpus.with_split({"c0d0": "train"})


def test_stats_overlap_intersection():
    stats = corpus_stats(Corpus((make_doc("d", 15, [("EE", 0, 10), ("DC", 5, 15)]),)))
    overlap = stats.overlap(Activity.DC, Activity.EE)
    assert overlap.count == 1
    assert overlap.av_len == 5
    assert stats.overlap(Activity.EE, Activity.DC) == overlap
    assert stats.activities[Activity.EE].av_len == 10
    assert stats.activities[Activity.HG].av_len is None
    assert stats.av_uncovered == 0


def test_stats_averages():
    corpus = Corpus(
        (
            make_doc("d1", 10, [("EE", 0, 2), ("EE", 4, 8)]),
            make_doc("d2", 6, [("EE", 1, 2), ("HG", 3, 6)]),
        )
    )
    stats = corpus_stats(corpus)
    ee = stats.activities[Activity.EE]
    assert ee.count == 3
    assert ee.av_count == pytest.approx(1.5)
    assert ee.av_len * ee.count == pytest.approx(7)
    assert stats.share[Activity.HG] == pytest.approx(0.25)
    assert stats.av_tokens == 8
    # d1 leaves 4 tokens uncovered, d2 leaves 2
    assert stats.av_uncovered == 3

import json

import pytest

from conftest import make_doc, make_synthetic_corpus
from epistact.cli import main
from epistact.corpus import read_corpus

FIVE = ("a1", "a2", "a3", "a4", "a5")


@pytest.fixture
def gold_path(write_jsonl):
    return write_jsonl("gold.jsonl", list(make_synthetic_corpus()))


@pytest.fixture
def annotated_path(write_jsonl):
    segments = [("HG", 0, 2, who) for who in FIVE] + [("EE", 2, 7, who) for who in FIVE[:3]]
    segments += [("DC", 4, 9, who) for who in FIVE[:4]]
    return write_jsonl("annotated.jsonl", [make_doc("d1", 10, segments)])


def test_validate(gold_path, capsys):
    assert main(["validate", "--in", gold_path]) == 0
    assert capsys.readouterr().out.startswith("OK: 20 documents")


def test_invalid_corpus_reports_location(write_jsonl, capsys):
    path = write_jsonl(
        "bad.jsonl",
        [{"doc_id": "d1", "domain": "MeD", "case_id": "c", "tokens": ["a"], "annotations": [
            {"annotator": None, "activity": "EE", "begin": 0, "end": 4}]}],
    )
    assert main(["validate", "--in", path]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert f"{path}:1" in err
    assert "doc_id=d1" in err


def test_invalid_utf8_exits_one(tmp_path, capsys):
    path = tmp_path / "broken.jsonl"
    path.write_bytes(b'{"doc_id": "d\xff"}\n')
    assert main(["validate", "--in", str(path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith(f"error: {path}:1")
    assert "invalid UTF-8" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["dance"],
        [],
        ["stats"],
        ["stats", "--in", "missing.jsonl"],
        ["split", "--in", "x", "--ratios", "0.5", "0.2"],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_stats_text(gold_path, capsys):
    assert main(["stats", "--in", gold_path, "--format", "text"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("20 documents")
    assert "DC/EE" not in out and "EE/DC" in out


def test_stats_label_shares(gold_path, capsys):
    assert main(["stats", "--in", gold_path, "--labels", "--format", "json-lines"]) == 0
    records = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [r[""] for r in records] == ["HG", "EG", "EE", "DC"]
    for record in records:
        assert record["B"] + record["I"] + record["O"] == pytest.approx(1.0)


def test_upper_bound(write_jsonl, capsys):
    gold = write_jsonl("gold.jsonl", [make_doc("d", 6, [("EE", 0, 4)])])
    annotated = write_jsonl("ann.jsonl", [make_doc("d", 6, [("EE", 0, 4, "a1"), ("EE", 0, 3, "a2")])])
    assert main(["upper-bound", "--gold", gold, "--in", annotated, "--format", "json-lines"]) == 0
    records = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [r["run"] for r in records] == ["a1", "a2", "upper bound"]
    assert records[0]["HL"] == 0
    assert records[1]["HL"] > 0
    assert records[2]["HL"] == 0


def test_split_writes_map(gold_path, tmp_path):
    out = tmp_path / "split.json"
    assert main(["split", "--in", gold_path, "--out", str(out), "--seed", "3"]) == 0
    split = json.loads(out.read_text())
    assert len(split) == 20
    assert sorted(set(split.values())) == ["dev", "test", "train"]


def test_gold_and_undecided(annotated_path, tmp_path):
    gold = tmp_path / "gold.jsonl"
    undecided = tmp_path / "undecided.jsonl"
    argv = ["gold", "--in", annotated_path, "--out", str(gold), "--undecided", str(undecided)]
    assert main(argv + ["--threshold", "4", "--annotators", "5"]) == 0
    doc = read_corpus(gold).documents[0]
    assert [str(s) for s in doc.segments] == ["HG[0,2)", "DC[4,9)"]
    entries = [json.loads(line) for line in undecided.read_text().splitlines()]
    assert entries == [{"doc_id": "d1", "activity": "EE", "begin": 2, "end": 7, "support": 3}]


def test_gold_counts_annotator_without_segments(write_jsonl, tmp_path):
    first = make_doc("d1", 6, [("EE", 0, 4, who) for who in FIVE])
    second = make_doc("d2", 6, [("HG", 0, 2, who) for who in FIVE[:4]])
    path = write_jsonl("silent.jsonl", [first, second])
    gold = tmp_path / "gold.jsonl"
    argv = ["gold", "--in", path, "--out", str(gold), "--threshold", "4", "--annotators", "5"]
    assert main(argv) == 0
    docs = read_corpus(gold).documents
    assert [str(s) for s in docs[1].segments] == ["HG[0,2)"]


def test_gold_rejects_wrong_annotator_count(annotated_path, tmp_path, capsys):
    argv = ["gold", "--in", annotated_path, "--out", str(tmp_path / "g.jsonl"), "--annotators", "6"]
    assert main(argv + ["--threshold", "4"]) == 1
    assert "found 5 annotators" in capsys.readouterr().err


def test_agreement_json_lines(annotated_path, capsys):
    assert main(["agreement", "--in", annotated_path, "--format", "json-lines"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["alpha_U-HG"] == 1.0


def test_transform_conll_and_strategy(gold_path, capsys):
    assert main(["transform", "--in", gold_path, "--format", "conll"]) == 0
    assert capsys.readouterr().out.startswith("# doc_id = doc00\n")
    assert main(["transform", "--in", gold_path, "--strategy", "multioutput"]) == 0
    first = json.loads(capsys.readouterr().out.splitlines()[0])
    assert first["strategy"] == "multioutput"
    assert all(len(record) == 4 for record in first["labels"])


def test_evaluate_identical_prediction(gold_path, capsys):
    assert main(["evaluate", "--gold", gold_path, "--pred", gold_path]) == 0
    row = capsys.readouterr().out.splitlines()[-1]
    assert row.split()[0] == "0.00"


def test_majority_baseline_evaluation(gold_path, capsys):
    assert main(["evaluate", "--gold", gold_path, "--strategy", "maj", "--format", "json-lines"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert 0 < record["HL"] < 1


def test_train_predict_evaluate(gold_path, tmp_path, capsys):
    model = tmp_path / "model.json"
    pred = tmp_path / "pred.jsonl"
    assert main(["train", "--in", gold_path, "--model", str(model), "--epochs", "25", "--seed", "1"]) == 0
    first = model.read_bytes()
    assert main(["train", "--in", gold_path, "--model", str(model), "--epochs", "25", "--seed", "1"]) == 0
    assert model.read_bytes() == first
    assert main(["predict", "--in", gold_path, "--model", str(model), "--out", str(pred)]) == 0
    assert main(["evaluate", "--gold", gold_path, "--pred", str(pred), "--format", "json-lines"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["HL"] <= 0.01


def test_corrupt_model_exits_one(gold_path, tmp_path, capsys):
    model = tmp_path / "model.json"
    assert main(["train", "--in", gold_path, "--model", str(model), "--epochs", "1"]) == 0
    data = json.loads(model.read_text())
    data["tasks"][0]["weights"].append([len(data["features"]), 0, 1.0])
    model.write_text(json.dumps(data))
    assert main(["predict", "--in", gold_path, "--model", str(model)]) == 1
    assert "malformed model file" in capsys.readouterr().err


def test_confusion_image(gold_path, tmp_path, capsys):
    pytest.importorskip("PIL")
    image = tmp_path / "confusion.png"
    assert main(["confusion", "--gold", gold_path, "--pred", gold_path, "--image", str(image)]) == 0
    assert image.exists()
    assert capsys.readouterr().out.startswith("gold\\pred")


def test_confusion_needs_prediction(gold_path, capsys):
    assert main(["confusion", "--gold", gold_path]) == 1
    assert "--pred" in capsys.readouterr().err


def test_significance_lists(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps([1, 2, 3]))
    b.write_text(json.dumps([4, 5, 6]))
    argv = ["significance", "--a", str(a), "--b", str(b), "--alpha", "0.05", "--comparisons", "3"]
    assert main(argv + ["--format", "json-lines"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["corrected alpha"] == pytest.approx(0.0166666, abs=1e-6)
    assert record["p"] == pytest.approx(0.1)
    assert record["significant"] is False


def test_significance_needs_second_sample(tmp_path, capsys):
    a = tmp_path / "a.json"
    a.write_text(json.dumps([1, 2, 3]))
    assert main(["significance", "--a", str(a)]) == 1
    assert "--b" in capsys.readouterr().err


def test_significance_method_map(tmp_path, capsys):
    scores = tmp_path / "scores.json"
    scores.write_text(json.dumps({"concat": list(range(20, 30)), "pref": list(range(10))}))
    assert main(["significance", "--a", str(scores), "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "method,mean m_a,outperforms"
    assert lines[1].endswith(",1")


def test_experiment_with_majority(gold_path, tmp_path, capsys):
    out = tmp_path / "maj.json"
    argv = ["experiment", "--in", gold_path, "--strategy", "maj", "--runs", "2", "--out", str(out)]
    assert main(argv) == 0
    data = json.loads(out.read_text())
    assert data["seeds"] == [13, 14]
    assert len(data["runs"]) == 2
    assert "maj mean" in capsys.readouterr().out

    b = tmp_path / "b.json"
    b.write_text(json.dumps([0.5, 0.6]))
    assert main(["significance", "--a", str(out), "--b", str(b), "--metric", "hl"]) == 0

import json
import random
from pathlib import Path

import pytest

from epistact.corpus import Activity, Corpus, Document, Segment, serialize_corpus

# Separable vocabulary: every word carries exactly one concat label.
# (word, activities opened here, activities continued here)
_BLOCKS = {
    Activity.HG: ("hypo", "hg"),
    Activity.EG: ("test", "eg"),
    Activity.EE: ("befund", "ee"),
    Activity.DC: ("fazit", "dc"),
}
_FILLERS = ("und", "dann", ".")


def make_doc(doc_id, tokens, segments=(), case_id="c1", domain="MeD"):
    """Document from (activity, begin, end[, annotator]) tuples."""
    if isinstance(tokens, int):
        tokens = [f"t{i}" for i in range(tokens)]
    built = []
    for spec in segments:
        activity, begin, end, *rest = spec
        built.append(Segment(Activity(activity), begin, end, rest[0] if rest else None))
    return Document(doc_id, domain, case_id, tuple(tokens), tuple(built))


def _synthetic_document(doc_id, rng):
    tokens = []
    segments = []
    for _ in range(rng.randint(3, 6)):
        tokens.append(rng.choice(_FILLERS))
        kind = rng.choice(["HG", "EG", "EE", "DC", "DC+EE"])
        start = len(tokens)
        if kind == "DC+EE":
            # DC opens, EE opens inside it, both end together
            inner = rng.randint(1, 2)
            tokens += ["fazit"] + ["dc"] * inner + ["since"] + ["eedc"] * rng.randint(1, 2)
            segments.append(Segment(Activity.DC, start, len(tokens)))
            segments.append(Segment(Activity.EE, start + 1 + inner, len(tokens)))
            continue
        activity = Activity(kind)
        opener, inside = _BLOCKS[activity]
        tokens += [opener] + [inside] * rng.randint(1, 3)
        segments.append(Segment(activity, start, len(tokens)))
    tokens.append(".")
    return Document(doc_id, "MeD", f"case{int(doc_id[3:]) % 2}", tuple(tokens), tuple(segments))


def make_synthetic_corpus(n_docs=20, seed=0):
    rng = random.Random(seed)
    return Corpus(tuple(_synthetic_document(f"doc{i:02d}", rng) for i in range(n_docs)))


@pytest.fixture
def synthetic_corpus():
    return make_synthetic_corpus()


@pytest.fixture
def figure_doc():
    """DC spanning a sentence with an EE segment starting at "since"."""
    tokens = ["So", "it", "is", "since", "the", "values", "are", "low", "."]
    return make_doc("fig", tokens, [("DC", 0, 8), ("EE", 3, 8)])


@pytest.fixture
def write_jsonl(tmp_path):
    """Write documents (or raw records) as a JSON-lines file and return its path."""

    def _write(name, items):
        path = Path(tmp_path) / name
        if items and isinstance(items[0], dict):
            path.write_text("".join(json.dumps(r) + "\n" for r in items), encoding="utf-8")
        else:
            path.write_text(serialize_corpus(items), encoding="utf-8")
        return str(path)

    return _write

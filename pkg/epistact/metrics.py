"""Token-level evaluation: hamming loss, macro-F1 family, confusion, significance."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import mean
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .const import DEFAULT_ALPHA, DEFAULT_COMPARISONS, EXACT_MWU_LIMIT
from .corpus import ACTIVITIES, ALL_LABELS, Activity, BioTag, Label
from .encoding import to_separate
from .errors import MisalignedError

_LOGGER = logging.getLogger(__name__)

LabelSeq = Sequence[Iterable[Label]]

ActivitySet = frozenset  # frozenset[Activity]; empty set stands for O


def _activity_set_key(value: frozenset) -> tuple[int, tuple[int, ...]]:
    return (len(value), tuple(sorted(a.index for a in value)))


POWER_SET: tuple[frozenset, ...] = tuple(
    sorted(
        (
            frozenset(combo)
            for size in range(len(ACTIVITIES) + 1)
            for combo in itertools.combinations(ACTIVITIES, size)
        ),
        key=_activity_set_key,
    )
)
BIO_UNIVERSE = (BioTag.B, BioTag.I, BioTag.O)


def activity_set(labels: Iterable[Label]) -> frozenset:
    """Drop the B/I distinction; Outside becomes the empty set."""
    return frozenset(label.activity for label in labels if label.activity is not None)


def activity_set_name(value: frozenset) -> str:
    if not value:
        return "O"
    return "-".join(a.value for a in sorted(value, key=lambda a: a.index))


def parse_activity_set(name: str) -> frozenset:
    if name == "O":
        return frozenset()
    return frozenset(Activity(part) for part in name.split("-"))


def _check_aligned(gold: Sequence, pred: Sequence) -> None:
    if len(gold) != len(pred):
        raise MisalignedError(f"gold has {len(gold)} tokens, prediction has {len(pred)}")


def align(
    gold: Mapping[str, LabelSeq], pred: Mapping[str, LabelSeq]
) -> tuple[list[frozenset[Label]], list[frozenset[Label]]]:
    """Flatten per-document label sequences after checking they line up."""
    missing = sorted(set(gold) ^ set(pred))
    if missing:
        raise MisalignedError(f"documents present on one side only: {', '.join(missing[:5])}")
    flat_gold: list[frozenset[Label]] = []
    flat_pred: list[frozenset[Label]] = []
    for doc_id in gold:
        if len(gold[doc_id]) != len(pred[doc_id]):
            raise MisalignedError(
                f"{doc_id}: gold has {len(gold[doc_id])} tokens, prediction has {len(pred[doc_id])}"
            )
        flat_gold.extend(frozenset(t) for t in gold[doc_id])
        flat_pred.extend(frozenset(t) for t in pred[doc_id])
    return flat_gold, flat_pred


# --- Scores ---


def hamming_loss(gold: LabelSeq, pred: LabelSeq) -> float:
    """Fraction of wrong membership decisions over the nine labels, per token."""
    _check_aligned(gold, pred)
    if not gold:
        return 0.0
    wrong = sum(len(frozenset(g) ^ frozenset(p)) for g, p in zip(gold, pred))
    return wrong / (len(ALL_LABELS) * len(gold))


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int


def per_class_scores(
    universe: Sequence[Hashable], gold: Sequence[Hashable], pred: Sequence[Hashable]
) -> dict[Hashable, ClassScore]:
    """Precision, recall and F1 (0-100) of every class in the universe."""
    _check_aligned(gold, pred)
    known = set(universe)
    tp = dict.fromkeys(universe, 0)
    n_gold = dict.fromkeys(universe, 0)
    n_pred = dict.fromkeys(universe, 0)
    for g, p in zip(gold, pred):
        if g not in known or p not in known:
            raise ValueError(f"class outside the universe: {g if g not in known else p!r}")
        n_gold[g] += 1
        n_pred[p] += 1
        if g == p:
            tp[g] += 1

    scores = {}
    for cls in universe:
        precision = tp[cls] / n_pred[cls] if n_pred[cls] else 0.0
        recall = tp[cls] / n_gold[cls] if n_gold[cls] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores[cls] = ClassScore(100 * precision, 100 * recall, 100 * f1, n_gold[cls])
    return scores


def macro_f1(universe: Sequence[Hashable], gold: Sequence[Hashable], pred: Sequence[Hashable]) -> float:
    """Mean F1 over every class of the universe, absent classes included."""
    scores = per_class_scores(universe, gold, pred)
    return math.fsum(s.f1 for s in scores.values()) / len(universe)


def m_s(gold: LabelSeq, pred: LabelSeq, activity: Activity) -> float:
    _check_aligned(gold, pred)
    return macro_f1(BIO_UNIVERSE, to_separate(gold, activity), to_separate(pred, activity))


def m_a(gold: LabelSeq, pred: LabelSeq) -> float:
    _check_aligned(gold, pred)
    return macro_f1(POWER_SET, [activity_set(g) for g in gold], [activity_set(p) for p in pred])


def overlap_tokens(gold: LabelSeq) -> list[int]:
    """Indices of tokens whose gold labels name at least two activities."""
    return [t for t, labels in enumerate(gold) if len(activity_set(labels)) >= 2]


def m_o(gold: LabelSeq, pred: LabelSeq, activity: Activity) -> float | None:
    """M_S restricted to overlap tokens; None when there are none."""
    _check_aligned(gold, pred)
    keep = overlap_tokens(gold)
    if not keep:
        return None
    return m_s([gold[t] for t in keep], [pred[t] for t in keep], activity)


# --- Confusion over the power set ---


@dataclass
class ConfusionMatrix:
    """Gold activity sets on rows, predicted ones on columns."""

    classes: tuple[frozenset, ...]
    counts: np.ndarray

    @property
    def percentages(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            result = np.where(totals > 0, 100.0 * self.counts / np.maximum(totals, 1), 0.0)
        return result

    @property
    def omissible(self) -> tuple[bool, ...]:
        rows = self.counts.sum(axis=1)
        cols = self.counts.sum(axis=0)
        return tuple(bool(r == 0 and c == 0) for r, c in zip(rows, cols))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(activity_set_name(c) for c in self.classes)

    def count(self, gold: frozenset, pred: frozenset) -> int:
        return int(self.counts[self.classes.index(gold), self.classes.index(pred)])

    def visible(self) -> list[int]:
        """Indices of classes that occur on either axis."""
        return [i for i, skip in enumerate(self.omissible) if not skip]

    def to_csv(self, percentages: bool = True, omit_empty: bool = False) -> str:
        keep = self.visible() if omit_empty else list(range(len(self.classes)))
        values = self.percentages if percentages else self.counts
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["gold\\pred"] + [self.names[j] for j in keep])
        for i in keep:
            row = [repr(float(values[i, j])) if percentages else int(values[i, j]) for j in keep]
            writer.writerow([self.names[i]] + row)
        return buffer.getvalue()

    def to_dict(self) -> dict:
        return {
            "classes": list(self.names),
            "counts": self.counts.tolist(),
        }


def confusion_matrix(gold: LabelSeq, pred: LabelSeq) -> ConfusionMatrix:
    _check_aligned(gold, pred)
    index = {c: i for i, c in enumerate(POWER_SET)}
    counts = np.zeros((len(POWER_SET), len(POWER_SET)), dtype=np.int64)
    for g, p in zip(gold, pred):
        counts[index[activity_set(g)], index[activity_set(p)]] += 1
    return ConfusionMatrix(POWER_SET, counts)


# --- Bundled report ---


@dataclass
class EvalReport:
    hl: float
    m_s: dict[Activity, float]
    m_a: float
    m_o: dict[Activity, float | None]
    tokens: int = 0
    confusion: ConfusionMatrix | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        """Flat record, full precision."""
        record: dict = {"hl": self.hl}
        for activity in ACTIVITIES:
            record[f"m_s_{activity.value}"] = self.m_s[activity]
        record["m_a"] = self.m_a
        for activity in ACTIVITIES:
            record[f"m_o_{activity.value}"] = self.m_o[activity]
        record["tokens"] = self.tokens
        return record

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        return cls(
            hl=data["hl"],
            m_s={a: data[f"m_s_{a.value}"] for a in ACTIVITIES},
            m_a=data["m_a"],
            m_o={a: data.get(f"m_o_{a.value}") for a in ACTIVITIES},
            tokens=data.get("tokens", 0),
        )

    def metric(self, name: str) -> float | None:
        return self.to_dict()[name]


def evaluate(
    gold: Mapping[str, LabelSeq] | LabelSeq,
    pred: Mapping[str, LabelSeq] | LabelSeq,
) -> EvalReport:
    """All challenge metrics for one gold/prediction pair."""
    if isinstance(gold, Mapping):
        flat_gold, flat_pred = align(gold, pred)
    else:
        _check_aligned(gold, pred)
        flat_gold = [frozenset(t) for t in gold]
        flat_pred = [frozenset(t) for t in pred]
    report = EvalReport(
        hl=hamming_loss(flat_gold, flat_pred),
        m_s={a: m_s(flat_gold, flat_pred, a) for a in ACTIVITIES},
        m_a=m_a(flat_gold, flat_pred),
        m_o={a: m_o(flat_gold, flat_pred, a) for a in ACTIVITIES},
        tokens=len(flat_gold),
        confusion=confusion_matrix(flat_gold, flat_pred),
    )
    _LOGGER.debug("📊 Evaluated %d tokens: HL=%.4f M_A=%.2f", report.tokens, report.hl, report.m_a)
    return report


def mean_report(reports: Sequence[EvalReport]) -> EvalReport:
    """Per-metric mean; M_O entries absent in any run stay absent."""
    if not reports:
        raise ValueError("no reports to aggregate")

    def avg(values: list) -> float | None:
        if any(v is None for v in values):
            return None
        return math.fsum(values) / len(values)

    return EvalReport(
        hl=avg([r.hl for r in reports]),
        m_s={a: avg([r.m_s[a] for r in reports]) for a in ACTIVITIES},
        m_a=avg([r.m_a for r in reports]),
        m_o={a: avg([r.m_o[a] for r in reports]) for a in ACTIVITIES},
        tokens=reports[0].tokens,
    )


# --- Mann-Whitney U ---


@dataclass(frozen=True)
class SignificanceResult:
    u: float
    p_value: float
    corrected_alpha: float
    significant: bool
    exact: bool = True

    def to_dict(self) -> dict:
        return {
            "u": self.u,
            "p_value": self.p_value,
            "corrected_alpha": self.corrected_alpha,
            "significant": self.significant,
            "exact": self.exact,
        }


def _doubled_midranks(values: Sequence[float]) -> list[int]:
    """Twice the mid-rank of each value in the pooled sample (always an integer)."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # positions i..j (0-based) share rank ((i+1)+(j+1))/2
        for k in range(i, j + 1):
            ranks[order[k]] = i + j + 2
        i = j + 1
    return ranks


def _rank_sum_distribution(ranks: Sequence[int], n: int) -> dict[int, int]:
    """Number of size-n subsets of the pooled ranks per (doubled) rank sum."""
    table: list[dict[int, int]] = [dict() for _ in range(n + 1)]
    table[0][0] = 1
    for rank in ranks:
        for k in range(n, 0, -1):
            source = table[k - 1]
            if not source:
                continue
            target = table[k]
            for total, ways in source.items():
                target[total + rank] = target.get(total + rank, 0) + ways
    return table[n]


def exact_p_value(scores_a: Sequence[float], scores_b: Sequence[float]) -> Fraction:
    """Two-sided exact p-value over all equally likely splits of the pooled mid-ranks."""
    pooled = list(scores_a) + list(scores_b)
    n = len(scores_a)
    ranks = _doubled_midranks(pooled)
    centre = n * (len(pooled) + 1)
    observed = abs(sum(ranks[:n]) - centre)
    distribution = _rank_sum_distribution(ranks, n)
    extreme = sum(ways for total, ways in distribution.items() if abs(total - centre) >= observed)
    return Fraction(extreme, math.comb(len(pooled), n))


def mann_whitney_u(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    alpha: float = DEFAULT_ALPHA,
    n_comparisons: int = DEFAULT_COMPARISONS,
) -> SignificanceResult:
    """Two-sided Mann-Whitney U test with a Bonferroni-corrected threshold.

    Up to EXACT_MWU_LIMIT pooled observations the null distribution is
    enumerated exactly over mid-ranks; beyond that scipy's tie-corrected
    normal approximation is used.
    """
    n, m = len(scores_a), len(scores_b)
    if n < 1 or m < 1:
        raise ValueError("both samples need at least one score")
    if n_comparisons < 1:
        raise ValueError("n_comparisons must be at least 1")

    ranks = _doubled_midranks(list(scores_a) + list(scores_b))
    u = sum(ranks[:n]) / 2 - n * (n + 1) / 2
    exact = n + m <= EXACT_MWU_LIMIT
    if exact:
        p_value = float(exact_p_value(scores_a, scores_b))
    else:
        from scipy.stats import mannwhitneyu

        try:
            p_value = float(
                mannwhitneyu(scores_a, scores_b, alternative="two-sided", method="asymptotic").pvalue
            )
        except ValueError:
            p_value = 1.0
        if math.isnan(p_value):
            p_value = 1.0
    corrected = alpha / n_comparisons
    result = SignificanceResult(u, min(p_value, 1.0), corrected, p_value < corrected, exact)
    _LOGGER.debug("Mann-Whitney U=%s p=%.6g (exact=%s, threshold %.6g)", u, p_value, exact, corrected)
    return result


def count_outperformed(
    scores_by_method: Mapping[str, Sequence[float]],
    alpha: float = DEFAULT_ALPHA,
    higher_is_better: bool = True,
) -> dict[str, int]:
    """Number of other methods each method beats significantly.

    The threshold is corrected for every unordered pair of methods.
    """
    methods = list(scores_by_method)
    n_comparisons = max(1, math.comb(len(methods), 2))
    wins = dict.fromkeys(methods, 0)
    for a, b in itertools.combinations(methods, 2):
        result = mann_whitney_u(scores_by_method[a], scores_by_method[b], alpha, n_comparisons)
        if not result.significant:
            continue
        better_a = mean(scores_by_method[a]) > mean(scores_by_method[b])
        if not higher_is_better:
            better_a = not better_a
        wins[a if better_a else b] += 1
    return wins

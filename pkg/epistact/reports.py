"""Report rendering: aligned text tables, CSV and JSON lines.

Every report is first turned into a header plus rows of raw values. Text
output rounds half-to-even to two decimals; CSV and JSON lines keep full
precision, so both agree after rounding.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from functools import singledispatch
from typing import Any, Mapping

from .agreement import AgreementReport, Undecided
from .const import FORMAT_CSV, FORMAT_JSONL, FORMAT_TEXT
from .corpus import ACTIVITIES, Activity, BioTag, StatsTable, activity_pairs
from .experiment import ExperimentResult
from .metrics import ConfusionMatrix, EvalReport, SignificanceResult

_LOGGER = logging.getLogger(__name__)

MISSING = "-"


@dataclass
class Table:
    headers: list[str]
    rows: list[list[Any]]
    title: str = ""

    def records(self) -> list[dict[str, Any]]:
        return [dict(zip(self.headers, row)) for row in self.rows]


@dataclass
class OutperformTable:
    """Per-method mean score plus how many other methods it beats significantly."""

    metric: str
    means: Mapping[str, float]
    wins: Mapping[str, int]


def format_number(value: Any, digits: int = 2) -> str:
    """Display rounding: half-to-even on the decimal representation."""
    if value is None:
        return MISSING
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        quantum = Decimal(1).scaleb(-digits)
        return str(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_EVEN))
    return str(value)


# --- Tabulation per report type ---


@singledispatch
def tabulate(report: Any) -> Table:
    raise TypeError(f"no table layout for {type(report).__name__}")


def _eval_header() -> list[str]:
    return (
        ["run", "HL"]
        + [f"M_S {a.value}" for a in ACTIVITIES]
        + ["M_A"]
        + [f"M_O {a.value}" for a in ACTIVITIES]
    )


def _eval_row(label: str, report: EvalReport) -> list[Any]:
    return (
        [label, report.hl]
        + [report.m_s[a] for a in ACTIVITIES]
        + [report.m_a]
        + [report.m_o[a] for a in ACTIVITIES]
    )


@tabulate.register
def _(report: EvalReport) -> Table:
    return Table(_eval_header(), [_eval_row("", report)])


@tabulate.register
def _(result: ExperimentResult) -> Table:
    rows = [_eval_row(f"seed {seed}", r) for seed, r in zip(result.seeds, result.reports)]
    rows.append(_eval_row(f"{result.strategy.value} mean", result.aggregate))
    return Table(_eval_header(), rows, title=f"{result.strategy.value}: {len(result.reports)} runs")


def eval_table(reports: Mapping[str, EvalReport]) -> Table:
    """Several labelled reports (methods, annotators) in one results table."""
    return Table(_eval_header(), [_eval_row(label, r) for label, r in reports.items()])


def distribution_table(distribution: Mapping[Activity, Mapping[BioTag, float]]) -> Table:
    """B/I/O token shares per activity."""
    rows = [[a.value] + [distribution[a][tag] for tag in BioTag] for a in ACTIVITIES]
    return Table([""] + [tag.value for tag in BioTag], rows, title="token shares per activity")


@tabulate.register
def _(report: AgreementReport) -> Table:
    best, worst = report.pairwise.max, report.pairwise.min
    headers = (
        ["", "alpha_U"]
        + [f"alpha_U-{a.value}" for a in ACTIVITIES]
        + ["alpha_U-segment", "max pair", "min pair"]
        + [f"{a.value}&{b.value}" for a, b in activity_pairs()]
    )
    row = (
        [report.label, report.alpha_overall]
        + [report.alpha_per_category[a] for a in ACTIVITIES]
        + [report.alpha_segment, best[1] if best else None, worst[1] if worst else None]
        + [report.merged[p] for p in activity_pairs()]
    )
    return Table(headers, [row])


@tabulate.register
def _(stats: StatsTable) -> Table:
    rows: list[list[Any]] = []
    for a in ACTIVITIES:
        s = stats.activities[a]
        rows.append([a.value, s.count, s.av_count, s.av_len, stats.share[a]])
    for a, b in activity_pairs():
        o = stats.overlap(a, b)
        rows.append([f"{a.value}/{b.value}", o.count, None, o.av_len, None])
    title = (
        f"{stats.documents} documents, av. {format_number(stats.av_tokens)} tokens, "
        f"av. {format_number(stats.av_uncovered)} uncovered"
    )
    return Table(["", "#", "av. #", "av. len", "share"], rows, title=title)


@tabulate.register
def _(matrix: ConfusionMatrix) -> Table:
    keep = matrix.visible()
    percentages = matrix.percentages
    rows = [
        [matrix.names[i]] + [float(percentages[i, j]) for j in keep] for i in keep
    ]
    return Table(["gold\\pred"] + [matrix.names[j] for j in keep], rows)


@tabulate.register
def _(result: SignificanceResult) -> Table:
    return Table(
        ["U", "p", "corrected alpha", "significant", "exact"],
        [[result.u, result.p_value, result.corrected_alpha, result.significant, result.exact]],
    )


@tabulate.register
def _(table: OutperformTable) -> Table:
    rows = [[method, table.means[method], table.wins[method]] for method in table.means]
    return Table(["method", f"mean {table.metric}", "outperforms"], rows)


@tabulate.register
def _(table: Table) -> Table:
    return table


@tabulate.register(list)
def _(items: list) -> Table:
    if items and all(isinstance(i, Undecided) for i in items):
        records = [i.to_dict() for i in items]
        headers = list(records[0])
        return Table(headers, [list(r.values()) for r in records])
    raise TypeError("no table layout for this list")


# --- Rendering ---


def render_text(table: Table) -> str:
    cells = [[format_number(v) for v in row] for row in table.rows]
    widths = [len(h) for h in table.headers]
    for row in cells:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = []
    if table.title:
        lines.append(table.title)
    lines.append("  ".join(h.ljust(w) for h, w in zip(table.headers, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append(
            "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
        )
    return "\n".join(lines) + "\n"


def _raw(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else value


def render_csv(table: Table) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.headers)
    for row in table.rows:
        writer.writerow([_raw(v) for v in row])
    return buffer.getvalue()


def render_jsonl(table: Table) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in table.records())


def emit_report(report: Any, fmt: str = FORMAT_TEXT) -> bytes:
    """Serialize a report in one of the report formats."""
    if isinstance(report, ConfusionMatrix) and fmt == FORMAT_CSV:
        return report.to_csv().encode("utf-8")
    table = tabulate(report)
    if fmt == FORMAT_TEXT:
        text = render_text(table)
    elif fmt == FORMAT_CSV:
        text = render_csv(table)
    elif fmt == FORMAT_JSONL:
        text = render_jsonl(table)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return text.encode("utf-8")

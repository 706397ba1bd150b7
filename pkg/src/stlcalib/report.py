"""Plain-text and CSV rendering of calibration reports and comparison tables."""

from __future__ import annotations

import csv
import io

from .calibration import CalibrationReport
from .traces import SOURCES

# row order of the comparison table
METHOD_ORDER = ("one-step", "temperature", "histogram", "cot-average", "stl1", "stl2", "stl3", "formula")
STRATEGY_ORDER = ("-", "identity", "cms", "eds", "mps", "gs")


def fmt(x) -> str:
    return "-" if x is None else f"{x:.6f}"


def align(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)
    return "\n".join(lines) + "\n"


def reports_text(reports: list[CalibrationReport]) -> str:
    rows = [
        [r.method, r.strategy, r.source, str(r.n), fmt(r.ece), fmt(r.brier), str(len(r.excluded))]
        for r in reports
    ]
    out = align(["method", "strategy", "source", "n", "ece", "brier", "excluded"], rows)
    skipped = [(r.method, r.source, i, why) for r in reports for i, why in r.excluded]
    for method, source, tid, why in skipped:
        out += f"skipped {tid} ({method}, {source}): {why}\n"
    return out


def bins_csv(reports: list[CalibrationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "strategy", "source", "bin_lo", "bin_hi", "count", "conf", "acc"])
    for r in reports:
        for lo, hi, k, c, a in r.bin_table.rows():
            w.writerow([r.method, r.strategy, r.source, repr(lo), repr(hi), k, "" if c is None else repr(c), "" if a is None else repr(a)])
    return buf.getvalue()


def _rank(seq, value):
    return seq.index(value) if value in seq else len(seq)


def comparison(reports: list[CalibrationReport]) -> tuple[list[tuple[str, str]], list[str], dict]:
    """Pivot reports into ``(method, strategy)`` rows by source columns.

    Returns the ordered rows, the ordered sources and a mapping
    ``(method, strategy, source) -> report``; later reports win on collision.
    """
    cells = {}
    for r in reports:
        cells[(r.method, r.strategy, r.source)] = r
    rows = sorted(
        {(m, s) for m, s, _ in cells},
        key=lambda ms: (_rank(METHOD_ORDER, ms[0]), ms[0], _rank(STRATEGY_ORDER, ms[1]), ms[1]),
    )
    present = {src for _, _, src in cells}
    sources = [s for s in SOURCES if s in present] + sorted(present - set(SOURCES))
    return rows, sources, cells


def comparison_text(reports: list[CalibrationReport]) -> str:
    rows, sources, cells = comparison(reports)
    out = []
    for metric in ("ece", "brier"):
        body = []
        for m, s in rows:
            vals = [fmt(getattr(cells[(m, s, src)], metric)) if (m, s, src) in cells else "" for src in sources]
            body.append([m, s, *vals])
        out.append(f"{metric.upper()}\n" + align(["method", "strategy", *sources], body))
    return "\n".join(out)


def comparison_csv(reports: list[CalibrationReport]) -> str:
    rows, sources, cells = comparison(reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "strategy", "source", "n", "ece", "brier"])
    for m, s in rows:
        for src in sources:
            r = cells.get((m, s, src))
            if r is not None:
                w.writerow([m, s, src, r.n, "" if r.ece is None else repr(r.ece), "" if r.brier is None else repr(r.brier)])
    return buf.getvalue()


def comparison_rows(reports: list[CalibrationReport]) -> list[dict]:
    rows, sources, cells = comparison(reports)
    out = []
    for m, s in rows:
        out.append(
            {
                "method": m,
                "strategy": s,
                "cells": {
                    src: {"ece": cells[(m, s, src)].ece, "brier": cells[(m, s, src)].brier, "n": cells[(m, s, src)].n}
                    for src in sources
                    if (m, s, src) in cells
                },
            }
        )
    return out

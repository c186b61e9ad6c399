"""Aggregation of repeated runs and baseline comparisons."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .engine import RunResult
from .strategies import BASELINE_OF

log = logging.getLogger(__name__)

COLUMNS = (
    "trace",
    "strategy",
    "utility",
    "buffer",
    "ttl",
    "repetitions",
    "delivery_ratio",
    "cost",
    "mean_delay",
    "drops",
    "baseline",
    "routing_gain",
    "delivery_change",
    "delay_change",
)


def routing_gain(t_base: float, t_variant: float) -> float:
    """Percentage of transmissions per delivered packet saved by the variant."""
    if not t_base > 0:
        raise ZeroDivisionError("baseline cost must be positive")
    return 100.0 * (1.0 - t_variant / t_base)


def delivery_rate_change(d_base: float, d_variant: float) -> float:
    if d_base == 0:
        raise ZeroDivisionError("baseline delivery ratio is zero")
    return d_variant / d_base - 1.0


def delay_change(delay_base: float, delay_variant: float) -> float:
    if delay_base == 0:
        raise ZeroDivisionError("baseline delay is zero")
    return delay_variant / delay_base - 1.0


def _mean(xs: Sequence[float | None]) -> float | None:
    vals = [x for x in xs if x is not None]
    return sum(vals) / len(vals) if vals else None


@dataclass
class Report:
    """Means over repetitions of one configuration, with the per-repetition values kept."""

    delivery_ratio: float
    cost: float | None
    mean_delay: float | None
    drops: float
    repetitions: int
    per_repetition: list[tuple[float, float | None, float | None, int]] = field(default_factory=list)
    trace: str = ""
    strategy: str = ""
    utility: str = ""
    buffer: int | None = None
    ttl: int | None = None

    @property
    def key(self) -> tuple:
        return (self.trace, self.utility, self.buffer, self.ttl)


def aggregate(results: Iterable[RunResult], **labels) -> Report:
    """Average D, T, delay and drops over repetitions.

    T and delay are first computed per run (delay over delivered packets only);
    runs where they are undefined do not enter the mean.
    """
    results = list(results)
    if not results:
        raise ValueError("nothing to aggregate")
    per = [(r.delivery_ratio, r.cost, r.mean_delay, r.drops) for r in results]
    return Report(
        delivery_ratio=sum(p[0] for p in per) / len(per),
        cost=_mean([p[1] for p in per]),
        mean_delay=_mean([p[2] for p in per]),
        drops=sum(p[3] for p in per) / len(per),
        repetitions=len(per),
        per_repetition=per,
        **labels,
    )


@dataclass(frozen=True)
class Comparison:
    baseline: str
    routing_gain: float | None
    delivery_change: float | None
    delay_change: float | None


def _safe(fn, base, variant):
    if base is None or variant is None:
        return None
    try:
        return fn(base, variant)
    except ZeroDivisionError:
        return None


def compare(base: Report, variant: Report) -> Comparison:
    return Comparison(
        baseline=base.strategy,
        routing_gain=_safe(routing_gain, base.cost, variant.cost),
        delivery_change=_safe(delivery_rate_change, base.delivery_ratio, variant.delivery_ratio),
        delay_change=_safe(delay_change, base.mean_delay, variant.mean_delay),
    )


def comparisons(reports: Sequence[Report], baseline: str | None = None) -> list[Comparison | None]:
    """Pair each report with its baseline run of the same trace/utility/buffer/ttl.

    ``baseline=None`` uses the natural baseline of each cluster-based strategy
    (cbr-df -> df, ...); a name compares every other strategy against it.
    """
    index = {(r.strategy,) + r.key: r for r in reports}
    out: list[Comparison | None] = []
    for r in reports:
        name = BASELINE_OF.get(r.strategy) if baseline is None else baseline
        if name is None or name == r.strategy:
            out.append(None)
            continue
        base = index.get((name,) + r.key)
        if base is None:
            log.warning("no %r baseline for %s/%s; gain columns left empty", name, r.strategy, r.utility)
            out.append(Comparison(name, None, None, None))
            continue
        out.append(compare(base, r))
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def rows(reports: Sequence[Report], comps: Sequence[Comparison | None]) -> list[list[str]]:
    out = []
    for r, c in zip(reports, comps):
        out.append(
            [
                _fmt(r.trace),
                _fmt(r.strategy),
                _fmt(r.utility),
                "inf" if r.buffer is None else str(r.buffer),
                _fmt(r.ttl),
                str(r.repetitions),
                _fmt(r.delivery_ratio),
                _fmt(r.cost),
                _fmt(r.mean_delay),
                _fmt(r.drops),
                "" if c is None else c.baseline,
                "" if c is None else _fmt(c.routing_gain),
                "" if c is None else _fmt(c.delivery_change),
                "" if c is None else _fmt(c.delay_change),
            ]
        )
    return out


def format_table(table: list[list[str]]) -> str:
    widths = [max(len(COLUMNS[i]), *(len(row[i]) for row in table)) for i in range(len(COLUMNS))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(COLUMNS, widths)).rstrip()]
    for row in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def emit(
    reports: Sequence[Report],
    comps: Sequence[Comparison | None] | None = None,
    out: str | TextIO | None = None,
    format: str = "csv",
) -> str:
    """Write one row per report; returns the text written.

    ``out`` may be a path, an open stream or None (text only).
    """
    if comps is None:
        comps = comparisons(reports)
    table = rows(reports, comps)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(table)
        text = buf.getvalue()
    elif format == "table":
        text = format_table(table)
    else:
        raise ValueError(f"unknown output format {format!r}")
    if isinstance(out, str):
        with open(out, "w", newline="") as fh:
            fh.write(text)
    elif out is not None:
        out.write(text)
    return text


def _num(s: str):
    if s == "":
        return None
    return float(s)


def read_csv(source: str | TextIO) -> list[dict]:
    """Parse emitted CSV back into typed rows (empty cells become None)."""
    if isinstance(source, str):
        with open(source, newline="") as fh:
            return read_csv(fh)
    out = []
    for rec in csv.DictReader(source):
        row = dict(rec)
        row["buffer"] = None if rec["buffer"] == "inf" else int(rec["buffer"])
        row["ttl"] = None if rec["ttl"] == "" else int(rec["ttl"])
        row["repetitions"] = int(rec["repetitions"])
        for col in ("delivery_ratio", "cost", "mean_delay", "drops", "routing_gain", "delivery_change", "delay_change"):
            row[col] = _num(rec[col])
        out.append(row)
    return out

"""Contact traces: parsing, normalization, synthetic generation."""

from __future__ import annotations

import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

import numpy as np

DAY = 86400

FORMATS = ("pair-interval", "pair-start-duration")


class TraceError(ValueError):
    """Raised for malformed or invalid trace input."""


@dataclass(frozen=True)
class ContactEvent:
    node_a: int
    node_b: int
    start: int
    end: int

    def __post_init__(self):
        if self.node_a == self.node_b:
            raise TraceError(f"self-contact for node {self.node_a}")
        if self.start >= self.end:
            raise TraceError(f"contact start {self.start} >= end {self.end}")
        if self.node_a > self.node_b:
            # canonical (min, max) ordering
            a, b = self.node_b, self.node_a
            object.__setattr__(self, "node_a", a)
            object.__setattr__(self, "node_b", b)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.node_a, self.node_b)

    def sort_key(self) -> tuple[int, int, int]:
        return (self.start, self.node_a, self.node_b)


@dataclass
class ContactTrace:
    """A normalized, time-sorted contact trace over dense node ids ``0..N-1``.

    ``original_ids[i]`` is the id node ``i`` had in the source file.
    """

    events: list[ContactEvent]
    original_ids: list[int]
    duration: int
    presence: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def nodes(self) -> set[int]:
        return set(range(len(self.original_ids)))

    @property
    def n_nodes(self) -> int:
        return len(self.original_ids)

    def __iter__(self) -> Iterator[ContactEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def presence_window(self, v: int) -> tuple[int, int]:
        return presence_window(self, v)

    def to_text(self) -> str:
        buf = io.StringIO()
        write_trace(self, buf)
        return buf.getvalue()


def _merge_pair_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    intervals.sort()
    merged = [list(intervals[0])]
    for s, e in intervals[1:]:
        last = merged[-1]
        # touching intervals are one continuous contact
        if s <= last[1]:
            last[1] = max(last[1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def normalize(raw: Iterable[tuple[int, int, int, int]]) -> ContactTrace:
    """Build a ContactTrace from ``(id_a, id_b, start, end)`` tuples in original ids.

    Pairs are canonicalized, overlapping contacts of a pair merged, node ids
    remapped densely in increasing order of the original id.
    """
    by_pair: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    ids: set[int] = set()
    for a, b, s, e in raw:
        if a == b:
            raise TraceError(f"self-contact for node {a}")
        if s >= e:
            raise TraceError(f"contact start {s} >= end {e}")
        ids.add(a)
        ids.add(b)
        by_pair[(min(a, b), max(a, b))].append((s, e))
    if not by_pair:
        raise TraceError("empty trace")

    original_ids = sorted(ids)
    index = {orig: i for i, orig in enumerate(original_ids)}
    events = []
    for (a, b), intervals in by_pair.items():
        ia, ib = index[a], index[b]
        for s, e in _merge_pair_intervals(intervals):
            events.append(ContactEvent(ia, ib, s, e))
    events.sort(key=ContactEvent.sort_key)

    presence: dict[int, tuple[int, int]] = {}
    for ev in events:
        for v in ev.pair:
            first, last = presence.get(v, (ev.start, ev.end))
            presence[v] = (min(first, ev.start), max(last, ev.end))
    duration = max(ev.end for ev in events)
    return ContactTrace(events, original_ids, duration, presence)


def _parse_time(tok: str) -> int:
    try:
        return int(tok)
    except ValueError:
        value = float(tok)
        if value != value or value in (float("inf"), float("-inf")):
            raise
        return int(round(value))


def parse_trace(source: TextIO | str, format: str | None = None) -> ContactTrace:
    """Parse a whitespace-separated trace, one contact per line.

    Each line holds ``a b t1 t2``. With ``format="pair-interval"`` the times are
    start and end; with ``"pair-start-duration"`` they are start and length.
    When ``format`` is None the file may declare it in a ``# format: <name>``
    comment; otherwise pair-interval is assumed. Blank lines and ``#`` comments
    are skipped.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    if format is not None and format not in FORMATS:
        raise TraceError(f"unknown trace format {format!r}")

    fmt = format
    raw = []
    for lineno, line in enumerate(source, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            directive = stripped.lstrip("#").strip()
            if fmt is None and directive.startswith("format:"):
                declared = directive.split(":", 1)[1].strip()
                if declared not in FORMATS:
                    raise TraceError(f"line {lineno}: unknown trace format {declared!r}")
                fmt = declared
            continue
        fields = stripped.split()
        if len(fields) != 4:
            raise TraceError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            a, b = int(fields[0]), int(fields[1])
            t1, t2 = _parse_time(fields[2]), _parse_time(fields[3])
        except ValueError:
            raise TraceError(f"line {lineno}: malformed line {stripped!r}") from None
        if t1 < 0 or t2 < 0:
            raise TraceError(f"line {lineno}: negative time")
        end = t1 + t2 if fmt == "pair-start-duration" else t2
        if t1 >= end:
            raise TraceError(f"line {lineno}: contact start {t1} >= end {end}")
        if a == b:
            raise TraceError(f"line {lineno}: self-contact for node {a}")
        raw.append((a, b, t1, end))
    return normalize(raw)


def load_trace(path, format: str | None = None) -> ContactTrace:
    with open(path) as fh:
        return parse_trace(fh, format)


def write_trace(trace: ContactTrace, out: TextIO) -> None:
    """Write in pair-interval format using the original node ids."""
    ids = trace.original_ids
    for ev in trace.events:
        out.write(f"{ids[ev.node_a]} {ids[ev.node_b]} {ev.start} {ev.end}\n")


def presence_window(trace: ContactTrace, v: int) -> tuple[int, int]:
    try:
        return trace.presence[v]
    except KeyError:
        raise KeyError(f"node {v} does not appear in the trace") from None


def community_of(node: int, n_nodes: int, n_communities: int) -> int:
    """Contiguous blocks: node i belongs to community ``i * c // n``."""
    return node * n_communities // n_nodes


def generate_synthetic(
    n_nodes: int,
    n_communities: int,
    duration: int,
    intra_rate: float,
    inter_rate: float,
    mean_contact_len: float = 300.0,
    seed: int = 0,
) -> ContactTrace:
    """Community-structured Poisson contact trace.

    Each node pair meets as a Poisson process with ``intra_rate`` contacts per
    day inside a community and ``inter_rate`` across communities. Contact
    lengths are exponential with the given mean, at least one second.
    """
    if n_nodes < 2:
        raise TraceError("n_nodes must be >= 2")
    if not 1 <= n_communities <= n_nodes:
        raise TraceError("n_communities must be in [1, n_nodes]")
    if duration <= 1:
        raise TraceError("duration must be positive")
    if not intra_rate > inter_rate >= 0:
        raise TraceError("need intra_rate > inter_rate >= 0")
    if mean_contact_len <= 0:
        raise TraceError("mean_contact_len must be positive")

    rng = np.random.default_rng(seed)
    days = duration / DAY
    raw = []
    for a in range(n_nodes):
        ca = community_of(a, n_nodes, n_communities)
        for b in range(a + 1, n_nodes):
            rate = intra_rate if community_of(b, n_nodes, n_communities) == ca else inter_rate
            count = rng.poisson(rate * days) if rate > 0 else 0
            if count == 0:
                continue
            starts = rng.integers(0, duration - 1, size=count)
            lengths = np.maximum(1, np.rint(rng.exponential(mean_contact_len, size=count)))
            for s, ln in zip(starts.tolist(), lengths.tolist()):
                raw.append((a, b, s, min(int(s + ln), duration)))
    if not raw:
        raise TraceError("generated trace is empty; raise the contact rates")
    return normalize(raw)

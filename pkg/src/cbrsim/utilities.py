"""Per-node contact history and the utility functions computed from it."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class UtilityKind(enum.Enum):
    DEST_ENC = "destenc"
    ENC = "enc"
    LTS = "lts"
    PROPHET = "prophet"
    SPM = "spm"
    LAST_CONTACT = "lastcontact"
    SIMILARITY = "similarity"
    EGO_BETWEENNESS = "betweenness"
    SIMBET = "simbet"

    @property
    def dest_dependent(self) -> bool:
        return self not in _DEST_INDEPENDENT

    @classmethod
    def parse(cls, name: str | UtilityKind) -> UtilityKind:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        for kind in cls:
            if kind.value == key or kind.name.lower().replace("_", "") == key:
                return kind
        raise ValueError(f"unknown utility {name!r}")


_DEST_INDEPENDENT = frozenset({UtilityKind.ENC, UtilityKind.LAST_CONTACT, UtilityKind.EGO_BETWEENNESS})

SINGLE_UTILITIES = (
    UtilityKind.DEST_ENC,
    UtilityKind.ENC,
    UtilityKind.LTS,
    UtilityKind.PROPHET,
    UtilityKind.SPM,
    UtilityKind.LAST_CONTACT,
)


@dataclass(frozen=True)
class ProphetParams:
    p_init: float = 0.75
    beta: float = 0.25
    gamma: float = 0.98
    # seconds per aging step
    quantum: float = 1.0


class TimeRegressionError(ValueError):
    pass


class UtilityState:
    """Contact-history state of one node.

    Mutated only by :meth:`on_contact`; :meth:`value` is a pure read, with
    Prophet aging applied on the fly.
    """

    def __init__(
        self,
        owner: int,
        prophet: ProphetParams | None = None,
        track_prophet: bool = True,
        track_neighbors: bool = True,
    ):
        self.owner = owner
        self.prophet = prophet or ProphetParams()
        # Prophet aging and neighbor reports cost work on every contact; a run
        # that never reads them can switch them off
        self.track_prophet = track_prophet
        self.track_neighbors = track_neighbors
        self.contact_counts: dict[int, int] = {}
        self.total_contacts = 0
        self.last_contact_time: dict[int, int] = {}
        self.last_any_contact: int | None = None
        self.first_contact: int | None = None
        self.prophet_p: dict[int, float] = {}
        self.prophet_last_age = 0.0
        # per peer: (integrated waiting time over closed gaps, time of last encounter)
        self.spm_accum: dict[int, tuple[float, int]] = {}
        self.neighbor_sets_of_neighbors: dict[int, frozenset[int]] = {}
        # the same sets as bitmasks over node ids, plus the reverse relation
        # (who reported x), for the ego-betweenness pair loop
        self._reported_bits: dict[int, int] = {}
        self._reported_by: dict[int, int] = {}
        self._version = 0
        self._ego_cache: tuple[int, float] | None = None
        self._sim_cache: tuple[int, dict[int, int]] = (-1, {})

    # -- updates -----------------------------------------------------------

    def on_contact(
        self,
        u: int,
        t: int,
        neighbors_of_u: frozenset[int] | set[int] = frozenset(),
        p_u_vector: dict[int, float] | None = None,
    ) -> UtilityState:
        if self.last_any_contact is not None and t < self.last_any_contact:
            raise TimeRegressionError(f"contact at {t} precedes last recorded time {self.last_any_contact}")
        if u == self.owner:
            raise ValueError("self-contact")
        if self.first_contact is None:
            self.first_contact = t
            self.prophet_last_age = t

        is_new = u not in self.contact_counts
        self.contact_counts[u] = self.contact_counts.get(u, 0) + 1
        self.total_contacts += 1
        self.last_contact_time[u] = t
        self.last_any_contact = t

        if self.track_prophet:
            self._prophet_contact(u, t, p_u_vector or {})

        if u in self.spm_accum:
            integ, last = self.spm_accum[u]
            gap = t - last
            self.spm_accum[u] = (integ + 0.5 * gap * gap, t)
        else:
            gap = t - self.first_contact
            self.spm_accum[u] = (0.5 * gap * gap, t)

        if not self.track_neighbors:
            return self
        reported = frozenset(neighbors_of_u) - {self.owner}
        if is_new or self.neighbor_sets_of_neighbors.get(u) != reported:
            self.neighbor_sets_of_neighbors[u] = reported
            new = _bits(reported)
            changed = new ^ self._reported_bits.get(u, 0)
            self._reported_bits[u] = new
            by = self._reported_by
            while changed:
                low = changed & -changed
                y = low.bit_length() - 1
                by[y] = by.get(y, 0) ^ (1 << u)
                changed ^= low
            self._version += 1
        return self

    def _age_steps(self, now: float) -> int:
        q = self.prophet.quantum
        return max(0, int((now - self.prophet_last_age) // q))

    def _prophet_contact(self, u: int, t: int, p_u: dict[int, float]) -> None:
        pp = self.prophet
        k = self._age_steps(t)
        if k:
            factor = pp.gamma**k
            for key in self.prophet_p:
                self.prophet_p[key] *= factor
            self.prophet_last_age += k * pp.quantum
        p_vu = self.prophet_p.get(u, 0.0)
        p_vu = p_vu + (1.0 - p_vu) * pp.p_init
        self.prophet_p[u] = p_vu
        for d, p_ud in p_u.items():
            if d == self.owner or d == u:
                continue
            candidate = p_vu * p_ud * pp.beta
            if candidate > self.prophet_p.get(d, 0.0):
                self.prophet_p[d] = candidate

    # -- reads ---------------------------------------------------------------

    @property
    def neighbors(self) -> frozenset[int]:
        return frozenset(self.contact_counts)

    def prophet_vector(self, now: float) -> dict[int, float]:
        """Aged delivery predictabilities at ``now`` (state is not modified)."""
        k = self._age_steps(now)
        if not k:
            return dict(self.prophet_p)
        factor = self.prophet.gamma**k
        return {d: p * factor for d, p in self.prophet_p.items()}

    def value(self, kind: UtilityKind | str, d: int | None = None, now: float | None = None) -> float:
        if not isinstance(kind, UtilityKind):
            kind = UtilityKind.parse(kind)
        if kind is UtilityKind.SIMBET:
            raise ValueError("simbet is pairwise; use simbet_combine on similarity and betweenness")
        if kind.dest_dependent and d is None:
            raise ValueError(f"{kind.value} needs a destination")
        if now is None:
            now = self.last_any_contact if self.last_any_contact is not None else 0
        if self.last_any_contact is not None and now < self.last_any_contact:
            raise TimeRegressionError(f"now={now} precedes last recorded time {self.last_any_contact}")

        if kind is UtilityKind.DEST_ENC:
            return float(self.contact_counts.get(d, 0))
        if kind is UtilityKind.ENC:
            return float(self.total_contacts)
        if kind is UtilityKind.LTS:
            last = self.last_contact_time.get(d)
            return 0.0 if last is None else 1.0 / (1.0 + now - last)
        if kind is UtilityKind.LAST_CONTACT:
            if self.last_any_contact is None:
                return 0.0
            return 1.0 / (1.0 + now - self.last_any_contact)
        if kind is UtilityKind.PROPHET:
            if not self.track_prophet:
                raise ValueError("Prophet tracking is disabled for this node")
            p = self.prophet_p.get(d, 0.0)
            k = self._age_steps(now)
            return p * self.prophet.gamma**k if k else p
        if kind is UtilityKind.SPM:
            return self._spm(d, now)
        if kind is UtilityKind.SIMILARITY:
            return float(self.similarity(d))
        if kind is UtilityKind.EGO_BETWEENNESS:
            return self.ego_betweenness()
        raise AssertionError(kind)

    def values(self, kind: UtilityKind, dests, now: float) -> dict[int, float]:
        """``value`` for several destinations at once."""
        if kind is UtilityKind.DEST_ENC:
            counts = self.contact_counts
            return {d: float(counts.get(d, 0)) for d in dests}
        if kind is UtilityKind.PROPHET:
            if not self.track_prophet:
                raise ValueError("Prophet tracking is disabled for this node")
            k = self._age_steps(now)
            factor = self.prophet.gamma**k if k else 1.0
            probs = self.prophet_p
            return {d: probs.get(d, 0.0) * factor for d in dests}
        return {d: self.value(kind, d, now) for d in dests}

    def _spm(self, d: int, now: float) -> float:
        # 1 / (1 + mean waiting time until the next encounter with d); the
        # still-open gap since the last encounter is counted as if it closed now
        entry = self.spm_accum.get(d)
        if entry is None:
            return 0.0
        integ, last = entry
        open_gap = now - last
        window = now - self.first_contact
        if window <= 0:
            return 1.0
        mean_wait = (integ + 0.5 * open_gap * open_gap) / window
        return 1.0 / (1.0 + mean_wait)

    def similarity(self, d: int) -> int:
        """Number of the owner's neighbors known to be adjacent to ``d``."""
        self._require_neighbors()
        version, cache = self._sim_cache
        if version != self._version:
            cache = {}
            self._sim_cache = (self._version, cache)
        count = cache.get(d)
        if count is not None:
            return count
        if d == self.owner:
            count = len(self.contact_counts)
        else:
            reported = self.neighbor_sets_of_neighbors
            of_d = reported.get(d, ())
            count = 0
            for x in self.contact_counts:
                if x != d and (x in of_d or d in reported.get(x, ())):
                    count += 1
        cache[d] = count
        return count

    def _require_neighbors(self) -> None:
        if not self.track_neighbors:
            raise ValueError("neighbor tracking is disabled for this node")

    def ego_betweenness(self) -> float:
        self._require_neighbors()
        if self._ego_cache is not None and self._ego_cache[0] == self._version:
            return self._ego_cache[1]
        bits, by = self._reported_bits, self._reported_by
        nbrs = sorted(self.contact_counts)
        value = _ego_from_masks(nbrs, [bits.get(x, 0) | by.get(x, 0) for x in nbrs])
        self._ego_cache = (self._version, value)
        return value


def ego_betweenness(owner: int, neighbors, reported: dict[int, frozenset[int]]) -> float:
    """Betweenness of ``owner`` on its ego graph, by pair enumeration.

    For every pair of neighbors that are not linked to each other, the owner
    lies on one of the shortest (two-hop) paths between them; it contributes
    ``1 / number of two-hop paths`` within the ego graph.
    """
    nbrs = sorted(neighbors)
    links = {x: _bits(reported.get(x, ())) for x in nbrs}
    for x in nbrs:
        for y in reported.get(x, ()):
            if y in links:
                links[y] |= 1 << x
    return _ego_from_masks(nbrs, [links[x] for x in nbrs])


def _bits(nodes) -> int:
    m = 0
    for y in nodes:
        m |= 1 << y
    return m


def _ego_from_masks(nbrs: list[int], links: list[int]) -> float:
    # links[i]: bitmask over node ids of everything linked to nbrs[i] in either
    # direction; only links among the (sorted) neighbors count
    within = _bits(nbrs)
    slot = {x: i for i, x in enumerate(nbrs)}
    masks = [links[i] & within & ~(1 << x) for i, x in enumerate(nbrs)]
    total = 0.0
    for i, x in enumerate(nbrs):
        mi = masks[i]
        # neighbors with a larger id that x is not linked to
        m = within & ~mi & ~((2 << x) - 1)
        while m:
            low = m & -m
            # +1 for the owner itself
            total += 1.0 / (1 + (mi & masks[slot[low.bit_length() - 1]]).bit_count())
            m ^= low
    return total


def simbet_combine(sim_v: float, bet_v: float, sim_u: float, bet_u: float, w: float = 0.5) -> tuple[float, float]:
    """Pairwise-normalized SimBet utilities of ``v`` and ``u``; they sum to 1."""
    if min(sim_v, bet_v, sim_u, bet_u) < 0:
        raise ValueError("similarity and betweenness must be non-negative")
    if not 0.0 <= w <= 1.0:
        raise ValueError("weight must lie in [0, 1]")

    def share(a: float, b: float) -> float:
        s = a + b
        return 0.5 if s == 0 else a / s

    sim_share = share(sim_v, sim_u)
    bet_share = share(bet_v, bet_u)
    simbet_v = w * sim_share + (1.0 - w) * bet_share
    simbet_u = w * (1.0 - sim_share) + (1.0 - w) * (1.0 - bet_share)
    return simbet_v, simbet_u

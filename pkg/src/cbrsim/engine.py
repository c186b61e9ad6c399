"""Trace-driven discrete-event simulation of one routing configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusteringConfig, ClusterTracker
from .strategies import (
    CARRIER_AWARE,
    CLUSTER_STRATEGIES,
    SOCIAL_STRATEGIES,
    STRATEGIES,
    Decision,
    DecisionInput,
    PacketMeta,
    epidemic_decide,
    simbet_spray_decide,
)
from .trace import ContactTrace
from .utilities import ProphetParams, UtilityKind, UtilityState, simbet_combine

DELIVERY_POLICIES = ("oracle-delete", "ttl-only")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficModel:
    n_packets: int = 5000
    seed: int = 0
    warmup_frac: float = 0.2
    cooldown_frac: float = 0.2
    ttl_frac: float = 0.2

    def __post_init__(self):
        if self.n_packets < 1:
            raise ConfigError("n_packets must be >= 1")
        if not (0 <= self.warmup_frac and 0 <= self.cooldown_frac and self.warmup_frac + self.cooldown_frac < 1):
            raise ConfigError("warm-up + cool-down must be a fraction below 1")
        if not 0 < self.ttl_frac:
            raise ConfigError("ttl_frac must be positive")


@dataclass(frozen=True)
class RunConfig:
    strategy: str = "epidemic"
    utility: str = "prophet"
    prophet: ProphetParams = field(default_factory=ProphetParams)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    u_th: float = 0.0
    # None = infinite; bounds the copies a node relays for others
    buffer_capacity: int | None = None
    delivery_policy: str = "oracle-delete"
    spray_copies: int = 8
    spray_split: str = "proportional"
    hop_limit: int | None = None
    hop_limit_scope: str = "simbet"
    simbet_weight: float = 0.5

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        try:
            kind = UtilityKind.parse(self.utility)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.strategy in SOCIAL_STRATEGIES and kind is not UtilityKind.SIMBET:
            raise ConfigError(f"{self.strategy} needs the social utility 'simbet', got {self.utility!r}")
        if self.delivery_policy not in DELIVERY_POLICIES:
            raise ConfigError(f"unknown delivery policy {self.delivery_policy!r}")
        if self.buffer_capacity is not None and self.buffer_capacity < 0:
            raise ConfigError("buffer capacity must be >= 0")
        if self.spray_copies < 1:
            raise ConfigError("spray_copies must be >= 1")
        if self.hop_limit_scope not in ("simbet", "all"):
            raise ConfigError("hop_limit_scope must be 'simbet' or 'all'")

    @property
    def utility_kind(self) -> UtilityKind:
        return UtilityKind.parse(self.utility)


@dataclass(frozen=True)
class RunResult:
    generated: int
    delivered: int
    transmissions: int
    delivered_ids: tuple[int, ...]
    delays: tuple[int, ...]
    drops: int
    relay_transfers: int
    delivery_transmissions: int
    # forwards decided by the plain baseline rule (no trained cluster model)
    baseline_forwards: int
    ttl: int

    @property
    def delivery_ratio(self) -> float:
        return self.delivered / self.generated if self.generated else 0.0

    @property
    def cost(self) -> float | None:
        return self.transmissions / self.delivered if self.delivered else None

    @property
    def mean_delay(self) -> float | None:
        return sum(self.delays) / len(self.delays) if self.delays else None

    @property
    def replicas_per_packet(self) -> float:
        return self.relay_transfers / self.generated if self.generated else 0.0


@dataclass(frozen=True, slots=True)
class ScheduledPacket:
    id: int
    src: int
    dst: int
    t_gen: int


def schedule_traffic(trace: ContactTrace, tm: TrafficModel) -> list[ScheduledPacket]:
    """Random source/destination pairs with generation times inside both presence windows."""
    n = trace.n_nodes
    if n < 2:
        raise ConfigError("trace needs at least two nodes")
    warm_end = math.ceil(trace.duration * tm.warmup_frac)
    cool_start = math.floor(trace.duration * (1.0 - tm.cooldown_frac))
    rng = np.random.default_rng(tm.seed)
    packets: list[ScheduledPacket] = []
    attempts = 0
    max_attempts = 100 * tm.n_packets
    while len(packets) < tm.n_packets:
        attempts += 1
        if attempts > max_attempts:
            raise ConfigError("no valid source/destination pair with overlapping presence")
        src = int(rng.integers(n))
        dst = int(rng.integers(n - 1))
        if dst >= src:
            dst += 1
        fs_s, ls_s = trace.presence[src]
        fs_d, ls_d = trace.presence[dst]
        lo = max(fs_s, fs_d, warm_end)
        hi = min(ls_s, ls_d, cool_start)
        if lo > hi:
            continue
        t_gen = int(rng.integers(lo, hi + 1))
        packets.append(ScheduledPacket(len(packets), src, dst, t_gen))
    packets.sort(key=lambda p: (p.t_gen, p.id))
    return packets


class Simulation:
    """Mutable state of one run; drive it with :meth:`run` or event by event."""

    def __init__(self, trace: ContactTrace, config: RunConfig, tm: TrafficModel, probe=None):
        self.trace = trace
        self.config = config
        self.tm = tm
        self.kind = config.utility_kind
        self.social = self.kind is UtilityKind.SIMBET
        self.dest_dep = self.kind.dest_dependent
        self.decide = STRATEGIES[config.strategy]
        n = trace.n_nodes
        self.ttl = int(trace.duration * tm.ttl_frac)
        self.buffers: list[dict[int, PacketMeta]] = [{} for _ in range(n)]
        self.holders: dict[int, set[int]] = {}
        self.delivered: dict[int, int] = {}
        self.schedule = schedule_traffic(trace, tm)
        self._next_packet = 0

        self.c2br = config.strategy.startswith("c2br")
        self.uses_clusters = config.strategy in CLUSTER_STRATEGIES or self.c2br
        self.trackers: dict[tuple[int, int | None], ClusterTracker] = {}
        self.sim_trackers: dict[tuple[int, int], ClusterTracker] = {}
        self.bet_trackers: dict[int, ClusterTracker] = {}
        # (observer, dest) whose recorded samples are logged as (t, value);
        # dest is None for destination-independent utilities
        self.probe = None
        if probe is not None:
            observer, dest = probe
            self.probe = (observer, dest if self.dest_dep else None)
        self.probe_log: list[tuple[int, float]] = []
        # epidemic never consults utilities; without a probe they need not be announced
        self.announce = config.strategy != "epidemic" or self.probe is not None
        track_prophet = self.announce and self.kind is UtilityKind.PROPHET
        track_neighbors = self.announce and self.social
        self.states = [UtilityState(v, config.prophet, track_prophet, track_neighbors) for v in range(n)]

        cap = config.buffer_capacity
        self.capacity = math.inf if cap is None else cap
        self.hop_limit = config.hop_limit
        if self.hop_limit is not None and config.hop_limit_scope == "simbet" and config.strategy != "simbet-spray":
            self.hop_limit = None

        self.transmissions = 0
        self.drops = 0
        self.relay_transfers = 0
        self.delivery_tx = 0
        self.baseline_forwards = 0

    # -- bookkeeping -----------------------------------------------------------

    def _remove_copy(self, node: int, pid: int) -> None:
        del self.buffers[node][pid]
        holders = self.holders[pid]
        holders.discard(node)

    def _store(self, node: int, meta: PacketMeta) -> bool:
        """Admit a copy into ``node``'s buffer, evicting the oldest relayed copy when full."""
        buf = self.buffers[node]
        if meta.src != node and self.capacity != math.inf:
            relayed = [p for p in buf.values() if p.src != node]
            if len(relayed) >= self.capacity:
                if not relayed:
                    self.drops += 1
                    return False
                oldest = min(relayed, key=lambda p: (p.created, p.id))
                if (meta.created, meta.id) < (oldest.created, oldest.id):
                    self.drops += 1
                    return False
                self._remove_copy(node, oldest.id)
                self.drops += 1
        buf[meta.id] = meta
        self.holders.setdefault(meta.id, set()).add(node)
        return True

    def expire_and_collect(self, now: int, nodes=None) -> None:
        """Drop copies whose age exceeds the TTL from the given (default: all) buffers."""
        ttl = self.ttl
        for v in range(len(self.buffers)) if nodes is None else nodes:
            buf = self.buffers[v]
            stale = [pid for pid, p in buf.items() if now - p.created > ttl]
            for pid in stale:
                self._remove_copy(v, pid)

    def _own_utility(self, v: int, d: int, now: int) -> float:
        if self.social:
            return 0.0
        return self.states[v].value(self.kind, d if self.dest_dep else None, now)

    def _inject(self, upto: int) -> None:
        sched = self.schedule
        while self._next_packet < len(sched) and sched[self._next_packet].t_gen <= upto:
            sp = sched[self._next_packet]
            self._next_packet += 1
            self.expire_and_collect(sp.t_gen, (sp.src,))
            meta = PacketMeta(sp.id, sp.src, sp.dst, sp.t_gen, self.ttl)
            if self.announce:
                meta.tau = self._own_utility(sp.src, sp.dst, sp.t_gen)
            if self.social and self.announce:
                st = self.states[sp.src]
                meta.tau_s = float(st.similarity(sp.dst))
                meta.tau_b = st.ego_betweenness()
            if self.config.strategy == "simbet-spray":
                meta.copies_left = self.config.spray_copies
            self._store(sp.src, meta)

    # -- contact processing -----------------------------------------------------

    def _deliver(self, v: int, u: int, t: int) -> None:
        buf = self.buffers[v]
        for pid in [pid for pid, p in buf.items() if p.dst == u]:
            if pid not in self.delivered:
                self.delivered[pid] = t
                self.transmissions += 1
                self.delivery_tx += 1
                if self.config.delivery_policy == "oracle-delete":
                    for holder in list(self.holders.get(pid, ())):
                        self._remove_copy(holder, pid)
                    continue
            if pid in buf:
                self._remove_copy(v, pid)

    def _reported(self, v: int, dests, t: int):
        """Utilities ``v`` announces at the start of the contact, before it is recorded."""
        st = self.states[v]
        if self.social:
            return {d: float(st.similarity(d)) for d in dests}, st.ego_betweenness()
        if not self.dest_dep:
            return st.value(self.kind, None, t)
        return st.values(self.kind, dests, t)

    def _tracker(self, v: int, d: int | None) -> ClusterTracker:
        key = (v, d)
        tr = self.trackers.get(key)
        if tr is None:
            tr = self.trackers[key] = ClusterTracker(v, d, self.config.clustering)
        return tr

    def _sim_tracker(self, v: int, d: int) -> ClusterTracker:
        key = (v, d)
        tr = self.sim_trackers.get(key)
        if tr is None:
            tr = self.sim_trackers[key] = ClusterTracker(v, d, self.config.clustering)
        return tr

    def _bet_tracker(self, v: int) -> ClusterTracker:
        tr = self.bet_trackers.get(v)
        if tr is None:
            tr = self.bet_trackers[v] = ClusterTracker(v, None, self.config.clustering)
        return tr

    def _record(self, v: int, u: int, rep_u, simbet, peer_dests, t: int) -> None:
        """``v`` records what ``u`` announced, once per destination ``u`` carries."""
        if not peer_dests:
            return
        if self.c2br:
            sim_u, bet_u = rep_u
            for d in peer_dests:
                self._sim_tracker(v, d).add(sim_u[d], t)
            self._bet_tracker(v).add(bet_u, t)
            return
        if self.social:
            side = 1 if v < u else 0
            observed = {d: simbet[d][side] for d in peer_dests}
        elif self.dest_dep:
            observed = {d: rep_u[d] for d in peer_dests}
        else:
            observed = {None: rep_u}
        for d, value in observed.items():
            if self.uses_clusters:
                self._tracker(v, d).add(value, t)
            if self.probe == (v, d):
                self.probe_log.append((t, value))

    def _decisions(self, v: int, u: int, rep_v, rep_u, simbet, t: int):
        cfg = self.config
        strategy = cfg.strategy
        buf_v = self.buffers[v]
        buf_u = self.buffers[u]
        out = []
        # ranks only depend on (destination, value) within one contact
        ranks: dict[tuple, int] = {}

        def rank(tr: ClusterTracker, key, value: float) -> int:
            k = (key, value)
            r = ranks.get(k)
            if r is None:
                r = ranks[k] = tr.rank(value)
            return r

        # everything but the packet's own thresholds is shared by packets to one destination
        per_dest: dict[int, tuple] = {}

        def context(d: int) -> tuple:
            ctx = per_dest.get(d)
            if ctx is not None:
                return ctx
            if self.social:
                pair = simbet[d]
                u_v, u_u = (pair[0], pair[1]) if v < u else (pair[1], pair[0])
            else:
                u_v, u_u = (rep_v[d], rep_u[d]) if self.dest_dep else (rep_v, rep_u)
            fixed = {"u_v": u_v, "u_u": u_u}
            tracker = None
            if strategy in CLUSTER_STRATEGIES:
                key = d if self.dest_dep else None
                tr = self.trackers.get((v, key))
                if tr is not None and tr.model is not None:
                    fixed["r_v"] = rank(tr, key, u_v)
                    fixed["r_u"] = rank(tr, key, u_u)
                    tracker = (tr, key)
            elif self.social:
                sim_v, bet_v = rep_v
                sim_u, bet_u = rep_u
                fixed.update(s_v=sim_v[d], s_u=sim_u[d], b_v=bet_v, b_u=bet_u)
                if self.c2br:
                    st = self.sim_trackers.get((v, d))
                    bt = self.bet_trackers.get(v)
                    if st is not None and st.model is not None and bt is not None and bt.model is not None:
                        fixed.update(
                            r_v_s=rank(st, d, sim_v[d]),
                            r_u_s=rank(st, d, sim_u[d]),
                            r_v_b=rank(bt, "b", bet_v),
                            r_u_b=rank(bt, "b", bet_u),
                        )
                        tracker = (st, bt)
            ctx = per_dest[d] = (fixed, tracker)
            return ctx

        u_th = cfg.u_th
        for pid in sorted(buf_v):
            p = buf_v[pid]
            peer = buf_u.get(pid)
            if self.hop_limit is not None and p.hops >= self.hop_limit:
                continue
            if peer is not None and strategy not in CARRIER_AWARE:
                continue
            if strategy == "epidemic":
                dec = epidemic_decide(peer is not None)
                out.append((p, dec, None))
                self.baseline_forwards += dec.forward
                continue
            d = p.dst
            fixed, tracker = context(d)
            kw = dict(fixed)
            kw.update(rep=p.rep, tau=p.tau, u_th=u_th, peer_has_packet=peer is not None)
            if peer is not None:
                kw["peer_tau"] = peer.tau
            trained = tracker is not None
            if self.social:
                kw.update(tau_s=p.tau_s, tau_b=p.tau_b, copies_left=p.copies_left)
                if peer is not None:
                    kw.update(peer_tau_s=peer.tau_s, peer_tau_b=peer.tau_b)
                if trained:
                    st, bt = tracker
                    kw["r_t_s"] = rank(st, d, p.tau_s)
                    kw["r_t_b"] = rank(bt, "b", p.tau_b)
            elif trained:
                tr, key = tracker
                kw["r_t"] = rank(tr, key, p.tau)
            x = DecisionInput(**kw)
            if strategy == "simbet-spray":
                dec = simbet_spray_decide(x, p.copies_left, cfg.spray_split)
            else:
                dec = self.decide(x)
            out.append((p, dec, x if dec.forward else None))
            if dec.forward and not trained:
                self.baseline_forwards += 1
        return out

    def _apply(self, v: int, u: int, decisions) -> None:
        for p, dec, x in decisions:
            if dec.rep is not None:
                p.rep = dec.rep
            if dec.tau is not None:
                p.tau = dec.tau
            if dec.tau_s is not None:
                p.tau_s = dec.tau_s
            if dec.tau_b is not None:
                p.tau_b = dec.tau_b
            if not dec.forward:
                continue
            if p.id in self.buffers[u]:
                raise AssertionError("forward to a carrier")
            copy = PacketMeta(p.id, p.src, p.dst, p.created, p.ttl, hops=p.hops + 1)
            if x is not None:
                copy.tau = x.u_u
                copy.tau_s = x.s_u
                copy.tau_b = x.b_u
            if dec.give_copies is not None:
                copy.copies_left = dec.give_copies
            if self._store(u, copy):
                self.transmissions += 1
                self.relay_transfers += 1
                if dec.copies_left is not None:
                    p.copies_left = dec.copies_left

    def process_contact(self, a: int, b: int, t: int) -> None:
        self._inject(t)
        self.expire_and_collect(t, (a, b))
        # (1) direct delivery, lower id first
        self._deliver(a, b, t)
        self._deliver(b, a, t)

        buf_a, buf_b = self.buffers[a], self.buffers[b]
        dests_a = {p.dst for p in buf_a.values()}
        dests_b = {p.dst for p in buf_b.values()}
        need = dests_a | dests_b

        # (2) exchange: announce utilities, then fold the contact into both histories
        rep_a = rep_b = simbet = None
        if self.announce:
            rep_a = self._reported(a, need, t)
            rep_b = self._reported(b, need, t)
        if self.social and self.announce:
            w = self.config.simbet_weight
            sim_a, bet_a = rep_a
            sim_b, bet_b = rep_b
            simbet = {d: simbet_combine(sim_a[d], bet_a, sim_b[d], bet_b, w) for d in need}
        st_a, st_b = self.states[a], self.states[b]
        nbrs_a = st_a.neighbors if st_b.track_neighbors else frozenset()
        nbrs_b = st_b.neighbors if st_a.track_neighbors else frozenset()
        pv_a = st_a.prophet_vector(t) if st_a.track_prophet else None
        pv_b = st_b.prophet_vector(t) if st_b.track_prophet else None
        st_a.on_contact(b, t, nbrs_b, pv_b)
        st_b.on_contact(a, t, nbrs_a, pv_a)

        # (3) sample recording
        if self.announce:
            self._record(a, b, rep_b, simbet, dests_b, t)
            self._record(b, a, rep_a, simbet, dests_a, t)

        # (4) decisions on the pre-transfer state, (5) transfers
        if not buf_a and not buf_b:
            return
        dec_ab = self._decisions(a, b, rep_a, rep_b, simbet, t) if buf_a else ()
        dec_ba = self._decisions(b, a, rep_b, rep_a, simbet, t) if buf_b else ()
        self._apply(a, b, dec_ab)
        self._apply(b, a, dec_ba)

    def run(self) -> RunResult:
        for ev in self.trace.events:
            self.process_contact(ev.node_a, ev.node_b, ev.start)
        ids = tuple(sorted(self.delivered))
        sched_by_id = {sp.id: sp for sp in self.schedule}
        delays = tuple(self.delivered[i] - sched_by_id[i].t_gen for i in ids)
        return RunResult(
            generated=len(self.schedule),
            delivered=len(ids),
            transmissions=self.transmissions,
            delivered_ids=ids,
            delays=delays,
            drops=self.drops,
            relay_transfers=self.relay_transfers,
            delivery_transmissions=self.delivery_tx,
            baseline_forwards=self.baseline_forwards,
            ttl=self.ttl,
        )


def run(
    trace: ContactTrace,
    config: RunConfig,
    tm: TrafficModel,
) -> RunResult:
    return Simulation(trace, config, tm).run()

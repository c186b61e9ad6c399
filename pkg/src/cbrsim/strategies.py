"""Per-contact replication decisions.

Every function is pure: it reads a :class:`DecisionInput` describing one packet
held by carrier ``v`` at a contact with ``u`` and returns a :class:`Decision`.
Ranks are ``None`` while the carrier's cluster model is still training, in
which case the cluster-gated strategies fall back to their baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable


@dataclass(slots=True)
class PacketMeta:
    id: int
    src: int
    dst: int
    created: int
    ttl: int
    rep: bool = False
    tau: float | None = None
    tau_s: float | None = None
    tau_b: float | None = None
    copies_left: int | None = None
    hops: int = 0


@dataclass(frozen=True, slots=True)
class DecisionInput:
    u_v: float = 0.0
    u_u: float = 0.0
    r_v: int | None = None
    r_u: int | None = None
    r_t: int | None = None
    rep: bool = False
    tau: float | None = None
    tau_s: float | None = None
    tau_b: float | None = None
    u_th: float = 0.0
    peer_has_packet: bool = False
    peer_tau: float | None = None
    peer_tau_s: float | None = None
    peer_tau_b: float | None = None
    # social pair (similarity for the destination, ego-betweenness) and their ranks
    s_v: float = 0.0
    s_u: float = 0.0
    b_v: float = 0.0
    b_u: float = 0.0
    r_v_s: int | None = None
    r_u_s: int | None = None
    r_t_s: int | None = None
    r_v_b: int | None = None
    r_u_b: int | None = None
    r_t_b: int | None = None
    copies_left: int | None = None


@dataclass(frozen=True, slots=True)
class Decision:
    """Outcome for one packet. ``None`` fields leave the carrier's value as is.

    ``give_copies`` is the spray budget handed to the new copy.
    """

    forward: bool = False
    rep: bool | None = None
    tau: float | None = None
    tau_s: float | None = None
    tau_b: float | None = None
    copies_left: int | None = None
    give_copies: int | None = None


NO_OP = Decision()


def _tau(x: DecisionInput) -> float:
    return -math.inf if x.tau is None else x.tau


def epidemic_decide(x: DecisionInput | bool) -> Decision:
    peer_has = x if isinstance(x, bool) else x.peer_has_packet
    return Decision(forward=not peer_has)


def cnr_decide(x: DecisionInput) -> Decision:
    return Decision(forward=not x.peer_has_packet and x.u_u > x.u_v + x.u_th)


def abs_threshold_decide(x: DecisionInput) -> Decision:
    return Decision(forward=not x.peer_has_packet and x.u_u > x.u_th)


def df_decide(x: DecisionInput) -> Decision:
    # a peer that already carries the packet is skipped, as in the cluster-gated variant
    if not x.peer_has_packet and x.u_u > _tau(x):
        return Decision(forward=True, tau=x.u_u)
    return NO_OP


def coord_decide(x: DecisionInput) -> Decision:
    if x.peer_has_packet and x.peer_tau is not None and x.peer_tau > _tau(x):
        return Decision(tau=x.peer_tau)
    return df_decide(x)


def _trained(*ranks) -> bool:
    return all(r is not None for r in ranks)


def cbr_cnr_decide(x: DecisionInput) -> Decision:
    if x.r_v is None or x.r_u is None:
        return cnr_decide(x)
    if x.peer_has_packet:
        return NO_OP
    if x.r_u < x.r_v or (x.r_u == x.r_v and not x.rep):
        if x.u_u > x.u_v + x.u_th:
            return Decision(forward=True, rep=True)
    return NO_OP


def _cbr_delegation_gate(x: DecisionInput) -> Decision:
    if x.r_u < x.r_t or (x.r_u == x.r_t and x.r_v == x.r_t):
        if _tau(x) < x.u_u:
            return Decision(forward=True, tau=x.u_u)
    return NO_OP


def cbr_df_decide(x: DecisionInput) -> Decision:
    if x.r_v is None or x.r_u is None or x.r_t is None:
        return df_decide(x)
    if x.peer_has_packet:
        return NO_OP
    return _cbr_delegation_gate(x)


def cbr_coord_decide(x: DecisionInput) -> Decision:
    if x.r_v is None or x.r_u is None or x.r_t is None:
        return coord_decide(x)
    if x.peer_has_packet:
        if x.peer_tau is not None and _tau(x) < x.peer_tau:
            return Decision(tau=x.peer_tau)
        return NO_OP
    return _cbr_delegation_gate(x)


def _social_trained(x: DecisionInput) -> bool:
    return not (
        x.r_v_s is None or x.r_u_s is None or x.r_t_s is None
        or x.r_v_b is None or x.r_u_b is None or x.r_t_b is None
    )


def _on_betweenness(x: DecisionInput) -> DecisionInput:
    """Re-express the input as a single-utility problem over betweenness."""
    # built field by field: dataclasses.replace is too slow for the inner loop
    return DecisionInput(
        u_v=x.b_v,
        u_u=x.b_u,
        r_v=x.r_v_b,
        r_u=x.r_u_b,
        r_t=x.r_t_b,
        rep=x.rep,
        tau=x.tau_b,
        u_th=x.u_th,
        peer_has_packet=x.peer_has_packet,
        peer_tau=x.peer_tau_b,
    )


def _tau_from_betweenness(d: Decision) -> Decision:
    if d is NO_OP:
        return d
    return Decision(d.forward, d.rep, None, d.tau_s, d.tau, d.copies_left, d.give_copies)


def c2br_cnr_decide(x: DecisionInput) -> Decision:
    if not _social_trained(x):
        return cnr_decide(x)
    if x.peer_has_packet:
        return NO_OP
    if x.r_v_s != 1 or x.r_u_s == 1:
        return cbr_cnr_decide(_on_betweenness(x))
    return NO_OP


def _similarity_threshold(x: DecisionInput, d: Decision) -> Decision:
    tau_s = -math.inf if x.tau_s is None else x.tau_s
    if tau_s < x.s_u:
        return Decision(d.forward, d.rep, d.tau, x.s_u, d.tau_b, d.copies_left, d.give_copies)
    return d


def _c2br_gates(x: DecisionInput, sub: Callable[[DecisionInput], Decision]) -> Decision:
    if (x.r_t_s == x.r_v_s and x.r_t_s != 1) or (x.r_v_s == 1 and x.r_u_s == 1):
        d = _tau_from_betweenness(sub(_on_betweenness(x)))
    else:
        d = NO_OP
    return _similarity_threshold(x, d)


def c2br_df_decide(x: DecisionInput) -> Decision:
    if not _social_trained(x):
        return df_decide(x)
    if x.peer_has_packet:
        return NO_OP
    return _c2br_gates(x, cbr_df_decide)


def c2br_coord_decide(x: DecisionInput) -> Decision:
    if not _social_trained(x):
        return coord_decide(x)
    if x.peer_has_packet:
        tau_s = tau_b = None
        if x.peer_tau_s is not None and (x.tau_s is None or x.tau_s < x.peer_tau_s):
            tau_s = x.peer_tau_s
        if x.peer_tau_b is not None and (x.tau_b is None or x.tau_b < x.peer_tau_b):
            tau_b = x.peer_tau_b
        return Decision(tau_s=tau_s, tau_b=tau_b)
    return _c2br_gates(x, cbr_coord_decide)


def simbet_spray_decide(x: DecisionInput, copies_left: int | None = None, split: str = "proportional") -> Decision:
    """Utility-proportional (or binary) spraying; a single copy waits for the destination."""
    if copies_left is None:
        copies_left = x.copies_left
    if copies_left is None or copies_left < 1:
        raise ValueError("spray needs copies_left >= 1")
    if x.peer_has_packet or copies_left == 1 or not x.u_u > x.u_v:
        return NO_OP
    if split == "binary":
        give = copies_left // 2
    elif split == "proportional":
        give = math.ceil(copies_left * x.u_u / (x.u_u + x.u_v))
    else:
        raise ValueError(f"unknown spray split {split!r}")
    give = min(max(give, 1), copies_left - 1)
    return Decision(forward=True, copies_left=copies_left - give, give_copies=give)


STRATEGIES: dict[str, Callable[[DecisionInput], Decision]] = {
    "epidemic": epidemic_decide,
    "cnr": cnr_decide,
    "abs": abs_threshold_decide,
    "df": df_decide,
    "coord": coord_decide,
    "cbr-cnr": cbr_cnr_decide,
    "cbr-df": cbr_df_decide,
    "cbr-coord": cbr_coord_decide,
    "c2br-cnr": c2br_cnr_decide,
    "c2br-df": c2br_df_decide,
    "c2br-coord": c2br_coord_decide,
    "simbet-spray": simbet_spray_decide,
}

# strategies whose decision may change state when the peer already holds the packet;
# every other strategy returns NO_OP in that case
CARRIER_AWARE = frozenset({"coord", "cbr-coord", "c2br-coord"})
CLUSTER_STRATEGIES = frozenset({"cbr-cnr", "cbr-df", "cbr-coord"})
SOCIAL_STRATEGIES = frozenset({"c2br-cnr", "c2br-df", "c2br-coord", "simbet-spray"})
BASELINE_OF = {
    "cbr-cnr": "cnr",
    "cbr-df": "df",
    "cbr-coord": "coord",
    "c2br-cnr": "cnr",
    "c2br-df": "df",
    "c2br-coord": "coord",
}

"""Routes, the per-router RIB and best-path selection.

Three protocol variants share the machinery:

* ``BASELINE``  - plain BGP, one prepend per eBGP export.
* ``ASPREP``    - latency-proportional prepending: ``max(1, ceil(L/Q))`` copies on
  eBGP export and ``floor(L/Q)`` receiver-side copies on iBGP arrival.
* ``MINLATENCY`` - routes carry accumulated latency, which replaces AS path
  length in the comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .relationships import Rel
from .topology import Topology


class Protocol(str, Enum):
    BASELINE = "baseline"
    ASPREP = "asprep"
    MINLATENCY = "minlatency"


class LearnedVia(str, Enum):
    ORIGIN = "origin"
    EBGP = "ebgp"
    IBGP = "ibgp"


_VIA_RANK = {LearnedVia.ORIGIN: 0, LearnedVia.EBGP: 1, LearnedVia.IBGP: 2}

# ADD-PATH path identifiers. BEST carries a router's selected route; UP carries
# its best customer-learned route (only MinLatency advertises the latter).
PATH_BEST = 0
PATH_UP = 1


@dataclass(frozen=True)
class Route:
    prefix: str
    as_path: tuple[int, ...]
    local_pref: int
    learned_via: LearnedVia
    neighbor_rel: Rel
    next_hop: str
    advertiser: str
    acc_latency_ms: float = 0.0
    igp_cost_ms: float = 0.0
    path_id: int = PATH_BEST

    @property
    def first_asn(self) -> int:
        return self.as_path[0] if self.as_path else 0

    def to_dict(self) -> dict:
        return {
            "as_path": list(self.as_path),
            "local_pref": self.local_pref,
            "learned_via": self.learned_via.value,
            "neighbor_rel": self.neighbor_rel.value,
            "next_hop": self.next_hop,
            "advertiser": self.advertiser,
            "path_id": self.path_id,
            "acc_latency_ms": self.acc_latency_ms,
            "igp_cost_ms": self.igp_cost_ms,
        }


@dataclass(frozen=True)
class PrependPolicy:
    protocol: Protocol = Protocol.BASELINE
    q_ms: float | None = None

    def __post_init__(self):
        if self.protocol is Protocol.ASPREP:
            if self.q_ms is None or not self.q_ms > 0:
                raise ValueError("AsPrep needs a positive quantization factor")
        elif self.q_ms is not None:
            raise ValueError(f"quantization factor only applies to asprep, not {self.protocol.value}")

    @property
    def label(self) -> str:
        if self.protocol is Protocol.ASPREP:
            return f"asprep-{self.q_ms:g}"
        return self.protocol.value


def _quotient_bounds(latency_ms: float, q_ms: float) -> tuple[int, int]:
    """(floor, ceil) of latency/q; a quotient within float noise of an integer counts as that integer."""
    if not q_ms > 0:
        raise ValueError(f"quantization factor must be positive, got {q_ms}")
    if latency_ms < 0:
        raise ValueError(f"negative latency: {latency_ms}")
    x = latency_ms / q_ms
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, x):
        return nearest, nearest
    return math.floor(x), math.ceil(x)


def ebgp_prepend_count(latency_ms: float, q_ms: float) -> int:
    return max(1, _quotient_bounds(latency_ms, q_ms)[1])


def ibgp_prepend_count(latency_ms: float, q_ms: float) -> int:
    return _quotient_bounds(latency_ms, q_ms)[0]


def apply_ibgp_receive(route: Route, receiver, policy: PrependPolicy, topology: Topology) -> Route:
    """Attributes of ``route`` as seen by ``receiver`` after arriving over iBGP.

    ``receiver`` is a router id or node; latency is measured to the route's next hop.
    """
    rid = getattr(receiver, "id", receiver)
    asn = topology.routers[rid].asn
    latency = topology.latency(route.next_hop, rid)
    as_path = route.as_path
    acc = route.acc_latency_ms
    if policy.protocol is Protocol.ASPREP:
        as_path = (asn,) * ibgp_prepend_count(latency, policy.q_ms) + as_path
    elif policy.protocol is Protocol.MINLATENCY:
        acc += latency
    return replace(route, as_path=as_path, acc_latency_ms=acc, igp_cost_ms=latency,
                   learned_via=LearnedVia.IBGP)


def apply_ebgp_export(route: Route, sender, peer, policy: PrependPolicy, topology: Topology) -> Route:
    """The route ``sender`` puts on the wire toward eBGP neighbor ``peer``."""
    sid = getattr(sender, "id", sender)
    pid = getattr(peer, "id", peer)
    asn = topology.routers[sid].asn
    latency = topology.latency(sid, pid)
    count = 1
    acc = route.acc_latency_ms
    if policy.protocol is Protocol.ASPREP:
        count = ebgp_prepend_count(latency, policy.q_ms)
    elif policy.protocol is Protocol.MINLATENCY:
        acc += latency
    # local_pref and neighbor_rel are not transitive; the receiver's import policy sets them
    return replace(route, as_path=(asn,) * count + route.as_path, next_hop=sid, advertiser=sid,
                   learned_via=LearnedVia.EBGP, igp_cost_ms=0.0, acc_latency_ms=acc,
                   local_pref=0, neighbor_rel=Rel.ORIGIN)


def route_rank(route: Route, protocol: Protocol) -> tuple:
    """Sort key: the smaller key is the better route.

    The trailing fields only make the order total on distinct routes; routes
    held in one RIB already differ in (advertiser, path_id).
    """
    tail = (route.as_path, route.next_hop, route.acc_latency_ms, route.igp_cost_ms,
            route.learned_via.value, route.neighbor_rel.value, route.prefix)
    if protocol is Protocol.MINLATENCY:
        return (-route.local_pref, route.acc_latency_ms, route.first_asn, route.advertiser,
                route.path_id, len(route.as_path), _VIA_RANK[route.learned_via]) + tail
    return (-route.local_pref, len(route.as_path), _VIA_RANK[route.learned_via],
            route.igp_cost_ms, route.first_asn, route.advertiser, route.path_id) + tail


def best_path_compare(a: Route, b: Route, protocol: Protocol) -> int:
    """-1 if ``a`` is preferred, 1 if ``b`` is, 0 only for identical routes."""
    ka, kb = route_rank(a, protocol), route_rank(b, protocol)
    return (ka > kb) - (ka < kb)


class RibOutcome(Enum):
    NO_CHANGE = 0
    ENTRY_CHANGED = 1
    BEST_CHANGED = 2


class Rib:
    """Multi-path route store keyed by (prefix, advertiser, path id)."""

    def __init__(self, protocol: Protocol):
        self.protocol = protocol
        self.entries: dict[str, dict[tuple[str, int], Route]] = {}
        self.best: dict[str, Route] = {}

    def routes(self, prefix: str) -> list[Route]:
        return list(self.entries.get(prefix, {}).values())

    def get(self, prefix: str) -> Route | None:
        return self.best.get(prefix)

    def best_up(self, prefix: str) -> Route | None:
        """Best route among those learned from customers or originated locally."""
        up = [r for r in self.entries.get(prefix, {}).values()
              if r.neighbor_rel in (Rel.CUSTOMER, Rel.ORIGIN)]
        return min(up, key=lambda r: route_rank(r, self.protocol)) if up else None

    def best_external(self, prefix: str, up_only: bool = False) -> Route | None:
        """Best route learned over eBGP or originated here (optionally customer/origin only)."""
        ext = [r for r in self.entries.get(prefix, {}).values()
               if r.learned_via is not LearnedVia.IBGP
               and (not up_only or r.neighbor_rel in (Rel.CUSTOMER, Rel.ORIGIN))]
        return min(ext, key=lambda r: route_rank(r, self.protocol)) if ext else None

    def _reselect(self, prefix: str) -> RibOutcome:
        table = self.entries.get(prefix)
        new = min(table.values(), key=lambda r: route_rank(r, self.protocol)) if table else None
        old = self.best.get(prefix)
        if new is None:
            self.best.pop(prefix, None)
            self.entries.pop(prefix, None)
        else:
            self.best[prefix] = new
        return RibOutcome.BEST_CHANGED if new != old else RibOutcome.ENTRY_CHANGED

    def withdraw(self, prefix: str, advertiser: str, path_id: int = PATH_BEST) -> RibOutcome:
        table = self.entries.get(prefix)
        if not table or (advertiser, path_id) not in table:
            return RibOutcome.NO_CHANGE
        del table[(advertiser, path_id)]
        return self._reselect(prefix)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Rib) and self.entries == other.entries and self.best == other.best


def rib_insert(rib: Rib, route: Route, protocol: Protocol | None = None) -> RibOutcome:
    if protocol is not None and protocol is not rib.protocol:
        raise ValueError("rib was built for a different protocol")
    table = rib.entries.setdefault(route.prefix, {})
    key = (route.advertiser, route.path_id)
    if table.get(key) == route:
        return RibOutcome.NO_CHANGE
    table[key] = route
    return rib._reselect(route.prefix)

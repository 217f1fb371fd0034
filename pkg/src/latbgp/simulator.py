"""Event-driven propagation of one prefix announcement to convergence.

Messages are processed from a single global FIFO queue. Border routers speak
eBGP to routers of other ASes and iBGP only to their AS's route reflector;
the reflector relays every change it receives to all other members, keeping
one path per advertiser (ADD-PATH).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

from .bgp import (
    PATH_BEST,
    PATH_UP,
    LearnedVia,
    PrependPolicy,
    Protocol,
    Rib,
    RibOutcome,
    Route,
    apply_ebgp_export,
    apply_ibgp_receive,
    rib_insert,
)
from .relationships import AsRelationshipDb, LocalPrefPolicy, Rel, export_allowed, local_pref
from .topology import GeoPoint, RouterKind, Topology, geodesic_km

log = logging.getLogger(__name__)

PREFIX = "P"
DEFAULT_MAX_MESSAGES = 10**7


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class OriginSpec:
    """Where the prefix is announced.

    Give either ``router_id`` or ``asn`` plus ``near``; the latter resolves to
    the geodesically nearest border router of that AS. ``anycast`` lists extra
    routers that originate the same prefix.
    """

    router_id: str | None = None
    asn: int | None = None
    near: GeoPoint | None = None
    anycast: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.router_id is None) == (self.asn is None):
            raise ValueError("origin needs exactly one of router_id or asn")
        if self.asn is not None and self.near is None:
            raise ValueError("origin by ASN needs a reference location")

    def to_dict(self) -> dict:
        d: dict = {}
        if self.router_id is not None:
            d["router_id"] = self.router_id
        else:
            d["asn"] = self.asn
            d["near"] = [self.near.lat, self.near.lon]
        if self.anycast:
            d["anycast"] = list(self.anycast)
        return d


@dataclass(frozen=True)
class SimulationConfig:
    policy: PrependPolicy
    pref_policy: LocalPrefPolicy
    origin: OriginSpec
    deploying_ases: frozenset[int] | None = None
    max_messages: int = DEFAULT_MAX_MESSAGES

    def __post_init__(self):
        if self.max_messages <= 0:
            raise ValueError("max_messages must be positive")
        if self.deploying_ases is not None and not isinstance(self.deploying_ases, frozenset):
            object.__setattr__(self, "deploying_ases", frozenset(self.deploying_ases))

    @property
    def label(self) -> str:
        label = self.policy.label
        if self.deploying_ases is not None and self.policy.protocol is Protocol.ASPREP:
            label += f"-partial{len(self.deploying_ases)}"
        return label

    def to_dict(self) -> dict:
        return {
            "protocol": self.policy.protocol.value,
            "q_ms": self.policy.q_ms,
            "pref_policy": {
                "mode": self.pref_policy.mode.value,
                "customer": self.pref_policy.customer_pref,
                "peer": self.pref_policy.peer_pref,
                "provider": self.pref_policy.provider_pref,
            },
            "origin": self.origin.to_dict(),
            "deploying_ases": None if self.deploying_ases is None else sorted(self.deploying_ases),
            "max_messages": self.max_messages,
        }


@dataclass(frozen=True)
class UpdateMessage:
    src: str
    dst: str
    channel: LearnedVia  # EBGP or IBGP
    advertiser: str
    path_id: int
    route: Route | None  # None withdraws (advertiser, path_id)


@dataclass
class MessageCounters:
    ibgp: int = 0
    ebgp: int = 0

    @property
    def total(self) -> int:
        return self.ibgp + self.ebgp

    def to_dict(self) -> dict:
        return {"ibgp": self.ibgp, "ebgp": self.ebgp, "total": self.total}


@dataclass
class SimulationResult:
    ribs: dict[str, Rib]
    counters: MessageCounters
    config: SimulationConfig
    converged: bool
    origins: tuple[str, ...]
    unreachable: frozenset[str]
    unknown_relations: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    processed: int = 0

    def best(self, rid: str) -> Route | None:
        rib = self.ribs.get(rid)
        return rib.get(PREFIX) if rib else None

    def table(self, rid: str, path_id: int) -> Route | None:
        """Route a router forwards with when traffic arrived on a session using ``path_id``."""
        rib = self.ribs.get(rid)
        if rib is None:
            return None
        if path_id == PATH_UP:
            return rib.best_up(PREFIX)
        return rib.get(PREFIX)


def resolve_origin(spec: OriginSpec, topology: Topology) -> str:
    if spec.router_id is not None:
        node = topology.routers.get(spec.router_id)
        if node is None or node.kind is not RouterKind.BORDER:
            raise SimulationError(f"origin router {spec.router_id!r} is not a border router of the topology")
        return spec.router_id
    members = topology.members(spec.asn)
    if not members:
        raise SimulationError(f"origin AS{spec.asn} is not present in the topology")
    return min(members, key=lambda rid: (geodesic_km(topology.routers[rid].geo, spec.near), rid))


def deployment_filter(sender_as: int, config: SimulationConfig) -> PrependPolicy:
    """Prepend policy actually applied by ``sender_as`` under partial deployment."""
    policy = config.policy
    if policy.protocol is not Protocol.ASPREP or config.deploying_ases is None:
        return policy
    if sender_as in config.deploying_ases:
        return policy
    return PrependPolicy(Protocol.BASELINE)


class _Run:
    def __init__(self, topology: Topology, rel_db: AsRelationshipDb, config: SimulationConfig):
        self.topo = topology
        self.rel_db = rel_db
        self.config = config
        self.protocol = config.policy.protocol
        self.queue: deque[UpdateMessage] = deque()
        self.counters = MessageCounters()
        self.ribs: dict[str, Rib] = {rid: Rib(self.protocol) for rid in topology.routers}
        self.unknown: set[tuple[int, int]] = set()
        # per border router and outbound session: (source route, wire route) last sent
        self.adj_out: dict[str, dict[tuple[str, int], tuple]] = {rid: {} for rid in topology.routers}
        self.asn = {rid: r.asn for rid, r in topology.routers.items()}
        self.is_reflector = {rid: r.kind is RouterKind.REFLECTOR for rid, r in topology.routers.items()}
        self._policy_cache: dict[int, PrependPolicy] = {}
        self._ebgp = {rid: [(nbr, self._role(rid, nbr)) for nbr, _ in topology.ebgp_neighbors(rid)]
                      for rid in topology.routers}

    def _role(self, me: str, nbr: str) -> Rel:
        a, b = self.asn[me], self.asn[nbr]
        role = self.rel_db.role(a, b)
        if role is None:
            self.unknown.add((min(a, b), max(a, b)))
            return Rel.PEER
        return role

    def policy_for(self, asn: int) -> PrependPolicy:
        p = self._policy_cache.get(asn)
        if p is None:
            p = self._policy_cache[asn] = deployment_filter(asn, self.config)
        return p

    def send(self, msg: UpdateMessage) -> None:
        if msg.channel is LearnedVia.EBGP:
            self.counters.ebgp += 1
        else:
            self.counters.ibgp += 1
        self.queue.append(msg)

    # -- outbound ---------------------------------------------------------

    def _sessions(self, rid: str) -> dict[tuple[str, int], tuple[Route | None, Route | None]]:
        """(source route, wire route) for every outbound session of border router ``rid``.

        The source is the RIB route a session is derived from; the session is
        refreshed whenever its source changes, even if the wire form does not.
        """
        rib = self.ribs[rid]
        best = rib.get(PREFIX)
        minlat = self.protocol is Protocol.MINLATENCY
        up = rib.best_up(PREFIX) if minlat else None
        out: dict[tuple[str, int], tuple[Route | None, Route | None]] = {}

        rr = self.topo.reflector(self.asn[rid])
        if rr is not None:
            ext = rib.best_external(PREFIX)
            out[(rr, PATH_BEST)] = (ext, ext)
            if minlat:
                up_ext = rib.best_external(PREFIX, up_only=True)
                up_ext = up_ext if up_ext != ext else None
                out[(rr, PATH_UP)] = (up_ext, up_ext)

        policy = self.policy_for(self.asn[rid])
        for nbr, role in self._ebgp[rid]:
            if role is Rel.CUSTOMER:
                pid, src, cand = PATH_BEST, best, best
            elif minlat:
                pid, src, cand = PATH_UP, up, up
            else:
                pid, src = PATH_BEST, best
                cand = best if best is not None and export_allowed(best.neighbor_rel, role) else None
            if cand is not None and self.asn[nbr] in cand.as_path:
                cand = None  # sender-side loop suppression
            if cand is not None:
                cand = replace(apply_ebgp_export(cand, rid, nbr, policy, self.topo), path_id=pid)
            out[(nbr, pid)] = (src, cand)
        return out

    def advertise(self, rid: str) -> None:
        state = self.adj_out[rid]
        for (dst, pid), (src, route) in self._sessions(rid).items():
            prev = state.get((dst, pid))
            if prev is not None and prev[0] == src:
                continue
            state[(dst, pid)] = (src, route)
            if route is None and (prev is None or prev[1] is None):
                continue  # nothing was announced, so nothing to withdraw
            if route is not None and self.is_reflector[dst]:
                # next-hop-self toward the reflector; the path id names our table
                route = replace(route, next_hop=rid, advertiser=rid, path_id=pid, igp_cost_ms=0.0)
            channel = LearnedVia.IBGP if self.is_reflector[dst] else LearnedVia.EBGP
            self.send(UpdateMessage(rid, dst, channel, rid, pid, route))

    # -- inbound ----------------------------------------------------------

    def deliver(self, msg: UpdateMessage) -> None:
        if self.is_reflector[msg.dst]:
            self._reflect(msg)
            return
        rib = self.ribs[msg.dst]
        route = msg.route
        if route is not None and msg.channel is LearnedVia.EBGP:
            if self.asn[msg.dst] in route.as_path:
                route = None
            else:
                role = self._role(msg.dst, msg.src)
                route = Route(route.prefix, route.as_path, local_pref(role, self.config.pref_policy),
                              LearnedVia.EBGP, role, route.next_hop, route.advertiser,
                              route.acc_latency_ms, 0.0, msg.path_id)
        elif route is not None:
            route = apply_ibgp_receive(route, msg.dst, self.policy_for(self.asn[msg.dst]), self.topo)
        if route is None:
            outcome = rib.withdraw(PREFIX, msg.advertiser, msg.path_id)
        else:
            outcome = rib_insert(rib, route)
        if outcome is not RibOutcome.NO_CHANGE:
            self.advertise(msg.dst)

    def _reflect(self, msg: UpdateMessage) -> None:
        rib = self.ribs[msg.dst]
        if msg.route is None:
            outcome = rib.withdraw(PREFIX, msg.advertiser, msg.path_id)
        else:
            outcome = rib_insert(rib, msg.route)
        if outcome is RibOutcome.NO_CHANGE:
            return
        for member in self.topo.members(self.asn[msg.dst]):
            if member != msg.advertiser:
                self.send(UpdateMessage(msg.dst, member, LearnedVia.IBGP, msg.advertiser,
                                        msg.path_id, msg.route))

    # -- driver -------------------------------------------------------------

    def run(self, origins: tuple[str, ...]) -> SimulationResult:
        pref = local_pref(Rel.ORIGIN, self.config.pref_policy)
        for o in origins:
            rib_insert(self.ribs[o], Route(PREFIX, (), pref, LearnedVia.ORIGIN, Rel.ORIGIN, o, o))
        for o in origins:
            self.advertise(o)

        processed = 0
        converged = True
        while self.queue:
            if processed >= self.config.max_messages:
                converged = False
                log.warning("stopped after %d messages without converging", processed)
                break
            self.deliver(self.queue.popleft())
            processed += 1

        unreachable = frozenset(
            rid for rid in self.topo.border_routers() if self.ribs[rid].get(PREFIX) is None
        )
        return SimulationResult(
            ribs=self.ribs,
            counters=self.counters,
            config=self.config,
            converged=converged,
            origins=origins,
            unreachable=unreachable,
            unknown_relations=frozenset(self.unknown),
            processed=processed,
        )


def origin_routers(config: SimulationConfig, topology: Topology) -> tuple[str, ...]:
    primary = resolve_origin(config.origin, topology)
    extra = [resolve_origin(OriginSpec(router_id=r), topology) for r in config.origin.anycast]
    origins = tuple(dict.fromkeys([primary, *extra]))
    if len({topology.routers[o].asn for o in origins}) != 1:
        raise SimulationError("anycast origins must belong to one AS")
    return origins


def run(topology: Topology, rel_db: AsRelationshipDb, config: SimulationConfig) -> SimulationResult:
    """Propagate the announcement until no update is left in flight."""
    origins = origin_routers(config, topology)
    return _Run(topology, rel_db, config).run(origins)


def run_many(topology: Topology, rel_db: AsRelationshipDb, configs: Iterable[SimulationConfig]):
    return [run(topology, rel_db, c) for c in configs]

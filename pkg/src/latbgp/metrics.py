"""Post-convergence analysis: forwarding paths, latency distributions and reference optima."""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx

from .bgp import LearnedVia
from .relationships import AsRelation, AsRelationshipDb, Rel, export_allowed
from .simulator import SimulationResult
from .topology import LinkKind, RouterKind, Topology


class ForwardingLoopError(Exception):
    pass


class MissingLinkError(Exception):
    pass


@dataclass(frozen=True)
class ForwardingPath:
    routers: tuple[str, ...]
    total_latency_ms: float


def forwarding_path(node: str, result: SimulationResult, topology: Topology) -> ForwardingPath:
    """Follow routing state hop by hop from ``node`` to an origin.

    Each hop uses the table named by the path id of the session the route came
    in on; with a single table per router this is simply every router's best.
    """
    route = result.best(node)
    if route is None:
        raise ValueError(f"router {node!r} has no route")
    path = [node]
    visited = {node}
    total = 0.0
    here = node
    while route.learned_via is not LearnedVia.ORIGIN:
        nxt = route.next_hop if route.learned_via is LearnedVia.IBGP else route.advertiser
        link = topology.link(here, nxt)
        if link is None or link.kind is LinkKind.REFLECTOR_CONTROL:
            raise MissingLinkError(f"no data-plane link {here!r} -> {nxt!r}")
        if nxt in visited:
            raise ForwardingLoopError(f"forwarding loop at {nxt!r}: {' -> '.join(path)}")
        total += link.latency_ms
        path.append(nxt)
        visited.add(nxt)
        here = nxt
        route = result.table(nxt, route.path_id)
        if route is None:
            raise ValueError(f"router {nxt!r} on the path from {node!r} has no route")
    return ForwardingPath(tuple(path), total)


@dataclass(frozen=True)
class PathAudit:
    valley_free: bool
    as_sequence: tuple[int, ...]
    indeterminate: bool = False


def path_audit(path: ForwardingPath | Sequence[str], rel_db: AsRelationshipDb, topology: Topology | None = None,
               *, asns: Sequence[int] | None = None) -> PathAudit:
    """Check the AS sequence of a path (source first) for the up* peer? down* shape.

    Pass either a forwarding path together with its topology, or a bare AS
    sequence via ``asns``. Unknown relations are evaluated as peering and mark
    the audit indeterminate.
    """
    if asns is None:
        routers = path.routers if isinstance(path, ForwardingPath) else path
        asns = [topology.routers[r].asn for r in routers]
    seq: list[int] = []
    for a in asns:
        if not seq or seq[-1] != a:
            seq.append(a)
    if len(set(seq)) != len(seq):
        return PathAudit(False, tuple(seq))

    indeterminate = False
    phase = "up"  # traffic climbs customer->provider, crosses at most one peer, then descends
    ok = True
    for a, b in zip(seq, seq[1:]):
        rel = rel_db.relation(a, b)
        if rel is None:
            indeterminate = True
            rel = AsRelation.PEER
        if rel is AsRelation.CUSTOMER_OF:
            if phase != "up":
                ok = False
        elif rel is AsRelation.PEER:
            if phase != "up":
                ok = False
            phase = "down"
        else:
            phase = "down"
    return PathAudit(ok, tuple(seq), indeterminate)


@dataclass
class OracleResult:
    latency: dict[str, float]
    witness: dict[str, tuple[str, ...]]

    def __getitem__(self, rid: str) -> float:
        return self.latency[rid]


_PHASES = (Rel.ORIGIN, Rel.CUSTOMER, Rel.PEER, Rel.PROVIDER)


def _origin_set(origin) -> tuple[str, ...]:
    return (origin,) if isinstance(origin, str) else tuple(origin)


def valley_free_dijkstra(topology: Topology, rel_db: AsRelationshipDb, origin) -> OracleResult:
    """Minimum latency from every border router to ``origin`` over valley-free paths.

    Search runs in the propagation direction over (router, phase) states, where
    the phase is how the announcement was learned at that router.
    """
    origins = _origin_set(origin)
    dist: dict[tuple[str, Rel], float] = {}
    pred: dict[tuple[str, Rel], tuple[str, Rel] | None] = {}
    heap: list[tuple[float, str, int, tuple[str, Rel] | None]] = []
    order = {p: i for i, p in enumerate(_PHASES)}
    for o in origins:
        heapq.heappush(heap, (0.0, o, 0, None))

    while heap:
        d, rid, pi, parent = heapq.heappop(heap)
        state = (rid, _PHASES[pi])
        if state in dist:
            continue
        dist[state] = d
        pred[state] = parent
        phase = _PHASES[pi]
        me = topology.routers[rid]
        for link in topology.adjacency[rid]:
            nbr = link.other(rid)
            if link.kind is LinkKind.INTRA_AS:
                nphase = phase
            elif link.kind is LinkKind.INTER_AS:
                them = topology.routers[nbr].asn
                export_to = rel_db.role_or_peer(me.asn, them)
                if not export_allowed(phase, export_to):
                    continue
                nphase = rel_db.role_or_peer(them, me.asn)
            else:
                continue
            if (nbr, nphase) not in dist:
                heapq.heappush(heap, (d + link.latency_ms, nbr, order[nphase], state))

    latency: dict[str, float] = {}
    witness: dict[str, tuple[str, ...]] = {}
    for rid in topology.border_routers():
        best = min(((dist[(rid, p)], order[p]) for p in _PHASES if (rid, p) in dist), default=None)
        if best is None:
            latency[rid] = math.inf
            continue
        latency[rid] = best[0]
        walk = []
        state = (rid, _PHASES[best[1]])
        while state is not None:
            walk.append(state[0])
            state = pred[state]
        witness[rid] = tuple(walk)
    return OracleResult(latency, witness)


def unconstrained_dijkstra(topology: Topology, origin) -> dict[str, float]:
    """Plain shortest-path latency over the data-plane links."""
    g = nx.Graph()
    g.add_nodes_from(topology.border_routers())
    for link in topology.links:
        if link.kind is not LinkKind.REFLECTOR_CONTROL:
            g.add_edge(link.a, link.b, weight=link.latency_ms)
    found = nx.multi_source_dijkstra_path_length(g, set(_origin_set(origin)), weight="weight")
    return {rid: found.get(rid, math.inf) for rid in g.nodes}


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile of a finite multiset."""
    if not values:
        raise ValueError("percentile of an empty sample")
    if not 0 <= p <= 100:
        raise ValueError(f"percentile out of range: {p}")
    ordered = sorted(values)
    rank = max(1, math.ceil(p / 100 * len(ordered)))
    return ordered[rank - 1]


def cdf_points(values: Iterable[float]) -> list[tuple[float, float]]:
    """(latency, fraction <= latency) at every distinct value."""
    ordered = sorted(values)
    n = len(ordered)
    points: list[tuple[float, float]] = []
    for i, v in enumerate(ordered, 1):
        if points and points[-1][0] == v:
            points[-1] = (v, i / n)
        else:
            points.append((v, i / n))
    return points


def downsample_cdf(points: list[tuple[float, float]], max_points: int) -> list[tuple[float, float]]:
    if len(points) <= max_points:
        return points
    step = (len(points) - 1) / (max_points - 1)
    idx = sorted({round(i * step) for i in range(max_points)})
    return [points[i] for i in idx]


DEFAULT_PERCENTILES = (50, 90, 99)


@dataclass
class LatencyReport:
    per_node: dict[str, float]
    unreachable: tuple[str, ...]
    percentiles: dict[float, float]
    cdf: list[tuple[float, float]]
    protocol: str
    q_label: str

    def to_summary(self) -> dict:
        return {
            "protocol": self.protocol,
            "q": self.q_label,
            "nodes": len(self.per_node),
            "unreachable": len(self.unreachable),
            "percentiles": {f"p{p:g}": v for p, v in self.percentiles.items()},
            "mean_ms": (sum(self.per_node.values()) / len(self.per_node)) if self.per_node else None,
        }

    def latency_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "latency_ms"])
        for rid, lat in self.per_node.items():
            w.writerow([rid, repr(lat)])
        return buf.getvalue()

    def cdf_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["latency_ms", "cumulative_fraction"])
        for lat, frac in self.cdf:
            w.writerow([repr(lat), repr(frac)])
        return buf.getvalue()


def node_latencies(result: SimulationResult, topology: Topology) -> dict[str, float]:
    out = {}
    for rid in topology.border_routers():
        if result.best(rid) is not None:
            out[rid] = forwarding_path(rid, result, topology).total_latency_ms
    return out


def latency_report(result: SimulationResult, topology: Topology,
                   percentiles: Sequence[float] = DEFAULT_PERCENTILES,
                   max_cdf_points: int | None = None) -> LatencyReport:
    per_node = node_latencies(result, topology)
    values = list(per_node.values())
    pct = {p: percentile(values, p) for p in percentiles} if values else {}
    cdf = cdf_points(values)
    if max_cdf_points:
        cdf = downsample_cdf(cdf, max_cdf_points)
    policy = result.config.policy
    return LatencyReport(
        per_node=per_node,
        unreachable=tuple(sorted(result.unreachable)),
        percentiles=pct,
        cdf=cdf,
        protocol=policy.protocol.value,
        q_label="" if policy.q_ms is None else f"{policy.q_ms:g}",
    )


def result_document(result: SimulationResult, topology: Topology,
                    latencies: dict[str, float] | None = None) -> dict:
    """JSON-shaped summary of a run: config echo, counters and per-router best routes."""
    if latencies is None:
        latencies = node_latencies(result, topology)
    routers = {}
    for rid, node in topology.routers.items():
        if node.kind is not RouterKind.BORDER:
            continue
        best = result.best(rid)
        if best is None:
            routers[rid] = None
            continue
        routers[rid] = {
            "as_path": list(best.as_path),
            "next_hop": best.next_hop,
            "learned_via": best.learned_via.value,
            "latency_ms": latencies.get(rid),
        }
    return {
        "config": result.config.to_dict(),
        "origins": list(result.origins),
        "converged": result.converged,
        "counters": result.counters.to_dict(),
        "unreachable": sorted(result.unreachable),
        "unknown_relations": [list(p) for p in sorted(result.unknown_relations)],
        "routers": routers,
    }


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


__all__ = [
    "ForwardingPath",
    "LatencyReport",
    "OracleResult",
    "PathAudit",
    "cdf_points",
    "forwarding_path",
    "latency_report",
    "path_audit",
    "percentile",
    "result_document",
    "unconstrained_dijkstra",
    "valley_free_dijkstra",
]

"""Small topology builders and independent reference implementations for tests."""

from __future__ import annotations

import math
import random
from fractions import Fraction

from latbgp.bgp import PATH_BEST, PATH_UP, LearnedVia, Route
from latbgp.relationships import AsRelation, AsRelationshipDb, Rel, export_allowed
from latbgp.topology import EARTH_RADIUS_KM, GeoPoint, RawRouter, RawTopology, Topology, refine


def equator(km: float) -> GeoPoint:
    """Point on the equator ``km`` east of (0, 0)."""
    return GeoPoint(0.0, math.degrees(km / EARTH_RADIUS_KM))


def build(routers: dict[str, tuple[int, GeoPoint]], links) -> Topology:
    raw = RawTopology({rid: RawRouter(rid, asn, geo) for rid, (asn, geo) in routers.items()},
                      {(a, b) if a < b else (b, a) for a, b in links})
    topology, _ = refine(raw)
    return topology


def rels(*triples) -> AsRelationshipDb:
    """rels((1, 2, "p2c"), (2, 3, "p2p")) with p2c meaning the first is provider of the second."""
    table = {"p2c": AsRelation.PROVIDER_OF, "p2p": AsRelation.PEER}
    return AsRelationshipDb({(a, b): table[kind] for a, b, kind in triples})


def vector_geodesic_km(p: GeoPoint, q: GeoPoint) -> float:
    """Great-circle distance from unit vectors (atan2 of cross and dot), not haversine."""
    def vec(g):
        a, b = math.radians(g.lat), math.radians(g.lon)
        return (math.cos(a) * math.cos(b), math.cos(a) * math.sin(b), math.sin(a))

    u, v = vec(p), vec(q)
    cross = (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])
    dot = sum(a * b for a, b in zip(u, v))
    return math.atan2(math.sqrt(sum(c * c for c in cross)), dot) * EARTH_RADIUS_KM


def exact_counts(latency: str, q: str) -> tuple[int, int]:
    """(max(1, ceil), floor) of latency/q from decimal strings, in rational arithmetic."""
    x = Fraction(latency) / Fraction(q)
    floor = x.numerator // x.denominator
    ceil = -((-x.numerator) // x.denominator)
    return max(1, ceil), floor


def nearest_rank(values, p: float) -> float:
    """Smallest sample value whose cumulative count reaches p percent of the sample."""
    need = max(1, math.ceil(Fraction(p) * len(values) / 100))
    for v in sorted(set(values)):
        if sum(1 for x in values if x <= v) >= need:
            return v
    raise AssertionError("unreachable")


def brute_force_valley_free(topology: Topology, rel_db: AsRelationshipDb, origin: str) -> dict[str, float]:
    """Minimum latency over every simple router path that BGP could realize.

    Paths are enumerated outward from the origin; an AS may not be re-entered,
    and each inter-AS step must satisfy the export rule for the role the route
    was learned with. Exponential, so only for tiny topologies.
    """
    best: dict[str, float] = {r: math.inf for r in topology.border_routers()}

    def role(me, them):
        return rel_db.role(me, them) or Rel.PEER

    def walk(here: str, learned: Rel, dist: float, seen_routers: set, seen_ases: list):
        best[here] = min(best[here], dist)
        me = topology.routers[here].asn
        for link in topology.adjacency[here]:
            nxt = link.other(here)
            if nxt in seen_routers or topology.routers[nxt].kind.value != "border":
                continue
            them = topology.routers[nxt].asn
            if them == me:
                walk(nxt, learned, dist + link.latency_ms, seen_routers | {nxt}, seen_ases)
            elif them not in seen_ases:
                if export_allowed(learned, role(me, them)):
                    walk(nxt, role(them, me), dist + link.latency_ms, seen_routers | {nxt}, seen_ases + [them])

    walk(origin, Rel.ORIGIN, 0.0, {origin}, [topology.routers[origin].asn])
    return best


def random_small_topology(seed: int, max_ases: int = 5, max_routers: int = 3):
    """Tiny random topology with a random provider DAG plus peerings; may be disconnected."""
    rng = random.Random(seed)
    n = rng.randint(2, max_ases)
    asns = list(range(1, n + 1))
    triples = []
    for i, a in enumerate(asns):
        for b in asns[i + 1:]:
            kind = rng.choice(("p2c", "p2c", "p2p", None))
            if kind:
                triples.append((a, b, kind))  # lower ASN is always the provider: acyclic
    routers = {}
    members = {}
    for a in asns:
        members[a] = [f"a{a}r{j}" for j in range(rng.randint(1, max_routers))]
        for rid in members[a]:
            routers[rid] = (a, GeoPoint(round(rng.uniform(-60, 60), 3), round(rng.uniform(-170, 170), 3)))
    links = []
    for a, b, _ in triples:
        for _ in range(rng.randint(1, 2)):
            links.append((rng.choice(members[a]), rng.choice(members[b])))
    return build(routers, links), rels(*triples)


def random_route(rng: random.Random) -> Route:
    """Routes from small attribute domains, so ties at every level are common."""
    return Route(
        prefix="P",
        as_path=tuple(rng.choice((1, 2, 3)) for _ in range(rng.randint(0, 3))),
        local_pref=rng.choice((50, 100, 200)),
        learned_via=rng.choice(list(LearnedVia)),
        neighbor_rel=rng.choice(list(Rel)),
        next_hop=rng.choice(("a", "b")),
        advertiser=rng.choice(("a", "b", "c")),
        acc_latency_ms=rng.choice((0.0, 1.5, 3.0)),
        igp_cost_ms=rng.choice((0.0, 2.0)),
        path_id=rng.choice((PATH_BEST, PATH_UP)),
    )

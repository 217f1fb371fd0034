"""Seeded random topologies with a planted Gao-Rexford hierarchy."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import networkx as nx

from .relationships import AsRelation, AsRelationshipDb
from .topology import GeoPoint, RawRouter, RawTopology, Topology, geodesic_km, refine

GEO_MODELS = ("tiered", "uniform")

# spread of an AS's routers around its home, by tier (km); tier 0 spans the globe
_TIER_SPREAD_KM = (None, 3000.0, 600.0)


@dataclass
class SynthTopology:
    topology: Topology
    rel_db: AsRelationshipDb
    tiers: dict[int, int]
    attempts: int


def _uniform_point(rng: random.Random) -> GeoPoint:
    lat = math.degrees(math.asin(rng.uniform(-1.0, 1.0)))
    return GeoPoint(round(lat, 6), round(rng.uniform(-180.0, 180.0), 6))


def _offset(rng: random.Random, center: GeoPoint, spread_km: float) -> GeoPoint:
    """Point displaced from ``center`` by a random bearing and distance <= spread."""
    d = rng.uniform(0.05, 1.0) * spread_km / 6371.0088
    theta = rng.uniform(0.0, 2 * math.pi)
    phi1, lmb1 = math.radians(center.lat), math.radians(center.lon)
    phi2 = math.asin(math.sin(phi1) * math.cos(d) + math.cos(phi1) * math.sin(d) * math.cos(theta))
    lmb2 = lmb1 + math.atan2(math.sin(theta) * math.sin(d) * math.cos(phi1),
                             math.cos(d) - math.sin(phi1) * math.sin(phi2))
    lon = (math.degrees(lmb2) + 540.0) % 360.0 - 180.0
    return GeoPoint(round(math.degrees(phi2), 6), round(lon, 6))


def _hierarchy(rng: random.Random, n: int) -> tuple[dict[int, int], AsRelationshipDb]:
    asns = list(range(1, n + 1))
    n_t1 = max(2, min(5, n // 8))
    n_t2 = max(1, (n - n_t1) // 3)
    tiers = {a: 0 if i < n_t1 else 1 if i < n_t1 + n_t2 else 2 for i, a in enumerate(asns)}
    rels: dict[tuple[int, int], AsRelation] = {}
    providers: dict[int, set[int]] = {a: set() for a in asns}

    for i, a in enumerate(asns[:n_t1]):
        for b in asns[i + 1:n_t1]:
            rels[(a, b)] = AsRelation.PEER
    for a in asns[n_t1:]:
        above = [b for b in asns if tiers[b] < tiers[a]]
        for p in rng.sample(above, min(len(above), rng.choice((1, 2, 2)))):
            rels[(p, a)] = AsRelation.PROVIDER_OF
            providers[a].add(p)

    def ancestors(a: int) -> set[int]:
        seen, stack = set(), list(providers[a])
        while stack:
            p = stack.pop()
            if p not in seen:
                seen.add(p)
                stack.extend(providers[p])
        return seen

    anc = {a: ancestors(a) for a in asns}
    lower = asns[n_t1:]
    for _ in range(max(1, len(lower) // 3) if len(lower) >= 2 else 0):
        a, b = rng.sample(lower, 2)
        if (a, b) in rels or (b, a) in rels or a in anc[b] or b in anc[a]:
            continue
        rels[(min(a, b), max(a, b))] = AsRelation.PEER
    return tiers, AsRelationshipDb(rels)


def generate(n_ases: int, routers_per_as: int, seed: int, geo_model: str = "tiered",
             max_interconnects: int = 3, max_attempts: int = 20) -> SynthTopology:
    """Build a connected random topology; retried with derived seeds until connected."""
    if n_ases < 2:
        raise ValueError("need at least 2 ASes")
    if routers_per_as < 1:
        raise ValueError("need at least one router per AS")
    if geo_model not in GEO_MODELS:
        raise ValueError(f"unknown geo model {geo_model!r}; choose from {GEO_MODELS}")
    for attempt in range(1, max_attempts + 1):
        rng = random.Random(f"{seed}:{attempt}")
        synth = _attempt(rng, n_ases, routers_per_as, geo_model, max_interconnects)
        if synth is not None:
            synth.attempts = attempt
            return synth
    raise RuntimeError(f"no connected topology after {max_attempts} attempts")


def _attempt(rng: random.Random, n: int, k: int, geo_model: str, max_interconnects: int) -> SynthTopology | None:
    tiers, db = _hierarchy(rng, n)
    routers: dict[str, RawRouter] = {}
    by_as: dict[int, list[str]] = {}
    for asn in sorted(tiers):
        home = _uniform_point(rng)
        spread = _TIER_SPREAD_KM[tiers[asn]]
        count = k if tiers[asn] < 2 else max(1, min(k, rng.randint(1, k)))
        ids = []
        for j in range(count):
            if geo_model == "uniform" or spread is None:
                geo = _uniform_point(rng)
            else:
                geo = _offset(rng, home, spread)
            rid = f"as{asn}r{j}"
            routers[rid] = RawRouter(rid, asn, geo)
            ids.append(rid)
        by_as[asn] = ids

    links: set[tuple[str, str]] = set()
    for a, b, _ in db.pairs():
        # interconnect at several geographically close router pairs, no router reused
        cand = sorted(
            (geodesic_km(routers[x].geo, routers[y].geo), x, y) for x in by_as[a] for y in by_as[b]
        )
        want = rng.randint(1, max(1, min(len(by_as[a]), len(by_as[b]), max_interconnects)))
        used: set[str] = set()
        for _, x, y in cand:
            if x in used or y in used:
                continue
            links.add((x, y) if x < y else (y, x))
            used.update((x, y))
            if len(used) >= 2 * want:
                break

    topology, _ = refine(RawTopology(routers, links))
    g = nx.Graph()
    g.add_nodes_from(routers)
    g.add_edges_from(links)
    for ids in by_as.values():
        g.add_edges_from(zip(ids, ids[1:]))
    if not nx.is_connected(g):
        return None
    return SynthTopology(topology, db, tiers, 0)


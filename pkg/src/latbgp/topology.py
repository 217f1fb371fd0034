"""Router-level topology: ITDK ingestion, refinement and the canonical document format.

A refined topology holds border routers (with real coordinates), one route
reflector per AS, inter-AS links kept from the measured data, a synthesized
full mesh of intra-AS links, and zero-latency control links from every border
router to its reflector.
"""

from __future__ import annotations

import bz2
import gzip
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator

import jsonschema

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
# 0.5 ms one-way per 100 km of fiber
KM_PER_MS = 200.0

FORMAT_TAG = "latbgp-topology/1"


class TopologyError(Exception):
    """Raised for unreadable input or a topology that violates its invariants."""


class EmptyTopologyError(TopologyError):
    """Nothing survived parsing or filtering."""


class SchemaError(TopologyError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


class RouterKind(str, Enum):
    BORDER = "border"
    REFLECTOR = "reflector"


class LinkKind(str, Enum):
    INTER_AS = "inter_as"
    INTRA_AS = "intra_as"
    REFLECTOR_CONTROL = "reflector_control"


@dataclass(frozen=True)
class RouterNode:
    id: str
    asn: int
    geo: GeoPoint
    kind: RouterKind = RouterKind.BORDER


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    latency_ms: float
    kind: LinkKind

    @property
    def key(self) -> tuple[str, str]:
        return pair_key(self.a, self.b)

    def other(self, rid: str) -> str:
        return self.b if rid == self.a else self.a


def pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


def reflector_id(asn: int) -> str:
    return f"rr:{asn}"


def geodesic_km(p: GeoPoint, q: GeoPoint) -> float:
    """Great-circle distance by the haversine formula."""
    if p == q:
        return 0.0
    phi1, phi2 = math.radians(p.lat), math.radians(q.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(q.lon - p.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def link_latency_ms(distance_km: float) -> float:
    """One-way propagation latency for a fiber run of ``distance_km``."""
    if distance_km < 0:
        raise ValueError(f"negative distance: {distance_km}")
    return distance_km / KM_PER_MS


class Topology:
    """Immutable router graph with an adjacency index.

    Construction validates every structural invariant; build instances through
    :func:`refine` or :func:`load_canonical` rather than by hand.
    """

    def __init__(self, routers: Iterable[RouterNode], links: Iterable[Link]):
        self.routers: dict[str, RouterNode] = {}
        for r in sorted(routers, key=lambda r: r.id):
            if r.id in self.routers:
                raise TopologyError(f"duplicate router id {r.id!r}")
            self.routers[r.id] = r

        self._links: dict[tuple[str, str], Link] = {}
        adjacency: dict[str, list[Link]] = {rid: [] for rid in self.routers}
        for link in sorted(links, key=lambda l: l.key):
            self._check_link(link)
            if link.key in self._links:
                raise TopologyError(f"duplicate link {link.key}")
            self._links[link.key] = link
            adjacency[link.a].append(link)
            adjacency[link.b].append(link)
        for rid in adjacency:
            adjacency[rid].sort(key=lambda l: l.other(rid))
        self.adjacency: dict[str, tuple[Link, ...]] = {k: tuple(v) for k, v in adjacency.items()}

        members: dict[int, list[str]] = defaultdict(list)
        self._reflectors: dict[int, str] = {}
        for r in self.routers.values():
            if r.kind is RouterKind.REFLECTOR:
                if r.asn in self._reflectors:
                    raise TopologyError(f"AS{r.asn} has more than one reflector")
                self._reflectors[r.asn] = r.id
            else:
                members[r.asn].append(r.id)
        self._members = {asn: tuple(ids) for asn, ids in sorted(members.items())}

    def _check_link(self, link: Link) -> None:
        if link.a == link.b:
            raise TopologyError(f"self-loop on {link.a!r}")
        for end in (link.a, link.b):
            if end not in self.routers:
                raise TopologyError(f"link {link.key} references unknown router {end!r}")
        if not (link.latency_ms >= 0 and math.isfinite(link.latency_ms)):
            raise TopologyError(f"link {link.key} has invalid latency {link.latency_ms}")
        ra, rb = self.routers[link.a], self.routers[link.b]
        if link.kind is LinkKind.INTER_AS:
            ok = ra.asn != rb.asn and ra.kind is rb.kind is RouterKind.BORDER
        elif link.kind is LinkKind.INTRA_AS:
            ok = ra.asn == rb.asn and ra.kind is rb.kind is RouterKind.BORDER
        else:
            ok = ra.asn == rb.asn and {ra.kind, rb.kind} == {RouterKind.BORDER, RouterKind.REFLECTOR}
            if link.latency_ms != 0:
                raise TopologyError(f"reflector control link {link.key} must have latency 0")
        if not ok:
            raise TopologyError(f"link {link.key} of kind {link.kind.value} joins incompatible routers")

    @property
    def links(self) -> list[Link]:
        return list(self._links.values())

    def link(self, a: str, b: str) -> Link | None:
        return self._links.get(pair_key(a, b))

    def latency(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        link = self._links.get(pair_key(a, b))
        if link is None:
            raise TopologyError(f"no link between {a!r} and {b!r}")
        return link.latency_ms

    @property
    def asns(self) -> tuple[int, ...]:
        return tuple(self._members)

    def members(self, asn: int) -> tuple[str, ...]:
        """Border routers of ``asn`` in ascending id order."""
        return self._members.get(asn, ())

    def reflector(self, asn: int) -> str | None:
        return self._reflectors.get(asn)

    def border_routers(self) -> list[str]:
        return [rid for rid, r in self.routers.items() if r.kind is RouterKind.BORDER]

    def ebgp_neighbors(self, rid: str) -> list[tuple[str, Link]]:
        return [(l.other(rid), l) for l in self.adjacency[rid] if l.kind is LinkKind.INTER_AS]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Topology):
            return NotImplemented
        return self.routers == other.routers and self._links == other._links

    def __repr__(self) -> str:
        return f"Topology({len(self.routers)} routers, {len(self._links)} links, {len(self._members)} ASes)"


# --------------------------------------------------------------------------
# ITDK ingestion


@dataclass
class RawRouter:
    id: str
    asn: int | None = None
    geo: GeoPoint | None = None
    asn_conflict: bool = False

    @property
    def geo_missing(self) -> bool:
        return self.geo is None


@dataclass
class IngestStats:
    nodes: int = 0
    links: int = 0
    duplicate_links: int = 0
    self_links: int = 0
    unknown_node_refs: int = 0
    asn_conflicts: int = 0
    malformed: dict[str, int] = field(default_factory=lambda: defaultdict(int))


@dataclass
class RawTopology:
    routers: dict[str, RawRouter]
    links: set[tuple[str, str]]
    stats: IngestStats = field(default_factory=IngestStats)


def _open_text(path: Path):
    path = Path(path)
    if not path.is_file():
        raise TopologyError(f"missing file: {path}")
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8", errors="replace")
    if path.suffix == ".bz2":
        return bz2.open(path, "rt", encoding="utf-8", errors="replace")
    return open(path, encoding="utf-8", errors="replace")


def _lines(path: Path) -> Iterator[tuple[int, str]]:
    try:
        with _open_text(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if line.strip() and not line.lstrip().startswith("#"):
                    yield lineno, line
    except OSError as exc:
        raise TopologyError(f"unreadable file {path}: {exc}") from exc


def _node_id(token: str) -> str | None:
    token = token.rstrip(":").split(":", 1)[0]
    if len(token) > 1 and token[0] == "N" and token[1:].isdigit():
        return token
    return None


def _parse_geo_fields(rest: str) -> GeoPoint | None:
    # tab-separated: continent country region city lat lon ...
    fields = rest.strip("\n").lstrip("\t ").split("\t")
    if len(fields) >= 6:
        try:
            return GeoPoint(float(fields[4]), float(fields[5]))
        except ValueError:
            pass
    tokens = rest.split()
    for i in range(len(tokens) - 1):
        a, b = tokens[i], tokens[i + 1]
        if "." not in a and "." not in b:
            continue
        try:
            return GeoPoint(float(a), float(b))
        except ValueError:
            continue
    return None


def ingest_itdk(nodes_file, geo_file, as_file, links_file) -> RawTopology:
    """Read the four ITDK text files into an unfiltered :class:`RawTopology`.

    Malformed lines are tallied per file and skipped.
    """
    stats = IngestStats()
    routers: dict[str, RawRouter] = {}

    for lineno, line in _lines(nodes_file):
        parts = line.split()
        rid = _node_id(parts[1]) if len(parts) >= 2 and parts[0] == "node" else None
        if rid is None:
            stats.malformed["nodes"] += 1
            log.debug("nodes:%d malformed: %r", lineno, line)
            continue
        routers.setdefault(rid, RawRouter(rid))
    stats.nodes = len(routers)
    if not routers:
        raise EmptyTopologyError(f"no parseable nodes in {nodes_file}")

    for lineno, line in _lines(geo_file):
        head, _, rest = line.partition(":")
        parts = head.split()
        rid = _node_id(parts[1]) if len(parts) == 2 and parts[0] == "node.geo" else None
        geo = _parse_geo_fields(rest) if rid else None
        if geo is None:
            stats.malformed["geo"] += 1
            continue
        if rid not in routers:
            stats.unknown_node_refs += 1
            continue
        routers[rid].geo = geo

    for lineno, line in _lines(as_file):
        parts = line.split()
        rid = _node_id(parts[1]) if len(parts) >= 3 and parts[0] == "node.AS" else None
        try:
            asn = int(parts[2]) if rid else 0
        except ValueError:
            asn = 0
        if rid is None or asn <= 0:
            stats.malformed["as"] += 1
            continue
        router = routers.get(rid)
        if router is None:
            stats.unknown_node_refs += 1
            continue
        if router.asn is not None and router.asn != asn and not router.asn_conflict:
            router.asn_conflict = True
            stats.asn_conflicts += 1
        elif router.asn is None:
            router.asn = asn

    links: set[tuple[str, str]] = set()
    for lineno, line in _lines(links_file):
        head, _, rest = line.partition(":")
        hparts = head.split()
        if len(hparts) != 2 or hparts[0] != "link":
            stats.malformed["links"] += 1
            continue
        ends = [_node_id(tok) for tok in rest.split()]
        ends = [e for e in ends if e is not None]
        if len(ends) < 2:
            stats.malformed["links"] += 1
            continue
        # a multi-node link is a shared segment: connect every pair on it
        for a, b in combinations(dict.fromkeys(ends), 2):
            if a not in routers or b not in routers:
                stats.unknown_node_refs += 1
                continue
            key = pair_key(a, b)
            if key in links:
                stats.duplicate_links += 1
            else:
                links.add(key)
        if len(set(ends)) < len(ends):
            stats.self_links += 1
    stats.links = len(links)
    if stats.malformed:
        log.warning("skipped malformed lines: %s", dict(stats.malformed))
    return RawTopology(routers, links, stats)


# --------------------------------------------------------------------------
# refinement


@dataclass
class RefineReport:
    routers_in: int
    routers_kept: int
    dropped_no_geo: int
    dropped_no_asn: int
    dropped_asn_conflict: int
    links_in: int
    links_kept: int
    links_dropped: int
    links_superseded: int
    intra_links_synthesized: int
    control_links_synthesized: int
    ases: int

    @property
    def routers_dropped(self) -> int:
        return self.routers_in - self.routers_kept

    @property
    def retained_fraction(self) -> float:
        return self.routers_kept / self.routers_in if self.routers_in else 0.0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["routers_dropped"] = self.routers_dropped
        d["retained_fraction"] = self.retained_fraction
        return d

    def summary(self) -> str:
        return "\n".join([
            f"routers: {self.routers_kept}/{self.routers_in} kept "
            f"({self.retained_fraction:.1%}); dropped {self.dropped_no_geo} without geolocation, "
            f"{self.dropped_no_asn} without ASN, {self.dropped_asn_conflict} with conflicting ASN",
            f"inter-AS links: {self.links_kept} kept, {self.links_dropped} dropped, "
            f"{self.links_superseded} same-AS links replaced by mesh",
            f"synthesized: {self.intra_links_synthesized} intra-AS mesh links, "
            f"{self.control_links_synthesized} reflector links over {self.ases} ASes",
        ])


def _centroid(points: list[GeoPoint]) -> GeoPoint:
    x = y = z = 0.0
    for p in points:
        phi, lmb = math.radians(p.lat), math.radians(p.lon)
        x += math.cos(phi) * math.cos(lmb)
        y += math.cos(phi) * math.sin(lmb)
        z += math.sin(phi)
    norm = math.sqrt(x * x + y * y + z * z)
    if norm < 1e-12:
        return points[0]
    lat = math.degrees(math.asin(max(-1.0, min(1.0, z / norm))))
    lon = math.degrees(math.atan2(y, x))
    return GeoPoint(round(lat, 6), round(lon, 6))


def refine(raw: RawTopology) -> tuple[Topology, RefineReport]:
    """Filter, mesh and attach reflectors; see the module docstring."""
    if not raw.routers:
        raise EmptyTopologyError("raw topology has no routers")

    no_geo = no_asn = conflict = 0
    kept: dict[str, RouterNode] = {}
    for rid in sorted(raw.routers):
        r = raw.routers[rid]
        if r.asn_conflict:
            conflict += 1
        elif r.geo is None:
            no_geo += 1
        elif r.asn is None:
            no_asn += 1
        else:
            kept[rid] = RouterNode(rid, r.asn, r.geo, RouterKind.BORDER)
    if not kept:
        raise EmptyTopologyError("no router has both a geolocation and an ASN")

    links: list[Link] = []
    dropped = superseded = 0
    for a, b in sorted(raw.links):
        if a not in kept or b not in kept:
            dropped += 1
        elif kept[a].asn == kept[b].asn:
            superseded += 1
        else:
            lat = link_latency_ms(geodesic_km(kept[a].geo, kept[b].geo))
            links.append(Link(*pair_key(a, b), lat, LinkKind.INTER_AS))
    inter_kept = len(links)

    by_as: dict[int, list[RouterNode]] = defaultdict(list)
    for node in kept.values():
        by_as[node.asn].append(node)

    routers = list(kept.values())
    n_mesh = n_ctrl = 0
    for asn in sorted(by_as):
        members = by_as[asn]
        for u, v in combinations(members, 2):
            lat = link_latency_ms(geodesic_km(u.geo, v.geo))
            links.append(Link(*pair_key(u.id, v.id), lat, LinkKind.INTRA_AS))
            n_mesh += 1
        rr = RouterNode(reflector_id(asn), asn, _centroid([m.geo for m in members]), RouterKind.REFLECTOR)
        if rr.id in kept:
            raise TopologyError(f"router id {rr.id!r} collides with reflector naming")
        routers.append(rr)
        for m in members:
            links.append(Link(*pair_key(m.id, rr.id), 0.0, LinkKind.REFLECTOR_CONTROL))
            n_ctrl += 1

    report = RefineReport(
        routers_in=len(raw.routers),
        routers_kept=len(kept),
        dropped_no_geo=no_geo,
        dropped_no_asn=no_asn,
        dropped_asn_conflict=conflict,
        links_in=len(raw.links),
        links_kept=inter_kept,
        links_dropped=dropped,
        links_superseded=superseded,
        intra_links_synthesized=n_mesh,
        control_links_synthesized=n_ctrl,
        ases=len(by_as),
    )
    return Topology(routers, links), report


def to_raw(topology: Topology) -> RawTopology:
    """Strip synthesized structure, leaving border routers and inter-AS links."""
    routers = {
        r.id: RawRouter(r.id, r.asn, r.geo)
        for r in topology.routers.values()
        if r.kind is RouterKind.BORDER
    }
    links = {l.key for l in topology.links if l.kind is LinkKind.INTER_AS}
    return RawTopology(routers, links)


# --------------------------------------------------------------------------
# canonical document

_SCHEMA = {
    "type": "object",
    "required": ["routers", "links"],
    "properties": {
        "format": {"type": "string"},
        "routers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "asn", "lat", "lon", "kind"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "asn": {"type": "integer", "minimum": 1},
                    "lat": {"type": "number", "minimum": -90, "maximum": 90},
                    "lon": {"type": "number", "minimum": -180, "maximum": 180},
                    "kind": {"enum": [k.value for k in RouterKind]},
                },
            },
        },
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "latency_ms", "kind"],
                "properties": {
                    "a": {"type": "string"},
                    "b": {"type": "string"},
                    "latency_ms": {"type": "number", "minimum": 0},
                    "kind": {"enum": [k.value for k in LinkKind]},
                },
            },
        },
    },
}


def topology_to_dict(topology: Topology) -> dict:
    return {
        "format": FORMAT_TAG,
        "routers": [
            {"id": r.id, "asn": r.asn, "lat": r.geo.lat, "lon": r.geo.lon, "kind": r.kind.value}
            for r in topology.routers.values()
        ],
        "links": [
            {"a": l.a, "b": l.b, "latency_ms": l.latency_ms, "kind": l.kind.value}
            for l in topology.links
        ],
    }


def topology_from_dict(doc: dict) -> Topology:
    errors = sorted(jsonschema.Draft7Validator(_SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(where, err.message)
    routers = [
        RouterNode(r["id"], r["asn"], GeoPoint(float(r["lat"]), float(r["lon"])), RouterKind(r["kind"]))
        for r in doc["routers"]
    ]
    links = []
    for i, l in enumerate(doc["links"]):
        kind = LinkKind(l["kind"])
        if kind is LinkKind.REFLECTOR_CONTROL and l["latency_ms"] != 0:
            raise SchemaError(f"links/{i}/latency_ms", "reflector control link must have latency 0")
        links.append(Link(*pair_key(l["a"], l["b"]), float(l["latency_ms"]), kind))
    try:
        return Topology(routers, links)
    except TopologyError as exc:
        raise SchemaError("<document>", str(exc)) from exc


def save_canonical(topology: Topology, path) -> None:
    # json emits shortest round-trip float repr, so latencies survive exactly
    Path(path).write_text(json.dumps(topology_to_dict(topology), indent=1) + "\n", encoding="utf-8")


def load_canonical(path) -> Topology:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise TopologyError(f"missing file: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno}", exc.msg) from exc
    return topology_from_dict(doc)

"""The three path-inflation case studies as small fixed topologies.

Each fixture pins real city coordinates, so every latency comes from the
geodesic between cities. Expected outcomes name the entry router, which is the
first router outside the probe's AS on the probe's forwarding path. Cells the
case study does not discuss are stored as unasserted rather than guessed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .bgp import PrependPolicy, Protocol
from .metrics import ForwardingPath, forwarding_path
from .relationships import AsRelation, AsRelationshipDb, LocalPrefPolicy, PrefMode
from .simulator import OriginSpec, SimulationConfig, SimulationResult, run
from .topology import GeoPoint, RawRouter, RawTopology, Topology, refine, topology_from_dict, topology_to_dict

CITIES = {
    "sao": GeoPoint(-23.5505, -46.6333),
    "jnb": GeoPoint(-26.2041, 28.0473),
    "for": GeoPoint(-3.7319, -38.5267),
    "per": GeoPoint(-31.9505, 115.8605),
    "syd": GeoPoint(-33.8688, 151.2093),
    "sin": GeoPoint(1.3521, 103.8198),
    "bom": GeoPoint(19.0760, 72.8777),
    "was": GeoPoint(38.9072, -77.0369),
}

CASE_IDS = (1, 2, 3)
CASE_Q_MS = 5.0
UNASSERTED = "unasserted"


@dataclass
class Expectation:
    entry: str | None  # None when unasserted
    reason: str = ""

    def to_dict(self) -> dict | str:
        if self.entry is None:
            return UNASSERTED
        return {"entry": self.entry, "reason": self.reason}


@dataclass
class CaseFixture:
    case_id: int
    title: str
    topology: Topology
    rel_db: AsRelationshipDb
    origin: str
    anycast: tuple[str, ...]
    probe: str
    # keyed by "<protocol>/<pref mode>"; asprep cells assume CASE_Q_MS
    expected: dict[str, Expectation]
    notes: list[str] = field(default_factory=list)

    @property
    def probe_asn(self) -> int:
        return self.topology.routers[self.probe].asn

    def to_dict(self) -> dict:
        return {
            "case": self.case_id,
            "title": self.title,
            "origin": {"router_id": self.origin, "anycast": list(self.anycast)},
            "probe": self.probe,
            "asprep_q_ms": CASE_Q_MS,
            "expected": {k: v.to_dict() for k, v in sorted(self.expected.items())},
            "notes": self.notes,
            "as_rel": [[a, b, -1 if rel is AsRelation.PROVIDER_OF else 0] for a, b, rel in self.rel_db.pairs()],
            "topology": topology_to_dict(self.topology),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CaseFixture":
        rels = {}
        for a, b, code in doc["as_rel"]:
            rels[(a, b)] = AsRelation.PROVIDER_OF if code == -1 else AsRelation.PEER
        expected = {}
        for key, cell in doc["expected"].items():
            expected[key] = Expectation(None) if cell == UNASSERTED else Expectation(cell["entry"], cell["reason"])
        return cls(
            case_id=doc["case"],
            title=doc["title"],
            topology=topology_from_dict(doc["topology"]),
            rel_db=AsRelationshipDb(rels),
            origin=doc["origin"]["router_id"],
            anycast=tuple(doc["origin"]["anycast"]),
            probe=doc["probe"],
            expected=expected,
            notes=list(doc["notes"]),
        )


def _build(routers: dict[str, tuple[int, str]], links: list[tuple[str, str]]) -> Topology:
    raw = RawTopology({rid: RawRouter(rid, asn, CITIES[city]) for rid, (asn, city) in routers.items()},
                      {(a, b) if a < b else (b, a) for a, b in links})
    topology, _ = refine(raw)
    return topology


def _cell(protocol: str, mode: PrefMode) -> str:
    return f"{protocol}/{mode.value}"


GR, NEUTRAL = PrefMode.GAO_REXFORD, PrefMode.NEUTRALIZED


def case1() -> CaseFixture:
    azure, angola = 8075, 37468
    topology = _build(
        {"azure-jnb": (azure, "jnb"), "azure-sao": (azure, "sao"),
         "ang-for": (angola, "for"), "ang-sao": (angola, "sao"), "ang-jnb": (angola, "jnb")},
        [("azure-sao", "ang-sao"), ("azure-jnb", "ang-jnb")],
    )
    early = "both peerings carry equal-length routes; the closer Sao Paulo exit wins on interior cost"
    solid = "Azure's long internal segment is prepended, so the Johannesburg route is shorter"
    return CaseFixture(
        case_id=1,
        title="Azure VM in Johannesburg seen from a probe in Fortaleza (Angola Cables)",
        topology=topology,
        rel_db=AsRelationshipDb({(azure, angola): AsRelation.PEER}),
        origin="azure-jnb",
        anycast=(),
        probe="ang-for",
        expected={
            _cell("baseline", GR): Expectation("azure-sao", early),
            _cell("baseline", NEUTRAL): Expectation("azure-sao", early + "; both routes are peer routes anyway"),
            _cell("asprep", GR): Expectation("azure-jnb", solid + " even without neutralization"),
            _cell("asprep", NEUTRAL): Expectation("azure-jnb", solid),
        },
        notes=["measured RTT: 254 ms via the cloud WAN, 115 ms via Internet transit"],
    )


def case2() -> CaseFixture:
    google, aarnet, ntt, tata = 15169, 7575, 2914, 6453
    topology = _build(
        {"google-bom": (google, "bom"), "google-syd": (google, "syd"),
         "aarnet-per": (aarnet, "per"), "aarnet-syd": (aarnet, "syd"), "aarnet-sin": (aarnet, "sin"),
         "ntt-sin": (ntt, "sin"), "tata-sin": (tata, "sin"), "tata-bom": (tata, "bom")},
        [("google-syd", "aarnet-syd"), ("aarnet-sin", "ntt-sin"), ("ntt-sin", "tata-sin"),
         ("tata-bom", "google-bom")],
    )
    rels = {
        (google, aarnet): AsRelation.PEER,
        (ntt, aarnet): AsRelation.PROVIDER_OF,
        (ntt, tata): AsRelation.PEER,
        (tata, google): AsRelation.PROVIDER_OF,
    }
    return CaseFixture(
        case_id=2,
        title="Google VM in Mumbai seen from a probe in Perth (AARNet)",
        topology=topology,
        rel_db=AsRelationshipDb(rels),
        origin="google-bom",
        anycast=(),
        probe="aarnet-per",
        expected={
            _cell("baseline", GR): Expectation("google-syd", "the Google peer route outranks the NTT provider route"),
            _cell("baseline", NEUTRAL): Expectation("google-syd", "the direct Google route is also the shorter AS path"),
            _cell("asprep", GR): Expectation(None),
            _cell("asprep", NEUTRAL): Expectation(
                "ntt-sin", "with equal preference the prepended Sydney detour is longer than the NTT/TATA path"),
        },
        notes=[
            "measured RTT: 196 ms via the cloud WAN, 149 ms via Internet transit",
            "inflation encoded as peer versus provider preference; the alternative explanation "
            "(AARNet preferring the shorter AS path) is not encoded separately",
        ],
    )


def case3() -> CaseFixture:
    imperva, zayo, singtel, level3 = 19551, 6461, 7473, 3356
    topology = _build(
        {"imperva-sin": (imperva, "sin"), "imperva-was": (imperva, "was"),
         "zayo-was": (zayo, "was"), "zayo-sin": (zayo, "sin"),
         "singtel-sin": (singtel, "sin"), "level3-was": (level3, "was")},
        [("imperva-sin", "singtel-sin"), ("imperva-was", "level3-was"), ("singtel-sin", "zayo-sin"),
         ("level3-was", "zayo-was")],
    )
    rels = {
        (zayo, singtel): AsRelation.PROVIDER_OF,
        (zayo, level3): AsRelation.PEER,
        (singtel, imperva): AsRelation.PROVIDER_OF,
        (level3, imperva): AsRelation.PROVIDER_OF,
    }
    return CaseFixture(
        case_id=3,
        title="Imperva global anycast seen from a probe in Washington DC (Zayo)",
        topology=topology,
        rel_db=AsRelationshipDb(rels),
        origin="imperva-sin",
        anycast=("imperva-was",),
        probe="zayo-was",
        expected={
            _cell("baseline", GR): Expectation("singtel-sin", "prefer-customer picks the SingTel route"),
            _cell("baseline", NEUTRAL): Expectation(None),
            _cell("asprep", GR): Expectation(None),
            _cell("asprep", NEUTRAL): Expectation(
                "level3-was", "equal preference, and the Level3 route has the shorter AS path"),
        },
        notes=["measured RTT: 250 ms via the global anycast address, 2 ms via the regional one"],
    )


BUILDERS = {1: case1, 2: case2, 3: case3}


def fixture_path(case_id: int) -> Path:
    return Path(str(resources.files("latbgp") / "fixtures" / f"case{case_id}.json"))


def load_case(case_id: int) -> CaseFixture:
    if case_id not in BUILDERS:
        raise ValueError(f"unknown case {case_id}; choose from {list(CASE_IDS)}")
    doc = json.loads(fixture_path(case_id).read_text(encoding="utf-8"))
    return CaseFixture.from_dict(doc)


def write_fixtures(directory: Path | None = None) -> list[Path]:
    """Regenerate the shipped fixture documents from the builders."""
    out = []
    for case_id, build in BUILDERS.items():
        path = (directory / f"case{case_id}.json") if directory else fixture_path(case_id)
        path.write_text(json.dumps(build().to_dict(), indent=1) + "\n", encoding="utf-8")
        out.append(path)
    return out


@dataclass
class CaseOutcome:
    case_id: int
    config: SimulationConfig
    result: SimulationResult
    path: ForwardingPath
    as_sequence: tuple[int, ...]
    entry: str | None
    expected: Expectation | None  # None when no cell is stored for this config

    @property
    def matches(self) -> bool | None:
        if self.expected is None or self.expected.entry is None:
            return None
        return self.entry == self.expected.entry


def case_config(fixture: CaseFixture, protocol: Protocol, q_ms: float | None, neutralize: bool) -> SimulationConfig:
    if protocol is Protocol.ASPREP and q_ms is None:
        q_ms = CASE_Q_MS
    pref = LocalPrefPolicy.neutralized() if neutralize else LocalPrefPolicy.gao_rexford()
    return SimulationConfig(PrependPolicy(protocol, q_ms), pref,
                            OriginSpec(router_id=fixture.origin, anycast=fixture.anycast))


def run_case(fixture: CaseFixture, protocol: Protocol, q_ms: float | None = None,
             neutralize: bool = False) -> CaseOutcome:
    config = case_config(fixture, protocol, q_ms, neutralize)
    result = run(fixture.topology, fixture.rel_db, config)
    path = forwarding_path(fixture.probe, result, fixture.topology)
    asns = [fixture.topology.routers[r].asn for r in path.routers]
    seq: list[int] = []
    for a in asns:
        if not seq or seq[-1] != a:
            seq.append(a)
    entry = next((r for r in path.routers if fixture.topology.routers[r].asn != fixture.probe_asn), None)

    expected = None
    if protocol is not Protocol.MINLATENCY and (protocol is Protocol.BASELINE or config.policy.q_ms == CASE_Q_MS):
        expected = fixture.expected.get(_cell(protocol.value, config.pref_policy.mode))
    return CaseOutcome(fixture.case_id, config, result, path, tuple(seq), entry, expected)

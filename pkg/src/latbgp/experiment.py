"""Experiment files and the multi-configuration comparison runner.

An experiment file is JSON::

    {
      "topology": "topo.json",          # or "synthetic": {"ases": 30, "routers_per_as": 5}
      "asrel": "topo.as-rel.txt",
      "seed": 7,
      "origin": {"router_id": "as1r0"}, # or {"asn": 15169, "near": [19.07, 72.88]}
      "configs": [{"protocol": "baseline", "pref": "neutralized"},
                  {"protocol": "asprep", "q_ms": 15, "pref": "neutralized"}],
      "output_dir": "out",
      "percentiles": [50, 90, 99]
    }

Relative paths are resolved against the experiment file's directory.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .bgp import PrependPolicy, Protocol
from .metrics import DEFAULT_PERCENTILES, LatencyReport, dumps, latency_report
from .relationships import AsRelationshipDb, LocalPrefPolicy, parse_as_rel, write_as_rel
from .simulator import OriginSpec, SimulationConfig, SimulationResult, run
from .topology import GeoPoint, Topology, load_canonical, save_canonical

log = logging.getLogger(__name__)


class ExperimentError(Exception):
    pass


@dataclass
class SyntheticSpec:
    ases: int
    routers_per_as: int
    geo_model: str = "tiered"

    def to_dict(self) -> dict:
        return {"ases": self.ases, "routers_per_as": self.routers_per_as, "geo_model": self.geo_model}


@dataclass
class ExperimentSpec:
    configs: list[SimulationConfig]
    origin: OriginSpec
    output_dir: Path
    topology: Path | None = None
    asrel: Path | None = None
    synthetic: SyntheticSpec | None = None
    seed: int | None = None
    percentiles: tuple[float, ...] = DEFAULT_PERCENTILES
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.configs:
            raise ExperimentError("experiment needs at least one config")
        if (self.topology is None) == (self.synthetic is None):
            raise ExperimentError("give exactly one of a topology file or a synthetic generator")
        if self.topology is not None and self.asrel is None:
            raise ExperimentError("a topology file needs a matching as-rel file")
        if self.synthetic is not None and self.seed is None:
            raise ExperimentError("synthetic topologies need a seed")
        labels = [c.label + "/" + c.pref_policy.mode.value for c in self.configs]
        if len(set(labels)) != len(labels):
            raise ExperimentError("duplicate config in experiment")

    def to_dict(self) -> dict:
        return {
            "topology": None if self.topology is None else str(self.topology),
            "asrel": None if self.asrel is None else str(self.asrel),
            "synthetic": None if self.synthetic is None else self.synthetic.to_dict(),
            "seed": self.seed,
            "origin": self.origin.to_dict(),
            "configs": [config_to_dict(c) for c in self.configs],
            "percentiles": list(self.percentiles),
        }


def config_label(config: SimulationConfig) -> str:
    return f"{config.label}/{config.pref_policy.mode.value}"


def config_to_dict(config: SimulationConfig) -> dict:
    d = {"protocol": config.policy.protocol.value, "pref": config.pref_policy.mode.value}
    if config.policy.q_ms is not None:
        d["q_ms"] = config.policy.q_ms
    if config.deploying_ases is not None:
        d["deploying_ases"] = sorted(config.deploying_ases)
    return d


def origin_from_dict(doc: dict) -> OriginSpec:
    if not isinstance(doc, dict):
        raise ExperimentError("origin must be an object")
    anycast = tuple(doc.get("anycast", ()))
    if "router_id" in doc:
        return OriginSpec(router_id=str(doc["router_id"]), anycast=anycast)
    if "asn" in doc and "near" in doc:
        lat, lon = doc["near"]
        return OriginSpec(asn=int(doc["asn"]), near=GeoPoint(float(lat), float(lon)), anycast=anycast)
    raise ExperimentError("origin needs router_id, or asn together with near")


def config_from_dict(doc: dict, origin: OriginSpec) -> SimulationConfig:
    try:
        protocol = Protocol(doc["protocol"])
    except (KeyError, ValueError):
        raise ExperimentError(f"bad protocol in config {doc!r}") from None
    pref = doc.get("pref", "gao_rexford")
    if pref == "gao_rexford":
        pref_policy = LocalPrefPolicy.gao_rexford()
    elif pref == "neutralized":
        pref_policy = LocalPrefPolicy.neutralized()
    else:
        raise ExperimentError(f"bad pref mode {pref!r}")
    deploying = doc.get("deploying_ases")
    if deploying is not None and protocol is not Protocol.ASPREP:
        raise ExperimentError("deploying_ases only applies to asprep")
    try:
        policy = PrependPolicy(protocol, doc.get("q_ms"))
    except ValueError as exc:
        raise ExperimentError(str(exc)) from None
    return SimulationConfig(policy, pref_policy, origin,
                            None if deploying is None else frozenset(int(a) for a in deploying))


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ExperimentError(f"missing experiment file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ExperimentError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return spec_from_dict(doc, base=path.parent, source=path)


def spec_from_dict(doc: dict, base: Path = Path("."), source: Path | None = None) -> ExperimentSpec:
    def resolve(p):
        return None if p is None else (base / p)

    if "origin" not in doc:
        raise ExperimentError("experiment needs an origin")
    origin = origin_from_dict(doc["origin"])
    configs = [config_from_dict(c, origin) for c in doc.get("configs", [])]
    synthetic = None
    if doc.get("synthetic") is not None:
        s = doc["synthetic"]
        synthetic = SyntheticSpec(int(s["ases"]), int(s["routers_per_as"]), s.get("geo_model", "tiered"))
    return ExperimentSpec(
        configs=configs,
        origin=origin,
        output_dir=resolve(doc.get("output_dir", "out")),
        topology=resolve(doc.get("topology")),
        asrel=resolve(doc.get("asrel")),
        synthetic=synthetic,
        seed=doc.get("seed"),
        percentiles=tuple(doc.get("percentiles", DEFAULT_PERCENTILES)),
        source=source,
    )


def load_inputs(spec: ExperimentSpec) -> tuple[Topology, AsRelationshipDb]:
    if spec.synthetic is not None:
        from .synth import generate

        s = spec.synthetic
        synth = generate(s.ases, s.routers_per_as, spec.seed, s.geo_model)
        return synth.topology, synth.rel_db
    return load_canonical(spec.topology), parse_as_rel(spec.asrel)


@dataclass
class RunRow:
    label: str
    config: SimulationConfig
    result: SimulationResult
    report: LatencyReport


def _run_one(args) -> tuple[SimulationResult, LatencyReport]:
    topology, rel_db, config, percentiles = args
    result = run(topology, rel_db, config)
    return result, latency_report(result, topology, percentiles)


def run_experiment(spec: ExperimentSpec, topology: Topology, rel_db: AsRelationshipDb,
                   jobs: int = 1) -> list[RunRow]:
    """Run every config; rows come back in config order whatever the completion order."""
    work = [(topology, rel_db, c, spec.percentiles) for c in spec.configs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_one, work))
    else:
        outputs = [_run_one(w) for w in work]
    return [RunRow(config_label(c), c, res, rep) for c, (res, rep) in zip(spec.configs, outputs)]


def _fmt(x) -> str:
    return "" if x is None else repr(x)


COMPARISON_COLUMNS = ["label", "protocol", "q_ms", "pref", "seed", "converged", "nodes", "unreachable"]


def comparison_csv(rows: list[RunRow], spec: ExperimentSpec) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    pcols = [f"p{p:g}" for p in spec.percentiles]
    w.writerow(COMPARISON_COLUMNS + pcols + ["ibgp", "ebgp", "total"])
    for row in rows:
        c = row.config
        w.writerow([
            row.label, c.policy.protocol.value, _fmt(c.policy.q_ms), c.pref_policy.mode.value,
            _fmt(spec.seed), str(row.result.converged).lower(), len(row.report.per_node),
            len(row.report.unreachable),
        ] + [_fmt(row.report.percentiles.get(p)) for p in spec.percentiles] + [
            row.result.counters.ibgp, row.result.counters.ebgp, row.result.counters.total,
        ])
    return buf.getvalue()


def merged_cdf_csv(rows: list[RunRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "latency_ms", "cumulative_fraction"])
    for row in rows:
        for lat, frac in row.report.cdf:
            w.writerow([row.label, repr(lat), repr(frac)])
    return buf.getvalue()


def summary_document(rows: list[RunRow], spec: ExperimentSpec, complete: bool = True) -> dict:
    return {
        "experiment": spec.to_dict(),
        "complete": complete,
        "runs": [
            {"label": r.label, **r.report.to_summary(), "counters": r.result.counters.to_dict(),
             "converged": r.result.converged, "origins": list(r.result.origins)}
            for r in rows
        ],
    }


def write_outputs(rows: list[RunRow], spec: ExperimentSpec, topology: Topology, rel_db: AsRelationshipDb,
                  out_dir: Path, report: bool = False, complete: bool = True) -> list[Path]:
    """Write the comparison table, merged CDF and summary (plus figures when ``report``)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = "" if complete else ".partial"
    written = []

    def put(name: str, text: str) -> None:
        p = out_dir / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    put(f"comparison{suffix}.csv", comparison_csv(rows, spec))
    put(f"cdf{suffix}.csv", merged_cdf_csv(rows))
    put(f"summary{suffix}.json", dumps(summary_document(rows, spec, complete)))
    if spec.synthetic is not None:
        save_canonical(topology, out_dir / "topology.json")
        write_as_rel(rel_db, out_dir / "topology.as-rel.txt")
        written += [out_dir / "topology.json", out_dir / "topology.as-rel.txt"]
    if report and rows:
        from .plotting import plot_cdfs, plot_messages

        written.append(plot_cdfs({r.label: r.report.cdf for r in rows}, out_dir / f"cdf{suffix}.png"))
        written.append(plot_messages(
            [(r.label, r.result.counters.ibgp, r.result.counters.ebgp) for r in rows],
            out_dir / f"messages{suffix}.png"))
    return written


def compare(spec: ExperimentSpec, out_dir: Path | None = None, report: bool = False, jobs: int = 1) -> list[RunRow]:
    """Run the experiment and write its outputs.

    If a run fails, the configs that did finish are written with a ``.partial``
    suffix before the error propagates.
    """
    out_dir = out_dir or spec.output_dir
    topology, rel_db = load_inputs(spec)
    rows: list[RunRow] = []
    if jobs > 1:
        rows = run_experiment(spec, topology, rel_db, jobs)
    else:
        for config in spec.configs:
            try:
                result, rep = _run_one((topology, rel_db, config, spec.percentiles))
            except Exception:
                log.error("run %s failed; writing partial outputs", config_label(config))
                write_outputs(rows, spec, topology, rel_db, out_dir, report, complete=False)
                raise
            rows.append(RunRow(config_label(config), config, result, rep))
    write_outputs(rows, spec, topology, rel_db, out_dir, report)
    return rows

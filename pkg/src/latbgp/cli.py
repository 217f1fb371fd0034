"""Command-line entry point.

Exit status: 0 success, 1 internal error, 2 usage or unreadable input,
3 empty or degenerate data.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import cases, experiment, synth
from .bgp import PrependPolicy, Protocol
from .metrics import dumps, latency_report, result_document
from .relationships import LocalPrefPolicy, RelationshipError, parse_as_rel, write_as_rel
from .simulator import OriginSpec, SimulationConfig, SimulationError, run
from .topology import (
    EmptyTopologyError,
    GeoPoint,
    LinkKind,
    TopologyError,
    ingest_itdk,
    load_canonical,
    refine,
    save_canonical,
)

log = logging.getLogger("latbgp")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_EMPTY = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ITDK file name endings, matched case-insensitively, optionally compressed
_ITDK_PARTS = {"nodes": "nodes", "geo": "nodes.geo", "as": "nodes.as", "links": "links"}


def find_itdk_files(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise UsageError(f"not a directory: {directory}")
    found: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        name = path.name.lower()
        for comp in (".gz", ".bz2"):
            if name.endswith(comp):
                name = name[: -len(comp)]
        for key, ending in _ITDK_PARTS.items():
            if (name == ending or name.endswith("." + ending)) and key not in found:
                found[key] = path
    missing = [_ITDK_PARTS[k] for k in _ITDK_PARTS if k not in found]
    if missing:
        raise UsageError(f"{directory}: no ITDK file for {', '.join(missing)}")
    return found


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise UsageError(f"missing {what} file: {path}")
    return path


def cmd_ingest(args) -> int:
    files = find_itdk_files(args.itdk_dir)
    rel_db = parse_as_rel(_require_file(args.asrel, "as-rel"))
    raw = ingest_itdk(files["nodes"], files["geo"], files["as"], files["links"])
    topology, report = refine(raw)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_canonical(topology, args.out)
    unknown = {
        (min(a, b), max(a, b))
        for l in topology.links if l.kind is LinkKind.INTER_AS
        for a, b in [(topology.routers[l.a].asn, topology.routers[l.b].asn)]
        if rel_db.relation(a, b) is None
    }
    print(report.summary())
    print(f"AS pairs with inter-AS links but no relationship: {len(unknown)} (treated as peers)")
    print(f"wrote {args.out}")
    return EXIT_OK


def _pref(neutralize: bool) -> LocalPrefPolicy:
    return LocalPrefPolicy.neutralized() if neutralize else LocalPrefPolicy.gao_rexford()


def _origin(args) -> OriginSpec:
    if args.origin_id:
        return OriginSpec(router_id=args.origin_id)
    lat, lon = args.origin_near
    try:
        near = GeoPoint(lat, lon)
    except ValueError as exc:
        raise UsageError(f"--origin-near: {exc}") from None
    return OriginSpec(asn=args.origin_as, near=near)


def cmd_simulate(args) -> int:
    topology = load_canonical(_require_file(args.topology, "topology"))
    rel_db = parse_as_rel(_require_file(args.asrel, "as-rel"))
    deploying = None if args.deploying_ases is None else frozenset(args.deploying_ases)
    config = SimulationConfig(PrependPolicy(Protocol(args.protocol), args.q), _pref(args.neutralize),
                              _origin(args), deploying, args.max_messages)
    result = run(topology, rel_db, config)
    report = latency_report(result, topology)
    if not report.per_node:
        log.error("no router has a route to the origin")
        return EXIT_EMPTY

    args.out.mkdir(parents=True, exist_ok=True)
    doc = result_document(result, topology, report.per_node)
    doc["summary"] = report.to_summary()
    (args.out / "result.json").write_text(dumps(doc), encoding="utf-8")
    (args.out / "latency.csv").write_text(report.latency_csv(), encoding="utf-8")
    (args.out / "cdf.csv").write_text(report.cdf_csv(), encoding="utf-8")
    s = report.to_summary()
    pct = " ".join(f"{k}={v:.3f}" for k, v in s["percentiles"].items())
    print(f"{config.label}: converged={str(result.converged).lower()} nodes={s['nodes']} "
          f"unreachable={s['unreachable']} {pct} messages={result.counters.total} "
          f"(ibgp={result.counters.ibgp} ebgp={result.counters.ebgp})")
    return EXIT_OK if result.converged else EXIT_INTERNAL


def cmd_compare(args) -> int:
    spec = experiment.load_spec(_require_file(args.spec, "experiment"))
    out = args.out or spec.output_dir
    rows = experiment.compare(spec, out, report=args.report, jobs=args.jobs)
    sys.stdout.write(experiment.comparison_csv(rows, spec))
    if not all(r.report.per_node for r in rows):
        log.error("at least one run left every router without a route")
        return EXIT_EMPTY
    return EXIT_OK if all(r.result.converged for r in rows) else EXIT_INTERNAL


def cmd_case(args) -> int:
    fixture = cases.load_case(args.case)
    outcome = cases.run_case(fixture, Protocol(args.protocol), args.q, args.neutralize)
    topo = fixture.topology
    print(f"case {fixture.case_id}: {fixture.title}")
    print(f"config: {outcome.config.label}, {outcome.config.pref_policy.mode.value} preferences")
    print(f"path: {' -> '.join(outcome.path.routers)} ({outcome.path.total_latency_ms:.1f} ms)")
    print(f"AS sequence: {' '.join(str(a) for a in outcome.as_sequence)}")
    entry_as = topo.routers[outcome.entry].asn if outcome.entry else None
    print(f"entry point: {outcome.entry} (AS{entry_as})")
    if outcome.expected is None:
        print("expected: no stored expectation for this configuration")
    elif outcome.expected.entry is None:
        print("expected: unasserted")
    else:
        verdict = "match" if outcome.matches else "MISMATCH"
        print(f"expected: {outcome.expected.entry} ({outcome.expected.reason}): {verdict}")
        if not outcome.matches:
            return EXIT_INTERNAL
    return EXIT_OK


def cmd_synth(args) -> int:
    s = synth.generate(args.ases, args.routers_per_as, args.seed, args.geo_model)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_canonical(s.topology, args.out)
    rel_path = args.out.with_name(args.out.stem + ".as-rel.txt")
    write_as_rel(s.rel_db, rel_path)
    print(f"wrote {args.out} ({len(s.topology.border_routers())} routers, {len(s.topology.asns)} ASes) "
          f"and {rel_path}")
    return EXIT_OK


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _asn_list(text: str) -> list[int]:
    if not text.strip():
        return []
    try:
        return [int(a) for a in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ASNs: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latbgp", description="Latency-aware BGP propagation simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="ITDK files to a canonical topology")
    s.add_argument("--itdk-dir", type=Path, required=True)
    s.add_argument("--asrel", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True, help="canonical topology file to write")
    s.set_defaults(func=cmd_ingest)

    protocols = [p.value for p in Protocol]
    s = sub.add_parser("simulate", help="one propagation run")
    s.add_argument("--topology", type=Path, required=True)
    s.add_argument("--asrel", type=Path, required=True)
    s.add_argument("--protocol", choices=protocols, required=True)
    s.add_argument("--q", type=_positive_float, help="quantization factor in ms (asprep only)")
    s.add_argument("--neutralize", action="store_true", help="equal local preference for all neighbors")
    s.add_argument("--origin-as", type=int)
    s.add_argument("--origin-near", type=float, nargs=2, metavar=("LAT", "LON"))
    s.add_argument("--origin-id")
    s.add_argument("--deploying-ases", type=_asn_list, help="comma-separated ASNs running asprep")
    s.add_argument("--max-messages", type=_positive_int, default=10**7)
    s.add_argument("--out", type=Path, required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare", help="run every config of an experiment file")
    s.add_argument("--spec", type=Path, required=True)
    s.add_argument("--report", action="store_true", help="also render PNG figures next to the CSVs")
    s.add_argument("--out", type=Path, help="override the experiment's output directory")
    s.add_argument("--jobs", type=_positive_int, default=1)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("case", help="run one of the three case-study fixtures")
    s.add_argument("--case", type=int, choices=cases.CASE_IDS, required=True)
    s.add_argument("--protocol", choices=protocols, required=True)
    s.add_argument("--q", type=_positive_float, help=f"asprep quantization in ms (default {cases.CASE_Q_MS:g})")
    s.add_argument("--neutralize", action="store_true")
    s.set_defaults(func=cmd_case)

    s = sub.add_parser("synth", help="generate a random topology with an AS hierarchy")
    s.add_argument("--ases", type=int, required=True)
    s.add_argument("--routers-per-as", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--geo-model", choices=synth.GEO_MODELS, default="tiered")
    s.add_argument("--out", type=Path, required=True, help="canonical topology file; the as-rel file goes beside it")
    s.set_defaults(func=cmd_synth)
    return p


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if args.command in ("simulate", "case"):
        if args.q is not None and args.protocol != Protocol.ASPREP.value:
            parser.error("--q only applies to --protocol asprep")
    if args.command == "simulate":
        if args.protocol == Protocol.ASPREP.value and args.q is None:
            parser.error("--protocol asprep needs --q")
        if args.deploying_ases is not None and args.protocol != Protocol.ASPREP.value:
            parser.error("--deploying-ases only applies to --protocol asprep")
        by_id = args.origin_id is not None
        by_as = args.origin_as is not None or args.origin_near is not None
        if by_id == by_as:
            parser.error("give either --origin-id or --origin-as with --origin-near")
        if by_as and (args.origin_as is None or args.origin_near is None):
            parser.error("--origin-as and --origin-near go together")
    if args.command == "synth":
        if args.ases < 2:
            parser.error("--ases must be at least 2")
        if args.routers_per_as < 1:
            parser.error("--routers-per-as must be at least 1")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EmptyTopologyError as exc:
        print(f"latbgp: empty topology: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (UsageError, TopologyError, RelationshipError, experiment.ExperimentError,
            SimulationError) as exc:
        print(f"latbgp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

import csv
import hashlib
import io
import json

import pytest

from latbgp.cli import EXIT_EMPTY, EXIT_OK, EXIT_USAGE, main
from latbgp.relationships import parse_as_rel
from latbgp.topology import load_canonical


def itdk_dir(tmp_path, with_geo=True):
    d = tmp_path / "itdk"
    d.mkdir()
    nodes = ["node N1:  10.0.0.1", "node N2:  10.0.0.2", "node N3:  10.0.0.3", "node N4:  10.0.0.4"]
    geo = [f"node.geo {n}:\tEU\tDE\tBE\tX\t{lat}\t{lon}\tmaxmind"
           for n, lat, lon in [("N1", 52.5, 13.4), ("N2", 48.9, 2.3), ("N3", 51.5, -0.1), ("N4", 40.4, -3.7)]]
    asn = ["node.AS N1 100 refinement", "node.AS N2 200 refinement", "node.AS N3 200 refinement",
           "node.AS N4 300 refinement"]
    links = ["link L1: N1:10.0.0.1 N2", "link L2: N3 N4"]
    for name, lines in [("nodes", nodes), ("nodes.geo", geo if with_geo else []), ("nodes.as", asn),
                        ("links", links)]:
        (d / f"midar-iff.{name}").write_text("# x\n" + "\n".join(lines) + "\n")
    rel = tmp_path / "rel.txt"
    rel.write_text("# rels\n100|200|-1\n")
    return d, rel


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestIngest:
    def test_ok(self, tmp_path, capsys):
        d, rel = itdk_dir(tmp_path)
        out = tmp_path / "topo.json"
        assert main(["ingest", "--itdk-dir", str(d), "--asrel", str(rel), "--out", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        assert "no relationship: 1" in text  # 200-300 is unknown
        topo = load_canonical(out)
        assert len(topo.border_routers()) == 4 and len(topo.asns) == 3

    def test_missing_asrel(self, tmp_path, capsys):
        d, _ = itdk_dir(tmp_path)
        missing = tmp_path / "nope.txt"
        code = main(["ingest", "--itdk-dir", str(d), "--asrel", str(missing), "--out", str(tmp_path / "t.json")])
        assert code == EXIT_USAGE
        assert str(missing) in capsys.readouterr().err

    def test_empty_after_filtering(self, tmp_path):
        d, rel = itdk_dir(tmp_path, with_geo=False)
        assert main(["ingest", "--itdk-dir", str(d), "--asrel", str(rel), "--out", str(tmp_path / "t.json")]) == EXIT_EMPTY

    def test_missing_parts(self, tmp_path):
        (tmp_path / "d").mkdir()
        rel = tmp_path / "r.txt"
        rel.write_text("1|2|0\n")
        assert main(["ingest", "--itdk-dir", str(tmp_path / "d"), "--asrel", str(rel),
                     "--out", str(tmp_path / "t.json")]) == EXIT_USAGE


@pytest.fixture
def synth_files(tmp_path):
    out = tmp_path / "syn.json"
    assert main(["synth", "--ases", "10", "--routers-per-as", "3", "--seed", "2", "--out", str(out)]) == EXIT_OK
    return out, tmp_path / "syn.as-rel.txt"


class TestSynth:
    def test_files(self, synth_files, tmp_path):
        topo_path, rel_path = synth_files
        assert len(load_canonical(topo_path).asns) == 10
        assert parse_as_rel(rel_path).pairs()
        again = tmp_path / "again" / "syn.json"
        main(["synth", "--ases", "10", "--routers-per-as", "3", "--seed", "2", "--out", str(again)])
        assert sha(again) == sha(topo_path)
        assert sha(again.with_name("syn.as-rel.txt")) == sha(rel_path)

    def test_bounds(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--ases", "1", "--routers-per-as", "3", "--seed", "2", "--out", str(tmp_path / "x.json")])
        assert exc.value.code == EXIT_USAGE


class TestSimulate:
    def args(self, synth_files, tmp_path, *extra):
        topo, rel = synth_files
        return ["simulate", "--topology", str(topo), "--asrel", str(rel), "--origin-id", "as4r0",
                "--out", str(tmp_path / "run"), *extra]

    def test_outputs(self, synth_files, tmp_path, capsys):
        assert main(self.args(synth_files, tmp_path, "--protocol", "asprep", "--q", "10")) == EXIT_OK
        assert "converged=true" in capsys.readouterr().out
        doc = json.loads((tmp_path / "run" / "result.json").read_text())
        assert doc["converged"] is True and doc["config"]["q_ms"] == 10
        rows = list(csv.reader(io.StringIO((tmp_path / "run" / "latency.csv").read_text())))
        assert rows[0] == ["node_id", "latency_ms"] and len(rows) > 1
        assert (tmp_path / "run" / "cdf.csv").exists()

    def test_origin_by_location(self, synth_files, tmp_path):
        topo, rel = synth_files
        base = ["simulate", "--topology", str(topo), "--asrel", str(rel), "--protocol", "baseline",
                "--origin-as", "4", "--out", str(tmp_path / "r")]
        assert main(base + ["--origin-near", "0", "0"]) == EXIT_OK
        assert main(base + ["--origin-near", "95", "0"]) == EXIT_USAGE

    @pytest.mark.parametrize("extra", [
        ["--protocol", "asprep"],
        ["--protocol", "baseline", "--q", "5"],
        ["--protocol", "minlatency", "--deploying-ases", "1,2"],
        ["--protocol", "baseline", "--origin-as", "3"],
    ])
    def test_usage_errors(self, synth_files, tmp_path, extra):
        with pytest.raises(SystemExit) as exc:
            main(self.args(synth_files, tmp_path, *extra))
        assert exc.value.code == EXIT_USAGE

    def test_unknown_origin(self, synth_files, tmp_path):
        args = self.args(synth_files, tmp_path, "--protocol", "baseline")
        args[args.index("as4r0")] = "ghost"
        assert main(args) == EXIT_USAGE


class TestCase:
    def test_match(self, capsys):
        assert main(["case", "--case", "3", "--protocol", "asprep", "--neutralize"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "level3-was" in out and "match" in out and "AS sequence: 6461 3356 19551" in out

    def test_unasserted(self, capsys):
        assert main(["case", "--case", "2", "--protocol", "asprep"]) == EXIT_OK
        assert "unasserted" in capsys.readouterr().out

    def test_q_needs_asprep(self):
        with pytest.raises(SystemExit):
            main(["case", "--case", "1", "--protocol", "baseline", "--q", "5"])


def test_compare(synth_files, tmp_path, capsys):
    topo, rel = synth_files
    spec = tmp_path / "exp.json"
    spec.write_text(json.dumps({
        "topology": topo.name, "asrel": rel.name, "origin": {"router_id": "as4r0"}, "output_dir": "res",
        "configs": [{"protocol": "baseline", "pref": "neutralized"},
                    {"protocol": "asprep", "q_ms": 15, "pref": "neutralized"},
                    {"protocol": "asprep", "q_ms": 10, "pref": "neutralized"},
                    {"protocol": "asprep", "q_ms": 5, "pref": "neutralized"},
                    {"protocol": "minlatency", "pref": "neutralized"}],
    }))
    assert main(["compare", "--spec", str(spec), "--report"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 5
    assert {p.name for p in (tmp_path / "res").iterdir()} == {
        "comparison.csv", "cdf.csv", "summary.json", "cdf.png", "messages.png"}
    assert main(["compare", "--spec", str(tmp_path / "missing.json")]) == EXIT_USAGE

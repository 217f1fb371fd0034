import csv
import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latbgp.bgp import PrependPolicy, Protocol
from latbgp.metrics import (
    ForwardingPath,
    cdf_points,
    downsample_cdf,
    forwarding_path,
    latency_report,
    path_audit,
    percentile,
    result_document,
    unconstrained_dijkstra,
    valley_free_dijkstra,
)
from latbgp.relationships import LocalPrefPolicy
from latbgp.simulator import OriginSpec, SimulationConfig, run

from helpers import brute_force_valley_free, build, equator, nearest_rank, random_small_topology, rels

GR = LocalPrefPolicy.gao_rexford()
NEUTRAL = LocalPrefPolicy.neutralized()


def simulate(topo, db, policy, pref, origin):
    return run(topo, db, SimulationConfig(policy, pref, OriginSpec(router_id=origin)))


def triangle_topology():
    # three equator points cannot give 1/1/3, so the latencies are set directly
    from latbgp.topology import LinkKind, topology_from_dict, topology_to_dict

    topo = build({"A": (1, equator(0)), "B": (2, equator(200)), "C": (3, equator(400))},
                 [("A", "B"), ("B", "C"), ("A", "C")])
    doc = topology_to_dict(topo)
    for link in doc["links"]:
        if {link["a"], link["b"]} == {"A", "C"}:
            link["latency_ms"] = 3.0
        elif link["kind"] != LinkKind.REFLECTOR_CONTROL.value:
            link["latency_ms"] = 1.0
    return topology_from_dict(doc)


class TestOracles:
    def test_triangle_all_peers(self):
        topo = triangle_topology()
        db = rels((1, 2, "p2p"), (2, 3, "p2p"), (1, 3, "p2p"))
        oracle = valley_free_dijkstra(topo, db, "A")
        assert oracle["C"] == 3.0  # A->B->C would cross two peerings
        assert oracle["B"] == 1.0
        assert oracle.witness["C"] == ("C", "A")
        assert unconstrained_dijkstra(topo, "A")["C"] == 2.0

    def test_triangle_with_common_provider(self):
        topo = triangle_topology()
        db = rels((2, 1, "p2c"), (2, 3, "p2c"), (1, 3, "p2p"))
        assert valley_free_dijkstra(topo, db, "A")["C"] == 2.0

    def test_unreachable_is_inf(self):
        topo = build({"A": (1, equator(0)), "B": (2, equator(100)), "C": (3, equator(200))},
                     [("A", "B"), ("B", "C")])
        db = rels((1, 2, "p2p"), (2, 3, "p2p"))
        assert math.isinf(valley_free_dijkstra(topo, db, "A")["C"])
        assert unconstrained_dijkstra(topo, "A")["C"] == pytest.approx(1.0)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_brute_force(self, seed):
        topo, db = random_small_topology(seed)
        origin = topo.border_routers()[seed % len(topo.border_routers())]
        fast = valley_free_dijkstra(topo, db, origin).latency
        slow = brute_force_valley_free(topo, db, origin)
        assert fast.keys() == slow.keys()
        for rid in fast:
            assert fast[rid] == pytest.approx(slow[rid], abs=1e-9) or fast[rid] == slow[rid] == math.inf

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_lower_bound_chain(self, seed):
        topo, db = random_small_topology(seed)
        origin = topo.border_routers()[0]
        free = unconstrained_dijkstra(topo, origin)
        vf = valley_free_dijkstra(topo, db, origin)
        neutral_ml = simulate(topo, db, PrependPolicy(Protocol.MINLATENCY), NEUTRAL, origin)
        ml_lat = latency_report(neutral_ml, topo).per_node
        for rid in topo.border_routers():
            assert free[rid] <= vf[rid] + 1e-9
            if rid in ml_lat:
                assert ml_lat[rid] == pytest.approx(vf[rid], abs=1e-9)
            else:
                assert math.isinf(vf[rid])
        for policy in (PrependPolicy(Protocol.BASELINE), PrependPolicy(Protocol.ASPREP, 5)):
            for pref in (GR, NEUTRAL):
                lat = latency_report(simulate(topo, db, policy, pref, origin), topo).per_node
                assert set(lat) == set(ml_lat)  # reachability does not depend on the protocol
                for rid, v in lat.items():
                    assert v >= vf[rid] - 1e-9


class TestForwarding:
    def test_origin_and_single_hop(self):
        topo = build({"a": (1, equator(0)), "b": (2, equator(400))}, [("a", "b")])
        result = simulate(topo, rels((1, 2, "p2c")), PrependPolicy(Protocol.BASELINE), GR, "a")
        assert forwarding_path("a", result, topo) == ForwardingPath(("a",), 0.0)
        path = forwarding_path("b", result, topo)
        assert path.routers == ("b", "a")
        assert path.total_latency_ms == pytest.approx(2.0)

    def test_intra_as_hop(self):
        topo = build({"a": (1, equator(0)), "b0": (2, equator(200)), "b1": (2, equator(1200))},
                     [("a", "b0")])
        result = simulate(topo, rels((1, 2, "p2c")), PrependPolicy(Protocol.BASELINE), GR, "a")
        path = forwarding_path("b1", result, topo)
        assert path.routers == ("b1", "b0", "a")
        assert path.total_latency_ms == pytest.approx(6.0)

    def test_no_route(self):
        topo = build({"a": (1, equator(0)), "b": (2, equator(400))}, [])
        result = simulate(topo, rels(), PrependPolicy(Protocol.BASELINE), GR, "a")
        with pytest.raises(ValueError):
            forwarding_path("b", result, topo)


class TestAudit:
    db = rels((1, 2, "p2c"), (1, 3, "p2c"), (2, 3, "p2p"), (3, 4, "p2c"))

    @pytest.mark.parametrize("asns,ok", [
        ([5], True),
        ([5, 5, 5], True),
        ([2, 1, 3], True),  # up then down
        ([1, 2], True),
        ([2, 3, 4], True),  # peer then down
        ([4, 3, 2], True),  # up then peer
        ([1, 2, 1], False),  # revisits an AS
        ([3, 1, 2, 3], False),
        ([1, 3, 2], False),  # down then peer
        ([4, 3, 1], True),
        ([1, 3, 4], True),
    ])
    def test_examples(self, asns, ok):
        assert path_audit(None, self.db, asns=asns).valley_free is ok

    def test_provider_customer_provider_is_a_valley(self):
        db = rels((1, 2, "p2c"), (3, 2, "p2c"))
        assert not path_audit(None, db, asns=[1, 2, 3]).valley_free
        assert path_audit(None, db, asns=[2, 3]).valley_free

    def test_unknown_relation_is_indeterminate(self):
        audit = path_audit(None, self.db, asns=[2, 9])
        assert audit.indeterminate and audit.valley_free
        assert not path_audit(None, self.db, asns=[2, 1]).indeterminate

    def test_router_path(self):
        topo = build({"a": (1, equator(0)), "b": (2, equator(100)), "c": (2, equator(200))}, [("a", "b")])
        audit = path_audit(("c", "b", "a"), self.db, topo)
        assert audit.as_sequence == (2, 1)


class TestPercentiles:
    def test_examples(self):
        values = [15, 20, 35, 40, 50]
        assert percentile(values, 30) == 20
        assert percentile(values, 40) == 20
        assert percentile(values, 50) == 35
        assert percentile(values, 100) == 50
        assert percentile(values, 0) == 15
        assert percentile([7.0], 99) == 7.0

    def test_errors(self):
        with pytest.raises(ValueError):
            percentile([], 50)
        with pytest.raises(ValueError):
            percentile([1.0], 101)

    @given(st.lists(st.floats(0, 1e4), min_size=1, max_size=60), st.sampled_from([1, 10, 25, 50, 90, 99, 100]))
    def test_nearest_rank(self, values, p):
        assert percentile(values, p) == nearest_rank(values, p)

    @given(st.lists(st.floats(0, 1e4), min_size=1, max_size=60))
    def test_cdf_shape(self, values):
        points = cdf_points(values)
        xs = [x for x, _ in points]
        ys = [y for _, y in points]
        assert xs == sorted(set(values))
        assert all(b > a for a, b in zip(ys, ys[1:]))
        assert ys[-1] == 1.0

    def test_cdf_ties(self):
        assert cdf_points([2.0, 1.0, 2.0, 4.0]) == [(1.0, 0.25), (2.0, 0.75), (4.0, 1.0)]

    def test_downsample_keeps_ends(self):
        points = cdf_points(range(100))
        small = downsample_cdf(points, 10)
        assert len(small) == 10 and small[0] == points[0] and small[-1] == points[-1]
        assert downsample_cdf(points, 500) == points


class TestReport:
    @pytest.fixture
    def report_inputs(self):
        topo = build({"a": (1, equator(0)), "b": (2, equator(400)), "c": (3, equator(1000)),
                      "d": (4, equator(5000))}, [("a", "b"), ("b", "c")])
        db = rels((1, 2, "p2c"), (2, 3, "p2c"))
        result = simulate(topo, db, PrependPolicy(Protocol.ASPREP, 15), GR, "a")
        return topo, result

    def test_summary(self, report_inputs):
        topo, result = report_inputs
        rep = latency_report(result, topo)
        assert rep.per_node == pytest.approx({"a": 0.0, "b": 2.0, "c": 5.0})
        assert rep.unreachable == ("d",)
        s = rep.to_summary()
        assert (s["protocol"], s["q"], s["nodes"], s["unreachable"]) == ("asprep", "15", 3, 1)
        assert s["percentiles"] == {"p50": pytest.approx(2.0), "p90": pytest.approx(5.0), "p99": pytest.approx(5.0)}

    def test_csv(self, report_inputs):
        topo, result = report_inputs
        rep = latency_report(result, topo)
        rows = list(csv.reader(io.StringIO(rep.latency_csv())))
        assert rows[0] == ["node_id", "latency_ms"]
        assert {r[0] for r in rows[1:]} == {"a", "b", "c"}
        rows = list(csv.reader(io.StringIO(rep.cdf_csv())))
        assert rows[0] == ["latency_ms", "cumulative_fraction"]
        assert float(rows[-1][1]) == 1.0

    def test_document(self, report_inputs):
        topo, result = report_inputs
        doc = result_document(result, topo)
        assert doc["routers"]["d"] is None
        assert doc["routers"]["c"]["as_path"] == [2, 1]
        assert doc["unreachable"] == ["d"]
        assert doc["converged"] is True

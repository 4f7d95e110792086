import math
import random

import numpy as np
import pytest

from codecast.errors import ConfigError
from codecast.sim.baselines import FloodingNetwork
from codecast.sim.config import config_from_dict, expand_runs
from codecast.sim.engine import EventQueue
from codecast.sim.network import CENSOR, HONEST, SILENT
from codecast.sim.runner import assign_roles, build_topology, run_simulation
from codecast.sim.topology import (
    Topology, lognormal_delays, parse_topology, random_regular_topology,
)

from oracles import shortest_path_delays


def small(**kw):
    base = {"name": "t", "seed": 3, "duration": 6.0, "drain": 3.0,
            "topology": {"n": 12, "degree": 4, "median_ms": 40},
            "workload": {"tps": 30},
            "protocol": {"tau": 0.3, "m": 5000}}
    for k, v in kw.items():
        cur = base
        parts = k.split(".")
        for p in parts[:-1]:
            cur = cur.setdefault(p, {})
        cur[parts[-1]] = v
    return config_from_dict(base)


# -- engine -----------------------------------------------------------------------


def test_event_order_and_ties():
    q = EventQueue()
    seen = []
    q.schedule(2.0, seen.append, "c")
    q.schedule(1.0, seen.append, "a")
    q.schedule(1.0, seen.append, "b")
    q.run(5.0)
    assert seen == ["a", "b", "c"] and q.now == 5.0


def test_no_scheduling_into_the_past():
    q = EventQueue()
    q.schedule(1.0, lambda: q.schedule(0.5, print))
    with pytest.raises(ValueError):
        q.run(2.0)


def test_run_until_is_inclusive():
    q = EventQueue()
    hits = []
    q.schedule(1.0, hits.append, 1)
    q.schedule(1.5, hits.append, 2)
    assert q.run(1.0) == 1 and hits == [1]
    assert len(q) == 1


# -- topology -----------------------------------------------------------------------


def test_random_regular():
    t = random_regular_topology(100, 8, seed=4)
    assert all(t.degree(i) == 8 for i in range(100))
    assert len(t.edges) == 400 and t.is_connected()
    assert random_regular_topology(100, 8, seed=4).edges == t.edges


def test_lognormal_delays_statistics():
    t = lognormal_delays(random_regular_topology(200, 8, seed=1), math.log(70), 0.5, seed=2)
    logs = np.log(t.delays)
    assert abs(np.median(t.delays) - 70) < 5
    assert abs(logs.std() - 0.5) < 0.05


def test_file_format_round_trip(tmp_path):
    t = lognormal_delays(random_regular_topology(10, 3 + 1, seed=1), math.log(50), 0.3, seed=1)
    path = tmp_path / "topo.txt"
    t.save(path)
    u = parse_topology(path.read_text())
    assert u.n == t.n and u.edges == t.edges
    assert np.allclose(u.delays, t.delays)


@pytest.mark.parametrize("text", ["", "3\n0 1 5\n", "2\n0 0 1\n", "2\n0 1 -1\n", "2\n0 5 1\n", "x\n"])
def test_bad_topology_files(text):
    with pytest.raises(ConfigError):
        parse_topology(text)


def test_hub():
    t = Topology(3, [(0, 1), (1, 2)], [5.0, 5.0]).add_hub(2, 0.0)
    assert t.n == 5
    assert all(t.degree(h) == 3 for h in (3, 4))


# -- config ---------------------------------------------------------------------------


def test_defaults_are_evaluation_values():
    cfg = config_from_dict({})
    p = cfg.protocol
    assert (p.k, p.c, p.delta, p.gamma, p.alpha, p.tau, p.h, p.m, p.ell) == (
        50, 0.03, 0.5, 0.02, 0.1, 0.0005, 4, 100_000, 128)
    assert (cfg.topology.n, cfg.topology.degree, cfg.workload.tps) == (100, 8, 400.0)
    assert cfg.warmup == 0.2


@pytest.mark.parametrize("data,field", [
    ({"scheme": "gossip"}, "scheme"),
    ({"topology": {"degree": 7, "n": 101}}, "topology.degree"),
    ({"protocol": {"gamma": 2}}, "protocol.gamma"),
    ({"protocol": {"bogus": 1}}, "protocol.bogus"),
    ({"adversary": {"fraction": 1.5}}, "adversary.fraction"),
    ({"workload": {"tps": 0}}, "workload.tps"),
    ({"nonsense": 1}, "nonsense"),
])
def test_field_level_errors(data, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        config_from_dict(data)


def test_expand_runs():
    cfgs = expand_runs({"scheme": "bitcoin", "runs": [{"bitcoin.jitter_max": 0.0}, {"bitcoin.jitter_max": 2.0, "name": "j2"}]})
    assert [c.bitcoin.jitter_max for c in cfgs] == [0.0, 2.0]
    assert cfgs[1].name == "j2"


# -- roles ------------------------------------------------------------------------------


def test_roles_by_fraction():
    cfg = small(**{"topology.n": 50, "adversary.mode": "silent", "adversary.fraction": 0.04})
    topo, roles, creators = assign_roles(cfg, build_topology(cfg))
    assert roles.count(SILENT) == 2 and len(creators) == 48
    assert all(roles[c] == HONEST for c in creators)


def test_zero_delay_attackers():
    cfg = small(**{"adversary.mode": "zero_delay", "adversary.count": 2})
    topo, roles, creators = assign_roles(cfg, build_topology(cfg))
    assert topo.n == 14 and roles[12:] == [CENSOR, CENSOR]
    adj = topo.adjacency()
    assert all(adj[12][i] == 0.0 for i in range(12))


# -- flooding ---------------------------------------------------------------------------


def test_flooding_first_arrivals_match_shortest_paths():
    cfg = config_from_dict({"scheme": "flooding", "seed": 5, "duration": 5, "drain": 5,
                            "topology": {"n": 20, "degree": 4}, "workload": {"tps": 20}})
    topo = build_topology(cfg)
    FloodingNetwork.record_arrivals = True
    try:
        rep = run_simulation(cfg, topo)
    finally:
        FloodingNetwork.record_arrivals = False
    net = rep.network
    edges = [(u, v, d / 1000.0) for (u, v), d in zip(topo.edges, topo.delays)]
    checked = 0
    for serial, tx in net.txs.items():
        arrive = shortest_path_delays(topo.n, edges, tx.origin, start=tx.created_at)
        for v in range(topo.n):
            assert net.arrivals[(serial, v)] == arrive[v]
            checked += 1
    assert checked == 20 * len(net.txs) > 0


def test_flooding_overhead_equals_degree():
    cfg = config_from_dict({"scheme": "flooding", "seed": 2, "duration": 10, "drain": 3,
                            "topology": {"n": 30, "degree": 6}, "workload": {"tps": 30}})
    rep = run_simulation(cfg)
    for m in rep.nodes:
        assert m.overhead == pytest.approx(6, rel=0.1)
    assert rep.summary["delivery"]["p5"] == 1.0


def test_flooding_exclude_sender():
    cfg = config_from_dict({"scheme": "flooding", "seed": 2, "duration": 10, "drain": 3,
                            "topology": {"n": 30, "degree": 6}, "workload": {"tps": 30},
                            "flooding": {"exclude_sender": True}})
    rep = run_simulation(cfg)
    assert 4.5 < rep.summary["overhead"]["mean"] < 5.5


# -- pull baselines ---------------------------------------------------------------------


def test_bitcoin_overhead_and_jitter():
    base = {"scheme": "bitcoin", "seed": 2, "duration": 10, "drain": 5,
            "topology": {"n": 40, "degree": 8}, "workload": {"tps": 20}}
    r0 = run_simulation(config_from_dict(base))
    r2 = run_simulation(config_from_dict({**base, "bitcoin": {"jitter_max": 2.0}}))
    assert r0.summary["delivery"]["p5"] == 1.0 and r2.summary["delivery"]["p5"] == 1.0
    # 8 announcements of 32 B each per 128 B tx plus requests and duplicate bodies
    assert r0.summary["overhead"]["mean"] > 1 + 8 * 32 / 128
    assert r2.summary["overhead"]["mean"] < r0.summary["overhead"]["mean"]
    assert r2.summary["latency"]["mean"] > r0.summary["latency"]["mean"]


def test_shrec_three_trips_per_hop():
    # constant 50 ms links: each hop costs hash + request + response = 150 ms
    cfg = config_from_dict({"scheme": "shrec", "seed": 1, "duration": 5, "drain": 5,
                            "topology": {"n": 20, "degree": 4, "delay_model": "constant", "constant_ms": 50},
                            "workload": {"tps": 20}})
    rep = run_simulation(cfg)
    topo = build_topology(cfg)
    edges = [(u, v, 1.0) for u, v in topo.edges]
    per_node = {v: [] for v in range(topo.n)}
    for tx in rep.network.txs.values():
        if cfg.measure_start <= tx.created_at <= cfg.duration:
            d = shortest_path_delays(topo.n, edges, tx.origin)
            for v in range(topo.n):
                if v != tx.origin:
                    per_node[v].append(0.15 * d[v])
    want = {v: np.mean(h) for v, h in per_node.items()}
    for m in rep.nodes:
        assert m.mean_latency_s == pytest.approx(want[m.node_id], rel=1e-9)
    assert rep.network.duplicates == 0


def test_shrec_retries_after_silent_announcer():
    cfg = config_from_dict({"scheme": "shrec", "seed": 4, "duration": 6, "drain": 20,
                            "topology": {"n": 25, "degree": 4}, "workload": {"tps": 10},
                            "shrec": {"request_timeout": 2.0},
                            "adversary": {"mode": "silent", "fraction": 0.2}})
    rep = run_simulation(cfg)
    assert rep.counters["retries"] > 0
    assert rep.summary["delivery"]["p5"] == 1.0
    assert rep.summary["latency"]["p95"] > 1.0


# -- coded network --------------------------------------------------------------------


def test_coded_small_network_delivers():
    rep = run_simulation(small())
    s = rep.summary
    assert s["delivery"]["p5"] >= 0.95
    assert s["overhead"]["mean"] < 4
    assert rep.counters["corrupt"] == 0


def test_coded_traffic_conservation():
    rep = run_simulation(small())
    net = rep.network
    received = sum(nd.stats.bytes_down for nd in net.nodes)
    in_flight = 0
    for _, _, fn, args in net.q._heap:
        if fn == net._recv:
            cw = args[2]
            in_flight += 10 + 4 * len(cw.ids) + len(cw.payload)
        elif fn == net._report:
            in_flight += len(args[2])
    assert net.sent_bytes == received + in_flight


def test_coded_no_fabrication():
    rep = run_simulation(small())
    net = rep.network
    made = set(net.by_payload)
    for nd in net.nodes:
        assert nd.window.seen <= made


def test_coded_deterministic():
    a = run_simulation(small())
    b = run_simulation(small())
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()


def test_coded_seed_matters():
    cfg = small()
    cfg.seed = 4
    assert run_simulation(small()).to_json() != run_simulation(cfg).to_json()


def test_silent_nodes_send_nothing():
    rep = run_simulation(small(**{"adversary.mode": "silent", "adversary.fraction": 0.25}))
    net = rep.network
    for nd in net.nodes:
        if net.roles[nd.id] == SILENT:
            assert nd.stats.codewords_sent == 0 and nd.stats.reports_sent == 0
    assert rep.summary["delivery"]["p5"] >= 0.9


def test_censors_never_encode_censored():
    rep = run_simulation(small(**{"adversary.mode": "censor", "adversary.fraction": 0.25,
                                  "adversary.censored_fraction": 0.3}))
    net = rep.network
    for nd in net.nodes:
        if net.roles[nd.id] == CENSOR:
            assert not any(getattr(t, "censored", False) for t in nd.window.entries)
    assert rep.censored["created"] > 0 and rep.censored["delivery"] > 0.5


def test_variable_size_mode():
    rep = run_simulation(small(**{"workload.sizes": {60: 1.0, 300: 1.0}, "protocol.ell": 128}))
    assert rep.summary["delivery"]["p5"] >= 0.9
    assert rep.summary["overhead"]["mean"] > 1.0


def test_report_csv_columns():
    rep = run_simulation(small())
    lines = rep.to_csv().splitlines()
    assert lines[0] == "node_id,mean_latency_s,delivery_rate,overhead"
    assert len(lines) == 13

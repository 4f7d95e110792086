"""Simulated networks: shared workload / metrics plumbing and the coded scheme."""

import gc
import hashlib
import logging
from collections import deque

import numpy as np

from ..codec import Transaction
from ..fragmentation import fragment
from ..node import Node
from .engine import EventQueue
from .metrics import Collector, MetricsReport

log = logging.getLogger(__name__)

HONEST, CENSOR, SILENT = "honest", "censor", "silent"


def subseed(seed, *tags):
    """Independent 63-bit seed for one purpose (topology, workload, node i, ...)."""
    h = hashlib.blake2b(repr((seed,) + tags).encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") >> 1


class SimTransaction(Transaction):
    __slots__ = ("serial", "origin", "censored")

    def __init__(self, payload, created_at, serial, origin, censored=False):
        super().__init__(payload, created_at)
        self.serial = serial
        self.origin = origin
        self.censored = censored


class WholeTransaction:
    """A variable-size transaction, tracked by the bytes it reassembles to."""

    __slots__ = ("data", "created_at", "serial", "origin", "censored")

    def __init__(self, data, created_at, serial, origin, censored=False):
        self.data = data
        self.created_at = created_at
        self.serial = serial
        self.origin = origin
        self.censored = censored


class Network:
    """Event-driven network of ``topology.n`` nodes.

    ``roles`` maps node -> honest | censor | silent.  Only honest nodes that
    are part of the original topology create transactions and are measured.
    """

    def __init__(self, cfg, topology, roles, creators):
        self.cfg = cfg
        self.topo = topology
        self.adj = topology.adjacency()
        self.n = topology.n
        self.roles = roles
        self.creators = list(creators)
        self.q = EventQueue()
        self.t = cfg.protocol.t if cfg.scheme == "coded" else cfg.workload.tx_size
        self.end = cfg.duration
        self.collector = Collector(self.n, self.creators, cfg.measure_start, cfg.duration,
                                   self.t)
        self._wl_rng = np.random.default_rng(subseed(cfg.seed, "workload"))
        self._censor_rng = np.random.default_rng(subseed(cfg.seed, "censored"))
        self._serial = 0
        self.transactions = 0
        self.series = []
        self._links_at = {}

    # -- workload ---------------------------------------------------------

    def _next_arrival(self):
        gap = self._wl_rng.exponential(1.0 / self.cfg.workload.tps)
        t = self.q.now + gap
        if t <= self.end:
            self.q.schedule(t, self._create)

    def _new_payload(self, size):
        return self._wl_rng.bytes(size)

    def _create(self):
        now = self.q.now
        origin = self.creators[int(self._wl_rng.integers(len(self.creators)))]
        censored = bool(self._censor_rng.random() < self.cfg.adversary.censored_fraction)
        serial = self._serial
        self._serial += 1
        self.transactions += 1
        self.create_transaction(origin, serial, censored, now)
        self._next_arrival()

    def create_transaction(self, origin, serial, censored, now):
        tx = SimTransaction(self._new_payload(self.cfg.workload.tx_size), now, serial, origin, censored)
        self.collector.on_create(tx)
        self.local_tx(origin, tx)

    # -- hooks for schemes -----------------------------------------------

    def setup(self):
        raise NotImplementedError

    def local_tx(self, node, tx):
        raise NotImplementedError

    def bytes_down(self):
        raise NotImplementedError

    def decoded_bytes(self):
        raise NotImplementedError

    def sample(self):
        return {}

    def link_rates(self, span):
        return []

    def counters(self):
        return {}

    # -- driver -----------------------------------------------------------

    def _snapshot(self, label):
        self.collector.snapshot(label, self.bytes_down(), self.decoded_bytes())
        self._links_at[label] = self.link_counts()

    def link_counts(self):
        return {}

    def _sample(self):
        row = {"t": round(self.q.now, 9)}
        row.update(self.sample())
        self.series.append(row)
        nxt = self.q.now + self.cfg.sample_interval
        if nxt <= self.end + self.cfg.drain:
            self.q.schedule(nxt, self._sample)

    def run(self):
        cfg = self.cfg
        self.setup()
        self.q.schedule(cfg.measure_start, self._snapshot, "start")
        self.q.schedule(cfg.duration, self._snapshot, "end")
        self.q.schedule(0.0, self._sample)
        self._next_arrival()
        # the event loop allocates millions of short-lived acyclic objects;
        # cyclic collection only burns time here
        was = gc.isenabled()
        gc.disable()
        try:
            self.q.run(cfg.duration + cfg.drain)
        finally:
            if was:
                gc.enable()
        return self.report()

    def report(self):
        c = self.collector
        nodes = c.node_metrics()
        span = self.cfg.duration - self.cfg.measure_start
        rates = self.link_rates(span)
        counters = {"events": self.q.processed, "transactions": self.transactions}
        counters.update(self.counters())
        return MetricsReport(
            name=self.cfg.name,
            scheme=self.cfg.scheme,
            seed=self.cfg.seed,
            nodes=nodes,
            summary=c.summary(nodes),
            censored=c.censored_summary(nodes),
            link_rates=rates,
            time_series=self.series,
            counters=counters,
        )


class CodedNetwork(Network):
    def setup(self):
        cfg = self.cfg
        p = cfg.protocol
        self.fragmented = cfg.workload.sizes is not None
        self.by_payload = {}
        self.whole_by_bytes = {}
        self._memo_live = deque()
        self.q.schedule(self.MEMO_TTL, self._sweep)
        intern = self.by_payload.get
        self.nodes = []
        for i in range(self.n):
            role = self.roles[i]
            node = Node(
                i, p, seed=subseed(cfg.seed, "node", i), arrival_rate=cfg.workload.tps,
                intern=intern,
                censor=(lambda tx: getattr(tx, "censored", False)) if role == CENSOR else None,
                silent=role == SILENT,
                fragmented=self.fragmented,
                on_deliver=None if self.fragmented else self._deliver,
                on_assembled=self._assembled if self.fragmented else None,
            )
            self.nodes.append(node)
        for u, v in self.topo.edges:
            ku = self.nodes[u].open_session(v)
            kv = self.nodes[v].open_session(u)
            self.nodes[v].on_key_exchange(u, ku)
            self.nodes[u].on_key_exchange(v, kv)
        for node in self.nodes:
            node.spread_initial_rate()
        self._scan_at = [None] * self.n
        self._h = p.h
        self.sent_bytes = 0  # codeword and loss-report bytes put on links
        self._decoded_bytes = [0] * self.n
        phase = np.random.default_rng(subseed(cfg.seed, "phase"))
        for u in range(self.n):
            for v in sorted(self.adj[u]):
                r = self.nodes[u].sessions[v].ctrl.r
                self.q.schedule(float(phase.random()) / r, self._send, u, v)

    # -- workload ---------------------------------------------------------

    def create_transaction(self, origin, serial, censored, now):
        if not self.fragmented:
            super().create_transaction(origin, serial, censored, now)
            return
        sizes = self.cfg.workload.sizes
        keys = sorted(int(s) for s in sizes)
        w = np.array([float(sizes[s] if s in sizes else sizes[str(s)]) for s in keys])
        size = keys[int(self._wl_rng.choice(len(keys), p=w / w.sum()))]
        data = self._new_payload(size)
        whole = WholeTransaction(data, now, serial, origin, censored)
        self.whole_by_bytes[data] = whole
        self.collector.on_create(whole)
        for frag in fragment(data, self.cfg.protocol.ell):
            tx = SimTransaction(frag.to_bytes(), now, serial, origin, censored)
            self.local_tx(origin, tx)

    def local_tx(self, node, tx):
        self.by_payload[tx.payload] = tx
        self._memo_live.append(tx)
        self.nodes[node].on_local_transaction(tx, self.q.now)

    MEMO_TTL = 2.0

    def _sweep(self):
        # transactions share one object across nodes, and with it the memo of
        # keyed IDs; old ones rarely need IDs again, so drop their memo
        live = self._memo_live
        cutoff = self.q.now - self.MEMO_TTL
        while live and live[0].created_at < cutoff:
            live.popleft().id_memo = {}
        self.q.schedule(self.q.now + self.MEMO_TTL, self._sweep)

    # -- events -----------------------------------------------------------

    def _send(self, u, v):
        now = self.q.now
        cw, nxt = self.nodes[u].on_send_slot(v, now)
        if cw is not None:
            self.sent_bytes += 10 + self._h * len(cw.ids) + len(cw.payload)
            self.q.schedule(now + self.adj[u][v], self._recv, v, u, cw)
        self.q.schedule(nxt, self._send, u, v)

    def _recv(self, v, u, cw):
        node = self.nodes[v]
        node.on_receive_codeword(u, cw, self.q.now)
        if self._scan_at[v] is None and node.decoder.timeouts:
            self._arm_scan(v)

    def _arm_scan(self, v):
        t = self.nodes[v].next_scan_time()
        if t is not None:
            self._scan_at[v] = t
            self.q.schedule(t, self._scan, v)

    def _scan(self, v):
        self._scan_at[v] = None
        now = self.q.now
        for link, bodies in self.nodes[v].on_timeout_tick(now).items():
            for body in bodies:
                self.sent_bytes += len(body)
                self.q.schedule(now + self.adj[v][link], self._report, link, v, body)
        self._arm_scan(v)

    def _report(self, u, v, body):
        self.nodes[u].on_loss_report(v, body, self.q.now)

    def _deliver(self, node, tx, now):
        self._decoded_bytes[node.id] += len(tx.payload)
        if isinstance(tx, SimTransaction):
            self.collector.on_deliver(node.id, tx, now)

    def _assembled(self, node, data, now):
        whole = self.whole_by_bytes.get(data)
        if whole is None:
            return
        self._decoded_bytes[node.id] += len(data)
        self.collector.on_deliver(node.id, whole, now)

    # -- accounting -------------------------------------------------------

    def bytes_down(self):
        return [nd.stats.bytes_down for nd in self.nodes]

    def decoded_bytes(self):
        return list(self._decoded_bytes)

    def link_counts(self):
        return {(u, v): s.sent for u, nd in enumerate(self.nodes) for v, s in nd.sessions.items()}

    def link_rates(self, span):
        start, end = self._links_at["start"], self._links_at["end"]
        return [(u, v, (end[k] - start.get(k, 0)) / span) for k in sorted(end) for u, v in [k]]

    def sample(self):
        rates = [s.ctrl.r for nd in self.nodes if self.roles[nd.id] == HONEST for s in nd.sessions.values()]
        return {
            "mean_rate": float(np.mean(rates)) if rates else 0.0,
            "decoded": sum(nd.stats.decoded for nd in self.nodes),
            "pending": sum(nd.decoder.pending_count for nd in self.nodes),
        }

    def counters(self):
        tot = {"corrupt": 0, "discarded": 0, "redundant": 0, "evicted": 0, "codewords": 0,
               "parse_errors": 0}
        for nd in self.nodes:
            d = nd.decoder
            tot["corrupt"] += d.corrupt
            tot["discarded"] += d.discarded
            tot["redundant"] += d.redundant
            tot["evicted"] += d.evicted
            tot["codewords"] += d.received
            tot["parse_errors"] += nd.stats.parse_errors
        return tot

"""Baseline broadcast schemes: transaction flooding and hash-announcement pull (Bitcoin, Shrec).

Transactions are tracked by serial number.  Byte accounting per received
message: full transaction ``tx_size``; announcement and request ``HASH_SIZE``.
"""

import random

from .network import SILENT, Network, subseed

HASH_SIZE = 32


class _Base(Network):
    def setup(self):
        self.size = self.cfg.workload.tx_size
        self.have = [set() for _ in range(self.n)]
        self.bytes = [0] * self.n
        self.dec = [0] * self.n
        self.txs = {}
        self.duplicates = 0

    def bytes_down(self):
        return list(self.bytes)

    def decoded_bytes(self):
        return list(self.dec)

    def _learn(self, v, serial):
        self.have[v].add(serial)
        self.dec[v] += self.size
        self.collector.on_deliver(v, self.txs[serial], self.q.now)

    def counters(self):
        return {"duplicates": self.duplicates}


class FloodingNetwork(_Base):
    """Forward every first-seen transaction to all peers.

    With ``record_arrivals`` set, ``arrivals[(serial, node)]`` keeps each
    node's first-arrival time (used to check shortest-path optimality).
    """

    record_arrivals = False

    def setup(self):
        super().setup()
        self.exclude = self.cfg.flooding.exclude_sender
        self.arrivals = {}

    def local_tx(self, node, tx):
        self.txs[tx.serial] = tx
        self.have[node].add(tx.serial)
        if self.record_arrivals:
            self.arrivals[(tx.serial, node)] = self.q.now
        self._forward(node, None, tx.serial)

    def _forward(self, v, sender, serial):
        now = self.q.now
        for w, d in self.adj[v].items():
            if self.exclude and w == sender:
                continue
            self.q.schedule(now + d, self._recv, w, v, serial)

    def _recv(self, v, u, serial):
        self.bytes[v] += self.size
        if serial in self.have[v]:
            self.duplicates += 1
            return
        self._learn(v, serial)
        if self.record_arrivals:
            self.arrivals[(serial, v)] = self.q.now
        if self.roles[v] != SILENT:
            self._forward(v, u, serial)


class _PullNetwork(_Base):
    """Hash announcement, explicit request, transaction response.

    Silent nodes announce every hash the moment they first hear it but never
    request or answer requests.
    """

    def setup(self):
        super().setup()
        self.known = [dict() for _ in range(self.n)]  # serial -> peers known to have it
        self.announced = [set() for _ in range(self.n)]
        self.rand = random.Random(subseed(self.cfg.seed, "jitter"))
        self.requests = 0

    def local_tx(self, node, tx):
        self.txs[tx.serial] = tx
        self.have[node].add(tx.serial)
        self._announce(node, tx.serial)

    def jitter(self):
        return 0.0

    def _announce(self, v, serial):
        if serial in self.announced[v]:
            return
        self.announced[v].add(serial)
        now = self.q.now
        skip = self.known[v].get(serial, ())
        silent = self.roles[v] == SILENT
        for w, d in self.adj[v].items():
            if w in skip:
                continue
            self.q.schedule(now + (0.0 if silent else self.jitter()) + d, self._inv, w, v, serial)
        self.known[v].pop(serial, None)  # only needed up to the announcement

    def _inv(self, v, u, serial):
        self.bytes[v] += HASH_SIZE
        if serial in self.announced[v]:
            return
        self.known[v].setdefault(serial, set()).add(u)
        if self.roles[v] == SILENT:
            self._announce(v, serial)
            return
        if serial in self.have[v]:
            return
        self.on_announce(v, u, serial)

    def _request(self, v, u, serial):
        self.requests += 1
        self.q.schedule(self.q.now + self.adj[v][u], self._getdata, u, v, serial)

    def _getdata(self, u, v, serial):
        self.bytes[u] += HASH_SIZE
        if self.roles[u] == SILENT or serial not in self.have[u]:
            return
        self.q.schedule(self.q.now + self.adj[u][v], self._tx, v, u, serial)

    def _tx(self, v, u, serial):
        self.bytes[v] += self.size
        if serial in self.have[v]:
            self.duplicates += 1
            return
        self._learn(v, serial)
        self.on_received(v, serial)
        self._announce(v, serial)

    def on_announce(self, v, u, serial):
        raise NotImplementedError

    def on_received(self, v, serial):
        pass

    def counters(self):
        return {"duplicates": self.duplicates, "requests": self.requests}


class BitcoinNetwork(_PullNetwork):
    """Announce after a uniform random jitter; request from every announcer
    until the transaction itself has arrived."""

    def jitter(self):
        j = self.cfg.bitcoin.jitter_max
        return self.rand.uniform(0.0, j) if j > 0 else 0.0

    def on_announce(self, v, u, serial):
        self._request(v, u, serial)


class ShrecNetwork(_PullNetwork):
    """At most one outstanding request per hash.  On timeout the node retries
    with the next announcer it has not tried yet, in announcement order."""

    def setup(self):
        super().setup()
        self.pending = [dict() for _ in range(self.n)]  # serial -> [announcers, next index, in flight]
        self.timeout = self.cfg.shrec.request_timeout
        self.retries = 0

    def on_announce(self, v, u, serial):
        st = self.pending[v].get(serial)
        if st is None:
            st = self.pending[v][serial] = [[], 0, None]
        st[0].append(u)
        if st[2] is None:
            self._next(v, serial, st)

    def _next(self, v, serial, st):
        peers, i, _ = st
        if i >= len(peers):
            st[2] = None
            return
        peer = peers[i]
        st[1] = i + 1
        st[2] = peer
        self._request(v, peer, serial)
        self.q.schedule(self.q.now + self.timeout, self._expire, v, serial, peer)

    def _expire(self, v, serial, peer):
        st = self.pending[v].get(serial)
        if st is None or st[2] != peer:
            return
        self.retries += 1
        self._next(v, serial, st)

    def on_received(self, v, serial):
        self.pending[v].pop(serial, None)

    def counters(self):
        c = super().counters()
        c["retries"] = self.retries
        return c

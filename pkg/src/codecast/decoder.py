"""Joint peeling decoder over codewords from all peers of one node.

Decoded transactions are indexed per incoming link under that link's key, for
the last ``m`` decodes only (the peeling window).  A codeword is peeled
against that index on arrival; whatever remains waits in the bipartite graph.
When a codeword is down to one unknown its payload is hashed and checked
against the header ID before the result is used anywhere else, so corrupt or
mis-peeled codewords are dropped without touching other state.
"""

import logging
import struct
from collections import deque
from dataclasses import dataclass

from .codec import _ID_FORMATS, HEADER, Transaction, parse_codeword_fields
from .txid import DEFAULT_ID_SIZE, KeyedHasher

log = logging.getLogger(__name__)

DEFAULT_PEELING_WINDOW = 100_000


class _WireFormats(dict):
    """``(length, h) -> (struct for seqno/degree/IDs, degree, payload offset)``
    for the common ID sizes, assuming the standard payload size; filled lazily."""

    def __init__(self, t):
        super().__init__()
        self.t = t

    def __missing__(self, key):
        n, h = key
        body = n - HEADER.size - self.t
        fmt = _ID_FORMATS.get(h)
        if fmt is None or body <= 0 or body % h:
            return None
        d = body // h
        self[key] = v = (struct.Struct(f">QH{d}{fmt}"), d, HEADER.size + body)
        return v


@dataclass(frozen=True)
class LossEvent:
    link: object
    seqno: int
    detected_at: float


class _Pending:
    """A codeword waiting in the peeling graph.

    ``ids`` are the IDs unknown at arrival; ``left`` counts those still
    unresolved and ``xid`` is their XOR, so with one left it is that ID.
    """

    __slots__ = ("link", "seqno", "ids", "left", "xid", "value", "arrival", "reported", "alive")

    def __init__(self, link, seqno, ids, xid, value, arrival):
        self.link = link
        self.seqno = seqno
        self.ids = ids
        self.left = len(ids)
        self.xid = xid
        self.value = value
        self.arrival = arrival
        self.reported = False
        self.alive = True


class _Link:
    __slots__ = ("hasher", "tag", "base", "shift", "index", "waiting", "pending", "alive")

    def __init__(self, hasher):
        self.hasher = hasher
        self.tag = hasher.tag
        # the hasher's keyed state, inlined on the hot path
        self.base = hasher._base
        self.shift = hasher._shift
        self.index = {}  # ID -> most recently decoded Transaction
        self.waiting = {}  # unresolved ID -> [_Pending]
        self.pending = deque()  # arrival order, for the per-link cap
        self.alive = 0


class Decoder:
    """Per-node decoder state.

    ``intern`` maps a freshly validated payload to the ``Transaction`` object
    to return; the simulator uses it to share one object per transaction
    across nodes.  By default a new ``Transaction`` stamped with the decode
    time is built.
    """

    def __init__(self, t=128, h=DEFAULT_ID_SIZE, m=DEFAULT_PEELING_WINDOW,
                 pending_cap=500, intern=None):
        if m < 1:
            raise ValueError(f"peeling window must be >= 1, got {m}")
        self.t = t
        self.h = h
        self.m = m
        self.pending_cap = pending_cap
        self.intern = intern
        self._wire = _WireFormats(t)
        self.links = {}
        self._items = []
        self.decoded_log = deque()  # (tx, [id per link in link order]) for the last m decodes
        self.timeouts = deque()
        # counters
        self.discarded = 0  # malformed or duplicate-ID headers
        self.corrupt = 0  # degree-1 hash check failures
        self.redundant = 0  # fully peeled on arrival or while waiting
        self.evicted = 0
        self.received = 0

    def add_link(self, link, key):
        if link in self.links:
            raise ValueError(f"link {link!r} already registered")
        self.links[link] = _Link(KeyedHasher(key, self.h))
        self._items = list(self.links.items())

    def key_of(self, link):
        return self.links[link].hasher.key

    def known(self, link, tx_id):
        return tx_id in self.links[link].index

    @property
    def pending_count(self):
        return sum(lk.alive for lk in self.links.values())

    # -- ingest -----------------------------------------------------------

    def ingest(self, link, cw, now):
        """Peel ``cw`` against known transactions; return new decodes in order."""
        return self._peel(link, cw.seqno, cw.ids, int.from_bytes(cw.payload, "big"), now)

    def ingest_wire(self, link, data, now):
        """``ingest`` straight from the wire format; raises ``ParseError``."""
        h = self.h
        st = self._wire[len(data), h]
        if st is None:
            # unusual length or ID size: the general parser raises or decodes
            seqno, ids, value = parse_codeword_fields(data, self.t, h)
            return self._peel(link, seqno, ids, value, now)
        seqno, d, *ids = st[0].unpack_from(data)
        if d != st[1]:
            parse_codeword_fields(data, self.t, h)  # raises
        return self._peel(link, seqno, ids, int.from_bytes(data[st[2]:], "big"), now)

    def _peel(self, link, seqno, ids, value, now):
        lk = self.links[link]
        self.received += 1
        if len(ids) > 1 and len(set(ids)) != len(ids):
            self.discarded += 1
            return []
        get = lk.index.get
        remaining = []
        xid = 0
        for i in ids:
            tx = get(i)
            if tx is None:
                remaining.append(i)
                xid ^= i
            else:
                value ^= tx.value
        if not remaining:
            self.redundant += 1
            return []
        if len(remaining) == 1:
            tx = self._validate(value, xid, lk, now)
            if tx is None:
                return []
            out = []
            self._accept(tx, link, xid, out)
            return out
        p = _Pending(link, seqno, remaining, xid, value, now)
        waiting = lk.waiting
        for i in remaining:
            lst = waiting.get(i)
            if lst is None:
                waiting[i] = [p]
            else:
                lst.append(p)
        self._track(p, lk)
        return []

    def add_known(self, tx):
        """Register a locally created transaction; returns cascade decodes."""
        out = []
        self._accept(tx, None, None, out, emit=False)
        return out

    def validate_degree1(self, link, cw):
        """Accept iff the payload hashes to the single header ID."""
        if len(cw.ids) != 1:
            raise ValueError("validate_degree1 needs exactly one remaining ID")
        lk = self.links[link]
        ok = lk.hasher(cw.payload) == cw.ids[0]
        if not ok:
            self.corrupt += 1
        return ok

    def _validate(self, value, j, lk, arrival):
        """Degree-1 check: the recovered payload must hash to its header ID."""
        payload = value.to_bytes(self.t, "big")
        if lk.hasher(payload) != j:
            self.corrupt += 1
            return None
        tx = None
        if self.intern is not None:
            tx = self.intern(payload)
        if tx is None:
            tx = Transaction.from_parts(payload, value, arrival)
        tx.id_memo[lk.tag] = j
        return tx

    def _track(self, p, lk):
        q = lk.pending
        while q and not q[0].alive:
            q.popleft()
        if len(q) > 4 * self.pending_cap:
            lk.pending = q = deque(x for x in q if x.alive)
        q.append(p)
        lk.alive += 1
        self.timeouts.append(p)
        if lk.alive > self.pending_cap:
            self._evict_oldest(lk)

    def _kill(self, p, lk):
        p.alive = False
        lk.alive -= 1

    def _evict_oldest(self, lk):
        q = lk.pending
        while q:
            old = q.popleft()
            if old.alive:
                self._kill(old, lk)
                for i in old.ids:
                    lst = lk.waiting.get(i)
                    if lst is not None and old in lst:
                        lst.remove(old)
                        if not lst:
                            del lk.waiting[i]
                self.evicted += 1
                return

    def _accept(self, tx, src_link, src_id, out, emit=True):
        """Index ``tx`` on every link and peel it from waiting codewords.

        Codewords reduced to one ID are validated and cascade through the
        same path; ``out`` collects the decoded transactions in order.
        """
        queue = deque([(tx, src_link, src_id)])
        if emit:
            out.append(tx)
        items = self._items
        log_ = self.decoded_log
        m = self.m
        while queue:
            tx, src_link, src_id = queue.popleft()
            value = tx.value
            memo = tx.id_memo
            payload = tx.payload
            per_link = []
            for link, lk in items:
                if link == src_link:
                    i = src_id
                else:
                    i = memo.get(lk.tag)
                    if i is None:
                        st = lk.base.copy()
                        st.update(payload)
                        i = memo[lk.tag] = int.from_bytes(st.digest(), "big") >> lk.shift
                per_link.append(i)
                lk.index[i] = tx
                lst = lk.waiting.pop(i, None)
                if lst is None:
                    continue
                for p in lst:
                    if not p.alive:
                        continue
                    p.value ^= value
                    p.xid ^= i
                    p.left -= 1
                    if p.left > 1:
                        continue
                    p.alive = False
                    lk.alive -= 1
                    if p.left == 0:
                        self.redundant += 1
                        continue
                    j = p.xid
                    rest = lk.waiting.get(j)
                    if rest is not None:
                        rest.remove(p)
                        if not rest:
                            del lk.waiting[j]
                    if j in lk.index:
                        # already known under this ID: nothing new to learn
                        self.redundant += 1
                        continue
                    new = self._validate(p.value, j, lk, p.arrival)
                    if new is not None:
                        # index under j now so later peels in this pass see it
                        lk.index[j] = new
                        out.append(new)
                        queue.append((new, link, j))
            # peeling window: forget the oldest decode beyond the last m
            log_.append((tx, per_link))
            if len(log_) > m:
                old, ids = log_.popleft()
                for (_, lk), i in zip(items, ids):
                    if lk.index.get(i) is old:
                        del lk.index[i]

    # -- timeouts ---------------------------------------------------------

    def scan_timeouts(self, now, tau):
        """One ``LossEvent`` per codeword still undecoded ``tau`` after arrival."""
        q = self.timeouts
        events = []
        while q:
            p = q[0]
            if p.alive and p.arrival + tau > now:
                break
            q.popleft()
            if p.alive and not p.reported:
                p.reported = True
                events.append(LossEvent(p.link, p.seqno, now))
        return events

    def next_deadline(self, tau):
        """Earliest time a still-pending codeword would time out, or None."""
        q = self.timeouts
        while q and not q[0].alive:
            q.popleft()
        return q[0].arrival + tau if q else None

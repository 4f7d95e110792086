"""A protocol node: per-peer sessions around one window and one decoder.

The node is a passive state machine.  Whoever drives it (the simulator, a
test) calls the ``on_*`` handlers and moves the returned messages between
nodes.  Message bodies on a link:

* CODEWORD: the codec wire format.
* LOSS_REPORT: ``count (2) | seqno (8) * count``, big-endian.
* KEY_EXCHANGE: the raw 16-byte key, sent once at session start.
"""

import random
import struct
from dataclasses import dataclass, field

from .codec import DEFAULT_TX_SIZE, Codeword, CodingWindow, encode, robust_soliton
from .decoder import DEFAULT_PEELING_WINDOW, Decoder
from .errors import ConfigError, EmptyWindowError, ParseError
from .fragmentation import DEFAULT_FRAGMENT_SIZE, Fragment, FragmentStore, reassemble_all
from .rate_control import DEFAULT_R_MAX, DEFAULT_R_MIN, RateController
from .txid import KEY_SIZE, KeyedHasher, new_key

CODEWORD, LOSS_REPORT, KEY_EXCHANGE = "codeword", "loss_report", "key_exchange"
_COUNT = struct.Struct(">H")
_SEQ = struct.Struct(">Q")
MAX_REPORT = 0xFFFF


@dataclass
class ProtocolParams:
    """Protocol knobs; defaults are the evaluation values of the design."""

    t: int = DEFAULT_TX_SIZE
    k: int = 50
    c: float = 0.03
    delta: float = 0.5
    max_degree: int = None  # None: no truncation (= k)
    gamma: float = 0.02
    alpha: float = 0.1
    tau: float = 0.0005
    h: int = 4
    m: int = DEFAULT_PEELING_WINDOW
    ell: int = DEFAULT_FRAGMENT_SIZE
    r0: float = None  # None: 2x the arrival rate over the peer count, else 100/s
    r_min: float = DEFAULT_R_MIN
    r_max: float = DEFAULT_R_MAX
    pending_cap: int = None  # None: 10 * k per link
    tick: float = None  # None: tau / 2

    def __post_init__(self):
        if self.max_degree is None:
            self.max_degree = self.k
        if self.pending_cap is None:
            self.pending_cap = 10 * self.k
        if self.tick is None:
            self.tick = self.tau / 2 if self.tau > 0 else 1e-4
        self.validate()

    def validate(self):
        checks = [
            ("t", self.t >= 1), ("k", self.k >= 1), ("c", self.c > 0),
            ("delta", 0 < self.delta < 1), ("max_degree", self.max_degree >= 1),
            ("gamma", 0 < self.gamma < 1), ("alpha", self.alpha > 0), ("tau", self.tau >= 0),
            ("h", 1 <= self.h <= 8), ("m", self.m >= 1), ("ell", self.ell >= 36),
            ("r_min", 0 < self.r_min <= self.r_max),
            ("r0", self.r0 is None or self.r0 > 0),
            ("pending_cap", self.pending_cap >= 1), ("tick", self.tick > 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"protocol.{name}: invalid value {getattr(self, name)!r}")

    def initial_rate(self, arrival_rate=None, degree=1):
        """r0 if set; otherwise twice the arrival rate shared over ``degree`` peers."""
        if self.r0 is not None:
            return self.r0
        return 2.0 * arrival_rate / max(degree, 1) if arrival_rate else 100.0


@dataclass
class PeerSession:
    peer: object
    ctrl: RateController
    in_key: bytes  # ours, handed to the peer; IDs on codewords from the peer use it
    out_hasher: KeyedHasher = None  # the peer's key; set by the key exchange
    seqno: int = 0
    sent: int = 0
    losses: int = 0  # loss events reported to us by the peer
    bytes_down: int = 0
    codewords_in: int = 0
    loss_events_out: int = 0  # loss events we reported to the peer


def encode_loss_report(seqnos):
    if not 1 <= len(seqnos) <= MAX_REPORT:
        raise ValueError(f"a loss report holds 1..{MAX_REPORT} seqnos")
    return _COUNT.pack(len(seqnos)) + b"".join(_SEQ.pack(s) for s in seqnos)


def decode_loss_report(data):
    if len(data) < 2:
        raise ParseError("truncated loss report")
    (n,) = _COUNT.unpack_from(data)
    if n == 0 or len(data) != 2 + 8 * n:
        raise ParseError(f"loss report of {len(data)} bytes claims {n} seqnos")
    return [_SEQ.unpack_from(data, 2 + 8 * i)[0] for i in range(n)]


def loss_report_size(n):
    return _COUNT.size + _SEQ.size * n


@dataclass
class NodeStats:
    bytes_down: int = 0
    decoded: int = 0  # distinct transactions first learned by decoding
    created: int = 0
    codewords_sent: int = 0
    codewords_in: int = 0
    parse_errors: int = 0
    reports_sent: int = 0
    extra: dict = field(default_factory=dict)


class Node:
    """Coded-broadcast node.

    ``censor`` is a predicate over transactions; when it holds, the
    transaction is still decoded but never enters this node's coding window.
    ``silent`` nodes receive and decode but never send anything.
    ``on_deliver(node, tx, now)`` fires once per transaction first learned by
    decoding; ``on_assembled(node, tx_bytes, now)`` fires for reassembled
    variable-size transactions when ``fragmented`` is set.
    """

    def __init__(self, node_id, params=None, seed=0, arrival_rate=None, intern=None,
                 censor=None, silent=False, fragmented=False, on_deliver=None, on_assembled=None):
        self.id = node_id
        self.params = p = params or ProtocolParams()
        self.rng = random.Random(seed)
        self.dist = robust_soliton(p.k, p.c, p.delta, p.max_degree)
        self.window = CodingWindow(p.k)
        self.decoder = Decoder(p.t, p.h, p.m, p.pending_cap, intern=intern)
        self.sessions = {}
        self.arrival_rate = arrival_rate
        self.censor = censor
        self.silent = silent
        self.fragmented = fragmented
        self.fragments = FragmentStore() if fragmented else None
        self.on_deliver = on_deliver
        self.on_assembled = on_assembled
        self.stats = NodeStats()

    # -- session setup ----------------------------------------------------

    def open_session(self, peer):
        """Create the session and return the KEY_EXCHANGE body for ``peer``."""
        if peer in self.sessions:
            raise ValueError(f"node {self.id}: duplicate session with {peer!r}")
        p = self.params
        key = new_key(self.rng)
        ctrl = RateController(p.initial_rate(self.arrival_rate), p.gamma, p.alpha, p.tau, p.r_min, p.r_max)
        self.sessions[peer] = PeerSession(peer, ctrl, key)
        self.decoder.add_link(peer, key)
        return key

    def spread_initial_rate(self):
        """Reset every session to the initial rate for the final peer count."""
        r = self.params.initial_rate(self.arrival_rate, len(self.sessions))
        for s in self.sessions.values():
            s.ctrl.r = min(max(r, s.ctrl.r_min), s.ctrl.r_max)

    def on_key_exchange(self, peer, key):
        if len(key) != KEY_SIZE:
            raise ParseError(f"key exchange carries {len(key)} bytes")
        self.sessions[peer].out_hasher = KeyedHasher(bytes(key), self.params.h)

    # -- local transactions ----------------------------------------------

    def on_local_transaction(self, tx, now):
        if len(tx.payload) != self.params.t:
            raise ConfigError(f"transaction of {len(tx.payload)} bytes, node configured for t={self.params.t}")
        if tx in self.window:
            return False
        self.stats.created += 1
        self._admit(tx)
        for new in self.decoder.add_known(tx):
            self._on_decoded(new, now)
        return True

    def _admit(self, tx):
        if self.censor is not None and self.censor(tx):
            self.window.seen.add(tx.payload)
            return
        self.window.insert(tx)

    # -- sending ----------------------------------------------------------

    def on_send_slot(self, peer, now):
        """Encode one codeword for ``peer``; returns ``(codeword or None, next slot time)``.

        Nothing is sent (and the rate is left alone) when the window is empty,
        the peer's key is unknown, or this node is silent.
        """
        s = self.sessions[peer]
        ctrl = s.ctrl
        if self.silent or s.out_hasher is None or not self.window.entries:
            return None, ctrl.next_send_time(now)
        try:
            cw = encode(self.window, self.dist, self.rng, s.out_hasher, s.seqno, self.params.h)
        except EmptyWindowError:
            return None, ctrl.next_send_time(now)
        s.seqno += 1
        s.sent += 1
        self.stats.codewords_sent += 1
        ctrl.on_codeword_sent()
        return cw, ctrl.next_send_time(now)

    # -- receiving --------------------------------------------------------

    def on_receive_codeword(self, peer, data, now):
        """Handle a CODEWORD from ``peer``.

        ``data`` is normally the wire bytes.  The simulator may hand over the
        ``Codeword`` object directly; its wire size is accounted identically.
        """
        s = self.sessions[peer]
        dec = self.decoder
        is_cw = isinstance(data, Codeword)
        size = 10 + len(data.ids) * self.params.h + len(data.payload) if is_cw else len(data)
        self.stats.bytes_down += size
        s.bytes_down += size
        try:
            if is_cw:
                decoded = dec._peel(peer, data.seqno, data.ids, int.from_bytes(data.payload, "big"), now)
            else:
                decoded = dec.ingest_wire(peer, data, now)
        except ParseError:
            self.stats.parse_errors += 1
            return []
        self.stats.codewords_in += 1
        s.codewords_in += 1
        for tx in decoded:
            self._on_decoded(tx, now)
        return decoded

    def _on_decoded(self, tx, now):
        if tx.payload in self.window.seen:
            return
        self.stats.decoded += 1
        self._admit(tx)
        if self.on_deliver is not None:
            self.on_deliver(self, tx, now)
        if self.fragmented:
            try:
                frag = Fragment.from_bytes(tx.payload)
            except ParseError:
                return
            for whole in reassemble_all(self.fragments, frag):
                if self.on_assembled is not None:
                    self.on_assembled(self, whole, now)

    # -- loss feedback ----------------------------------------------------

    def on_timeout_tick(self, now):
        """Scan for timed-out codewords; LOSS_REPORT bodies batched per inbound link."""
        events = self.decoder.scan_timeouts(now, self.params.tau)
        if not events or self.silent:
            return {}
        by_link = {}
        for ev in events:
            by_link.setdefault(ev.link, []).append(ev.seqno)
        out = {}
        for link, seqnos in by_link.items():
            self.sessions[link].loss_events_out += len(seqnos)
            bodies = [encode_loss_report(seqnos[i:i + MAX_REPORT]) for i in range(0, len(seqnos), MAX_REPORT)]
            out[link] = bodies
            self.stats.reports_sent += len(bodies)
        return out

    def on_loss_report(self, peer, data, now):
        """Apply a LOSS_REPORT from ``peer``: one rate increase per seqno.

        ``data`` may be the wire bytes or, from the simulator, the event count.
        """
        s = self.sessions[peer]
        if isinstance(data, int):
            n = data
            size = loss_report_size(n)
        else:
            size = len(data)
            try:
                n = len(decode_loss_report(data))
            except ParseError:
                n = 0
        self.stats.bytes_down += size
        s.bytes_down += size
        if n:
            s.losses += n
            s.ctrl.on_loss_report(n)
        return n

    def next_scan_time(self):
        """Next tick-aligned time at which a pending codeword can expire."""
        p = self.params
        deadline = self.decoder.next_deadline(p.tau)
        if deadline is None:
            return None
        n = -(-deadline // p.tick)
        t = n * p.tick
        return t if t >= deadline else deadline

"""Small self-contained experiments: code overhead, two-sender controller demo, codec benchmark."""

import gc
import hashlib
import logging
import random
import time
from dataclasses import dataclass, field

from .codec import CodingWindow, Transaction, encode, robust_soliton, serialize_codeword
from .decoder import Decoder
from .node import Node, ProtocolParams
from .sim.engine import EventQueue
from .txid import KeyedHasher, new_key

log = logging.getLogger(__name__)

PAPER_DECODE_TPS = 647_668  # reference point for the single-core decode benchmark


def random_transactions(n, size=128, seed=0):
    """``n`` distinct pseudo-random payloads (deterministic in ``seed``)."""
    rng = random.Random(seed)
    return [Transaction(rng.randbytes(size)) for _ in range(n)]


# -- code overhead ------------------------------------------------------------


def _peeling_window(k):
    # one sender, one receiver: only the last few windows' worth of decodes
    # can still appear in codewords, and a short peeling window keeps 4-byte
    # ID collisions (which would stall a single link for good) out of reach
    return 8 * k


def _link(seed, k):
    rng = random.Random(seed)
    key = new_key(rng)
    dec = Decoder(t=128, h=4, m=_peeling_window(k), pending_cap=1 << 30)
    dec.add_link("s", key)
    return rng, KeyedHasher(key, 4), dec


def block_lt_overhead(k, txs, c=0.03, delta=0.5, seed=0):
    """Codewords received per transaction decoded, fixed blocks of ``k``.

    Each block is encoded on its own until the receiver has all of it; a
    trailing partial block is dropped.
    """
    dist = robust_soliton(k, c, delta)
    rng, hasher, dec = _link(seed, k)
    sent = decoded = 0
    seq = 0
    for b in range(len(txs) // k):
        block = txs[b * k:(b + 1) * k]
        win = CodingWindow(k)
        for tx in block:
            win.insert(tx)
        missing = {tx.payload for tx in block}
        while missing:
            cw = encode(win, dist, rng, hasher, seq)
            seq += 1
            sent += 1
            for tx in dec.ingest("s", cw, 0.0):
                missing.discard(tx.payload)
        decoded += k
    return sent / decoded


def windowed_stream(k, txs, dist, rng, hasher, dec, link="s"):
    """Yield ``(codeword, newly decoded)`` until ``dec`` holds all of ``txs``.

    The sender's window slides forward while its oldest transaction is
    already decoded by the receiver (feedback stands in for a stream that
    arrives at the pace the link can carry).
    """
    win = CodingWindow(k)
    got = set()
    nxt = min(k, len(txs))
    for tx in txs[:nxt]:
        win.insert(tx)
    seq = 0
    stall = 0
    while len(got) < len(txs):
        if stall > 1000 * k:
            raise RuntimeError(f"no progress after {stall} codewords ({len(got)}/{len(txs)} decoded)")
        while nxt < len(txs) and win.entries[0].payload in got:
            win.insert(txs[nxt])
            nxt += 1
        cw = encode(win, dist, rng, hasher, seq)
        seq += 1
        new = dec.ingest(link, cw, 0.0)
        got.update(tx.payload for tx in new)
        stall = 0 if new else stall + 1
        yield cw, new


def windowed_lt_overhead(k, txs, c=0.03, delta=0.5, seed=0):
    """Codewords received per transaction decoded over a continuous stream."""
    dist = robust_soliton(k, c, delta)
    rng, hasher, dec = _link(seed, k)
    sent = sum(1 for _ in windowed_stream(k, txs, dist, rng, hasher, dec))
    return sent / len(txs)


def lt_overhead_comparison(ks=(16, 50, 128), n=10_000, c=0.03, delta=0.5, seed=1):
    """Rows ``{k, block, windowed, rel_diff}`` for each window size."""
    txs = random_transactions(n, seed=seed)
    rows = []
    for k in ks:
        b = block_lt_overhead(k, txs, c, delta, seed=seed)
        w = windowed_lt_overhead(k, txs, c, delta, seed=seed)
        rows.append({"k": k, "block": b, "windowed": w, "rel_diff": abs(w - b) / b})
    return rows


# -- two-sender controller demo ------------------------------------------------


@dataclass
class DemoConfig:
    unique_a: float = 600.0  # tps only A receives
    unique_b: float = 100.0
    shared: float = 400.0  # tps both receive
    delay: float = 0.01  # one-way A->P and B->P latency, seconds
    duration: float = 120.0
    interval: float = 1.0  # sampling interval
    seed: int = 7
    inits: tuple = ((1000.0, 1000.0), (3000.0, 300.0), (300.0, 3000.0))
    params: ProtocolParams = field(default_factory=lambda: ProtocolParams(tau=0.05))


def controller_demo_run(cfg, r_a, r_b, seed=None):
    """One run; returns rows ``(t, rate_A, rate_B, loss_A, loss_B)``.

    Loss columns are loss events per codeword over each sampling interval.
    """
    seed = cfg.seed if seed is None else seed
    q = EventQueue()
    rng = random.Random(seed)
    p = cfg.params
    a = Node("A", p, seed=seed * 3 + 1)
    b = Node("B", p, seed=seed * 3 + 2)
    peer = Node("P", p, seed=seed * 3 + 3)
    senders = {"A": a, "B": b}
    for s, r0 in ((a, r_a), (b, r_b)):
        key = peer.open_session(s.id)
        back = s.open_session("P")
        s.on_key_exchange("P", key)
        peer.on_key_exchange(s.id, back)
        s.sessions["P"].ctrl.r = r0
    counter = [0]
    scan = [None]

    def arrival(targets, rate):
        counter[0] += 1
        tx = Transaction(hashlib.sha256(b"%d:%d" % (seed, counter[0])).digest() * 4, q.now)
        for n in targets:
            n.on_local_transaction(tx, q.now)
        t = q.now + rng.expovariate(rate)
        if t <= cfg.duration:
            q.schedule(t, arrival, targets, rate)

    def send(s):
        cw, nxt = s.on_send_slot("P", q.now)
        if cw is not None:
            q.schedule(q.now + cfg.delay, recv, s.id, cw)
        q.schedule(nxt, send, s)

    def recv(src, cw):
        peer.on_receive_codeword(src, cw, q.now)
        if scan[0] is None:
            arm()

    def arm():
        t = peer.next_scan_time()
        scan[0] = t
        if t is not None:
            q.schedule(t, tick)

    def tick():
        scan[0] = None
        for link, bodies in peer.on_timeout_tick(q.now).items():
            for body in bodies:
                q.schedule(q.now + cfg.delay, senders[link].on_loss_report, "P", body, q.now + cfg.delay)
        arm()

    rows = []
    last = {"A": (0, 0), "B": (0, 0)}

    def sample():
        row = [round(q.now, 6)]
        rates, losses = [], []
        for name, s in senders.items():
            sess = s.sessions["P"]
            ps = peer.sessions[name]
            sent0, lost0 = last[name]
            sent, lost = sess.sent, ps.loss_events_out
            last[name] = (sent, lost)
            rates.append(sess.ctrl.r)
            losses.append((lost - lost0) / (sent - sent0) if sent > sent0 else 0.0)
        rows.append(tuple(row + rates + losses))
        if q.now + cfg.interval <= cfg.duration + 1e-9:
            q.schedule(q.now + cfg.interval, sample)

    for targets, rate in (((a,), cfg.unique_a), ((b,), cfg.unique_b), ((a, b), cfg.shared)):
        if rate > 0:
            q.schedule(rng.expovariate(rate), arrival, targets, rate)
    q.schedule(0.0, send, a)
    q.schedule(0.0, send, b)
    q.schedule(0.0, sample)
    q.run(cfg.duration)
    return rows


def steady_state(rows, tail=0.5):
    """Mean rates and loss rates over the last ``tail`` fraction of a run."""
    part = rows[int(len(rows) * (1 - tail)):]
    n = len(part)
    return {
        "rate_A": sum(r[1] for r in part) / n,
        "rate_B": sum(r[2] for r in part) / n,
        "loss_A": sum(r[3] for r in part) / n,
        "loss_B": sum(r[4] for r in part) / n,
    }


def controller_demo(cfg=None):
    """Run every initialization; returns ``[(init, rows, steady)]``."""
    cfg = cfg or DemoConfig()
    out = []
    for r_a, r_b in cfg.inits:
        rows = controller_demo_run(cfg, r_a, r_b)
        out.append(((r_a, r_b), rows, steady_state(rows)))
    return out


# -- codec benchmark -------------------------------------------------------------


def bench_encode(n_codewords=100_000, k=50, t=128, seed=0):
    """Encode ``n_codewords`` from a fixed full window, serialized to wire bytes."""
    txs = random_transactions(k, t, seed)
    win = CodingWindow(k)
    for tx in txs:
        win.insert(tx)
    rng = random.Random(seed)
    hasher = KeyedHasher(new_key(rng))
    dist = robust_soliton(k)
    total = 0
    t0 = time.perf_counter()
    for s in range(n_codewords):
        total += len(serialize_codeword(encode(win, dist, rng, hasher, s)))
    dt = time.perf_counter() - t0
    return {"codewords": n_codewords, "seconds": dt, "codewords_per_s": n_codewords / dt,
            "mbps": total * 8 / dt / 1e6}


def make_stream(n_tx=100_000, k=50, t=128, seed=0):
    """Wire-format codeword stream that decodes all ``n_tx`` transactions.

    Built with the windowed sender and a reference decoder; it comes out at
    roughly 1.3-1.4 codewords per transaction for k=50.
    """
    txs = random_transactions(n_tx, t, seed)
    rng = random.Random(seed + 1)
    key = new_key(rng)
    ref = Decoder(t=t, m=_peeling_window(k), pending_cap=1 << 30)
    ref.add_link(0, key)
    gen = windowed_stream(k, txs, robust_soliton(k), rng, KeyedHasher(key), ref, link=0)
    stream = [serialize_codeword(cw) for cw, _ in gen]
    return txs, key, stream


def _decode_once(stream, key, k, t):
    dec = Decoder(t=t, m=_peeling_window(k), pending_cap=1 << 30)
    dec.add_link(0, key)
    decoded = []
    t0 = time.perf_counter()
    for data in stream:
        decoded.extend(dec.ingest_wire(0, data, 0.0))
    return decoded, time.perf_counter() - t0


def bench_decode(n_tx=100_000, k=50, t=128, seed=0, repeat=5):
    """Time a fresh decoder over a prepared stream (parsing included).

    The stream is first decoded once untimed and checked against the source
    transactions; then ``repeat`` timed passes run with the garbage collector
    off and the fastest one is reported.
    """
    txs, key, stream = make_stream(n_tx, k, t, seed=seed)
    decoded, _ = _decode_once(stream, key, k, t)
    ok = sorted(tx.payload for tx in decoded) == sorted(tx.payload for tx in txs)
    if not ok:
        raise AssertionError("decoder output does not match the encoded transactions")
    times = []
    was = gc.isenabled()
    gc.disable()
    try:
        for _ in range(max(1, repeat)):
            decoded, dt = _decode_once(stream, key, k, t)
            times.append(dt)
    finally:
        if was:
            gc.enable()
    dt = min(times)
    nbytes = sum(map(len, stream))
    return {
        "transactions": n_tx,
        "codewords": len(stream),
        "codewords_per_tx": len(stream) / n_tx,
        "seconds": dt,
        "seconds_all": times,
        "tx_per_s": len(decoded) / dt,
        "codewords_per_s": len(stream) / dt,
        "mbps_in": nbytes * 8 / dt / 1e6,
        "mbps_out": len(decoded) * t * 8 / dt / 1e6,
        "correct": ok,
        "paper_tx_per_s": PAPER_DECODE_TPS,
    }

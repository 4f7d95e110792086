"""Independent reference implementations for the tests.

Nothing here imports from ``codecast`` except where a check explicitly needs
the keyed ID function under test as a black box (collision search).
"""

import hashlib
import heapq
import math


# -- peeling-order GF(2) solver ----------------------------------------------


def gf2_solve_peel_order(rows):
    """Transactions recoverable through degree-1 cascades.

    ``rows`` is a list of ``(set of unknown names, payload bytes)``.  Returns
    ``{name: payload}``.  Plain fixed-point iteration: substitute every known
    unknown into every equation, harvest equations left with one unknown,
    repeat until nothing changes.
    """
    eqs = [(set(ids), bytes(p)) for ids, p in rows]
    known = {}
    changed = True
    while changed:
        changed = False
        nxt = []
        for ids, p in eqs:
            ids = set(ids)
            for x in list(ids):
                if x in known:
                    ids.discard(x)
                    p = _xor(p, known[x])
            if len(ids) == 1:
                (x,) = ids
                if x not in known:
                    known[x] = p
                    changed = True
                continue
            if ids:
                nxt.append((ids, p))
        eqs = nxt
    return known


def gf2_rank(rows, names):
    """Rank of the 0/1 incidence matrix (full Gaussian elimination)."""
    col = {n: i for i, n in enumerate(names)}
    vecs = [sum(1 << col[x] for x in ids) for ids, _ in rows]
    rank = 0
    for bit in range(len(names)):
        piv = next((i for i in range(rank, len(vecs)) if vecs[i] >> bit & 1), None)
        if piv is None:
            continue
        vecs[rank], vecs[piv] = vecs[piv], vecs[rank]
        for i in range(len(vecs)):
            if i != rank and vecs[i] >> bit & 1:
                vecs[i] ^= vecs[rank]
        rank += 1
    return rank


def _xor(a, b):
    return bytes(x ^ y for x, y in zip(a, b))


# -- controller scalar replay -------------------------------------------------


def controller_replay(events, r0, gamma=0.02, alpha=0.1, r_min=1.0, r_max=1e6):
    """Rate after a sequence of ``"send"`` / ``"loss"`` events, one at a time."""
    r = min(r_max, max(r_min, float(r0)))
    for ev in events:
        if ev == "send":
            r = max(r_min, r * (1 - alpha * gamma))
        elif ev == "loss":
            r = min(r_max, r * (1 + alpha))
        else:
            raise ValueError(ev)
    return r


def controller_fixed_point_loss(gamma, alpha):
    """Loss frequency at which the expected log-rate change per codeword is 0.

    Solves ``log(1 - a*g) + p*log(1 + a) = 0`` for ``p``; for small ``alpha``
    it approaches ``gamma``.
    """
    return -math.log(1 - alpha * gamma) / math.log(1 + alpha)


# -- shortest paths -------------------------------------------------------------


def shortest_path_delays(n, edges, src, start=0.0):
    """Dijkstra over ``[(u, v, delay)]``; returns a list of arrival times.

    Distances accumulate hop by hop from ``start`` (the send time), the same
    left-to-right float sums a packet's arrival time goes through, so the
    result can be compared for exact equality.
    """
    adj = [[] for _ in range(n)]
    for u, v, d in edges:
        adj[u].append((v, d))
        adj[v].append((u, d))
    dist = [math.inf] * n
    dist[src] = start
    heap = [(start, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


# -- fragment size brute force --------------------------------------------------


def fragment_bytes_brute(size, ell, header=35):
    """Bytes on the wire for one ``size``-byte transaction, by counting."""
    cap = ell - header
    used = 0
    frags = 0
    while used < size:
        used += cap
        frags += 1
    return frags * ell


def optimal_fragment_size_brute(hist, lo, hi, header=35):
    best = None
    total = sum(s * w for s, w in hist.items())
    for ell in range(lo, hi + 1):
        wire = sum(w * fragment_bytes_brute(s, ell, header) for s, w in hist.items())
        ov = wire / total
        if best is None or ov < best[1] - 1e-15:
            best = (ell, ov)
    return best


# -- collision search ---------------------------------------------------------------


class SearchBudgetExceeded(RuntimeError):
    pass


def keyed_id(key, payload, h):
    """Reference keyed ID: BLAKE2b-64 keyed with ``key``, first ``h`` bytes."""
    return int.from_bytes(hashlib.blake2b(payload, key=key, digest_size=8).digest()[:h], "big")


def collision_search(key, target, h, t=128, budget=1 << 20, start=0):
    """A ``t``-byte payload whose keyed ID under ``key`` equals ``target``.

    Returns ``(payload, trials)``.
    """
    if h > 2:
        raise ValueError("collision search is meant for h <= 2 bytes")
    for i in range(start, start + budget):
        payload = hashlib.sha256(b"collide:%d" % i).digest() * (t // 32) + bytes(t % 32)
        if keyed_id(key, payload, h) == target:
            return payload, i - start + 1
    raise SearchBudgetExceeded(f"no collision within {budget} trials")

"""Windowed LT encoding of a transaction stream.

A node keeps the ``k`` most recent transactions it created or decoded in a
FIFO coding window and emits codewords: the XOR of ``d`` window entries, where
``d`` is drawn from a Robust Soliton distribution, together with the keyed
IDs of those entries.
"""

import bisect
import functools
import math
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import ConfigError, EmptyWindowError, ParseError
from .txid import DEFAULT_ID_SIZE, KeyedHasher

DEFAULT_TX_SIZE = 128
HEADER = struct.Struct(">QH")


class Transaction:
    """Opaque fixed-size payload plus its creation time.

    ``value`` caches the payload as a big-endian integer (XOR arithmetic) and
    ``id_memo`` memoizes keyed IDs per hasher; clearing it only costs
    recomputation.
    """

    __slots__ = ("payload", "created_at", "value", "id_memo")

    def __init__(self, payload, created_at=0.0):
        self.payload = bytes(payload)
        self.created_at = created_at
        self.value = int.from_bytes(self.payload, "big")
        self.id_memo = {}

    @classmethod
    def from_parts(cls, payload, value, created_at=0.0):
        """Build from a payload whose integer value is already known."""
        tx = cls.__new__(cls)
        tx.payload = payload
        tx.created_at = created_at
        tx.value = value
        tx.id_memo = {}
        return tx

    def __eq__(self, other):
        if not isinstance(other, Transaction):
            return NotImplemented
        return self.payload == other.payload

    def __hash__(self):
        return hash(self.payload)

    def __len__(self):
        return len(self.payload)

    def __repr__(self):
        return f"Transaction({self.payload[:6].hex()}..., created_at={self.created_at:g})"


@dataclass(frozen=True)
class DegreeDistribution:
    k: int
    c: float
    delta: float
    max_degree: int
    pmf: tuple
    S: float
    beta: float
    cdf: tuple = field(repr=False)

    @property
    def support(self):
        return range(1, len(self.pmf) + 1)

    def mean(self):
        return sum(d * p for d, p in zip(self.support, self.pmf))

    def sample(self, rng):
        d = bisect.bisect_right(self.cdf, rng.random()) + 1
        return min(d, len(self.pmf))


def robust_soliton(k, c=0.03, delta=0.5, max_degree=None):
    """Robust Soliton PMF over degrees ``1..min(k, max_degree)``.

    The spike sits at ``ceil(k/S)`` and is dropped when that lies beyond
    ``k``.  Truncation to ``max_degree`` renormalizes the remaining mass.
    """
    if max_degree is None:
        max_degree = k
    if not isinstance(k, int) or k < 1:
        raise ConfigError(f"window size k must be a positive integer, got {k!r}")
    if not isinstance(max_degree, int) or max_degree < 1:
        raise ConfigError(f"max_degree must be a positive integer, got {max_degree!r}")
    if not c > 0:
        raise ConfigError(f"c must be positive, got {c!r}")
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta!r}")

    S = c * math.log(k / delta) * math.sqrt(k)
    pivot = math.ceil(k / S)
    weights = []
    for i in range(1, k + 1):
        rho = 1.0 / k if i == 1 else 1.0 / (i * (i - 1))
        if i < pivot:
            spike = S / (i * k)
        elif i == pivot:
            spike = S * math.log(S / delta) / k
        else:
            spike = 0.0
        weights.append(rho + spike)
    beta = math.fsum(weights)

    n = min(k, max_degree)
    kept = weights[:n]
    total = math.fsum(kept)
    pmf = tuple(w / total for w in kept)
    cdf = []
    acc = 0.0
    for p in pmf:
        acc += p
        cdf.append(acc)
    cdf[-1] = 1.0
    return DegreeDistribution(k, c, delta, max_degree, pmf, S, beta, tuple(cdf))


class CodingWindow:
    """FIFO of the ``k`` most recent transactions, deduplicated by payload.

    ``seen`` remembers every payload ever inserted, so a transaction decoded
    from several peers enters the window once.
    """

    def __init__(self, k):
        if k < 1:
            raise ConfigError(f"coding window size must be >= 1, got {k}")
        self.k = k
        self.entries = []
        self.seen = set()

    def __len__(self):
        return len(self.entries)

    def __contains__(self, tx):
        return tx.payload in self.seen

    def insert(self, tx):
        if tx.payload in self.seen:
            return False
        self.seen.add(tx.payload)
        if len(self.entries) >= self.k:
            del self.entries[0]
        self.entries.append(tx)
        return True

    def id_of(self, index, hasher):
        return hasher.of(self.entries[index])


def window_insert(window, tx):
    return window.insert(tx)


class Codeword(NamedTuple):
    seqno: int
    ids: tuple
    payload: bytes

    @property
    def degree(self):
        return len(self.ids)

    def wire_size(self, h=DEFAULT_ID_SIZE):
        return HEADER.size + h * len(self.ids) + len(self.payload)


def sample_indices(rng, n, d):
    """``d`` distinct indices out of ``range(n)``, sorted.

    Rejection sampling when ``d`` is small next to ``n``, partial
    Fisher-Yates otherwise.
    """
    if 4 * d <= n:
        rnd = rng.random
        got = set()
        while len(got) < d:
            got.add(int(rnd() * n))
        return sorted(got)
    idx = list(range(n))
    for i in range(d):
        j = i + int(rng.random() * (n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:d])


def encode(window, dist, rng, link_key, seqno, h=DEFAULT_ID_SIZE):
    """One codeword from the current window.

    ``link_key`` is the receiving peer's key (bytes or a ``KeyedHasher``).
    The sampled degree is clamped to the window population.
    """
    entries = window.entries
    n = len(entries)
    if n == 0:
        raise EmptyWindowError("nothing to encode")
    hasher = link_key if isinstance(link_key, KeyedHasher) else KeyedHasher(link_key, h)
    rnd = rng.random
    cdf = dist.cdf
    d = bisect.bisect_right(cdf, rnd()) + 1
    if d > len(cdf):
        d = len(cdf)
    if d > n:
        d = n
    if 4 * d <= n:
        # same draws as sample_indices, inlined
        got = set()
        while len(got) < d:
            got.add(int(rnd() * n))
        chosen = sorted(got)
    else:
        chosen = sample_indices(rng, n, d)
    tag = hasher.tag
    value = 0
    ids = []
    for i in chosen:
        tx = entries[i]
        value ^= tx.value
        memo = tx.id_memo
        j = memo.get(tag)
        if j is None:
            j = memo[tag] = hasher(tx.payload)
        ids.append(j)
    t = len(entries[chosen[0]].payload)
    return Codeword(seqno, tuple(ids), value.to_bytes(t, "big"))


def serialize_codeword(cw, h=DEFAULT_ID_SIZE):
    """``seqno(8) | degree(2) | ids (h bytes each) | payload``, big-endian."""
    return HEADER.pack(cw.seqno, len(cw.ids)) + b"".join(i.to_bytes(h, "big") for i in cw.ids) + cw.payload


_ID_FORMATS = {1: "B", 2: "H", 4: "I", 8: "Q"}


@functools.lru_cache(maxsize=1024)
def _ids_struct(d, h):
    fmt = _ID_FORMATS.get(h)
    return struct.Struct(f">{d}{fmt}") if fmt else None


def parse_codeword_fields(data, t=DEFAULT_TX_SIZE, h=DEFAULT_ID_SIZE):
    """``(seqno, ids, payload as int)`` from wire bytes."""
    body = len(data) - HEADER.size - t
    if body <= 0 or body % h:
        raise ParseError(f"codeword of {len(data)} bytes does not fit t={t}, h={h}")
    seqno, d = HEADER.unpack_from(data)
    if d == 0 or d * h != body:
        raise ParseError(f"header claims degree {d} but body holds {body // h} IDs")
    off = HEADER.size
    st = _ids_struct(d, h)
    if st is not None:
        ids = st.unpack_from(data, off)
    else:
        ids = tuple(int.from_bytes(data[off + i * h: off + (i + 1) * h], "big") for i in range(d))
    return seqno, ids, int.from_bytes(data[off + d * h:], "big")


def deserialize_codeword(data, t=DEFAULT_TX_SIZE, h=DEFAULT_ID_SIZE):
    seqno, ids, value = parse_codeword_fields(data, t, h)
    return Codeword(seqno, ids, value.to_bytes(t, "big"))

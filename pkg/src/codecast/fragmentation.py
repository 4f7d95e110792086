"""Fixed-size, hash-chained fragments for variable-size transactions.

Wire layout of one fragment (exactly ``ell`` bytes)::

    flags (1) | prev_hash (32) | data_len (2, big-endian) | data (ell - 35, zero padded)

``prev_hash`` is the SHA-256 of the previous fragment's serialized bytes and
is all-zero on the FIRST fragment.  Every fragment therefore names the unique
prefix it extends, which makes reassembly unambiguous even when an adversary
injects fragments of its own.
"""

import hashlib
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass

from .errors import ConfigError, ParseError

FIRST = 0x01
LAST = 0x02
HASH_SIZE = 32
HEADER_SIZE = 1 + HASH_SIZE + 2
DEFAULT_FRAGMENT_SIZE = 128
ZERO_HASH = bytes(HASH_SIZE)
_LEN = struct.Struct(">H")


@dataclass(frozen=True)
class Fragment:
    flags: int
    prev_hash: bytes
    data: bytes  # used bytes only; padding is added on serialization
    ell: int = DEFAULT_FRAGMENT_SIZE

    @property
    def first(self):
        return bool(self.flags & FIRST)

    @property
    def last(self):
        return bool(self.flags & LAST)

    @property
    def capacity(self):
        return self.ell - HEADER_SIZE

    def to_bytes(self):
        pad = self.capacity - len(self.data)
        return (bytes((self.flags,)) + self.prev_hash + _LEN.pack(len(self.data))
                + self.data + bytes(pad))

    def hash(self):
        return hashlib.sha256(self.to_bytes()).digest()

    @classmethod
    def from_bytes(cls, raw):
        ell = len(raw)
        if ell <= HEADER_SIZE:
            raise ParseError(f"fragment of {ell} bytes has no room for data")
        flags = raw[0]
        prev_hash = bytes(raw[1:1 + HASH_SIZE])
        (n,) = _LEN.unpack_from(raw, 1 + HASH_SIZE)
        if n > ell - HEADER_SIZE or flags & ~(FIRST | LAST):
            raise ParseError("malformed fragment header")
        if bool(flags & FIRST) != (prev_hash == ZERO_HASH):
            raise ParseError("FIRST flag and prev_hash disagree")
        data = bytes(raw[HEADER_SIZE:HEADER_SIZE + n])
        return cls(flags, prev_hash, data, ell)


def fragment(tx_bytes, ell=DEFAULT_FRAGMENT_SIZE):
    if ell < HEADER_SIZE + 1:
        raise ConfigError(f"fragment size {ell} leaves no room for data (need >= {HEADER_SIZE + 1})")
    if not tx_bytes:
        raise ValueError("cannot fragment an empty transaction")
    cap = ell - HEADER_SIZE
    count = math.ceil(len(tx_bytes) / cap)
    out = []
    prev = ZERO_HASH
    for i in range(count):
        flags = (FIRST if i == 0 else 0) | (LAST if i == count - 1 else 0)
        frag = Fragment(flags, prev, bytes(tx_bytes[i * cap:(i + 1) * cap]), ell)
        out.append(frag)
        prev = frag.hash()
    return out


class FragmentStore:
    """Fragments awaiting reassembly, keyed by their own hash, FIFO-bounded.

    ``rooted`` holds the stored fragments whose hash chain reaches a FIRST
    fragment; a fragment joins it once, when its predecessor does, so
    completing a chain costs time linear in its length.  On completion only
    the LAST fragment is dropped.  Interior fragments may be the prefix of
    another chain (an identical leading fragment, or an injected fake tail),
    so they stay until capacity eviction.
    """

    def __init__(self, capacity=1_000_000):
        self.capacity = capacity
        self.frags = OrderedDict()
        self.children = {}  # prev_hash -> set of fragment hashes
        self.rooted = set()

    def __len__(self):
        return len(self.frags)

    def __contains__(self, frag_hash):
        return frag_hash in self.frags

    def add(self, frag):
        """Store ``frag``; returns ``(key, LAST fragments that just became rooted)``."""
        key = frag.hash()
        if key in self.frags:
            return key, []
        self.frags[key] = frag
        if not frag.first:
            self.children.setdefault(frag.prev_hash, set()).add(key)
        done = []
        if frag.first or frag.prev_hash in self.rooted:
            done = self._root(key)
        while len(self.frags) > self.capacity:
            self._remove(next(iter(self.frags)))
        return key, [k for k in done if k in self.frags]

    def _root(self, key):
        lasts = []
        stack = [key]
        while stack:
            k = stack.pop()
            if k in self.rooted or k not in self.frags:
                continue
            self.rooted.add(k)
            if self.frags[k].last:
                lasts.append(k)
            stack.extend(sorted(self.children.get(k, ()), reverse=True))
        return lasts

    def _remove(self, key):
        frag = self.frags.pop(key, None)
        if frag is None:
            return
        self.rooted.discard(key)
        if frag.first:
            return
        sibs = self.children.get(frag.prev_hash)
        if sibs is not None:
            sibs.discard(key)
            if not sibs:
                del self.children[frag.prev_hash]

    def chain_back(self, key):
        """Fragments from FIRST to ``key``, or None if a link is missing."""
        chain = []
        seen = set()
        while key is not None:
            frag = self.frags.get(key)
            if frag is None or key in seen:
                return None
            seen.add(key)
            chain.append(frag)
            key = None if frag.first else frag.prev_hash
        chain.reverse()
        return chain


def reassemble_all(store, frag):
    """Store ``frag``; return every transaction whose chain it just completed.

    The arriving fragment can complete a chain either as its LAST fragment or
    by filling a gap below LAST fragments already stored.  Several chains can
    complete at once when an adversary grafted its own tail onto an honest
    prefix; all of them are returned and downstream validation decides.
    """
    _, lasts = store.add(frag)
    out = []
    for last in lasts:
        chain = store.chain_back(last)
        if chain is not None:
            store._remove(last)
            out.append(b"".join(f.data for f in chain))
    return out


def reassemble(store, frag):
    """Like ``reassemble_all`` but returns only the first completed transaction, or None."""
    done = reassemble_all(store, frag)
    return done[0] if done else None


def fragment_overhead(size_histogram, ell):
    cap = ell - HEADER_SIZE
    frag_bytes = sum(w * math.ceil(s / cap) * ell for s, w in size_histogram.items())
    tx_bytes = sum(w * s for s, w in size_histogram.items())
    return frag_bytes / tx_bytes


def optimal_fragment_size(size_histogram, ell_range):
    """Exhaustive search for the ``ell`` minimizing fragment bytes per tx byte.

    Returns ``(ell, overhead)``; the smallest ``ell`` wins ties.
    """
    if not size_histogram:
        raise ValueError("size histogram is empty")
    lo, hi = ell_range
    if lo < HEADER_SIZE + 1 or hi < lo:
        raise ConfigError(f"bad fragment size range [{lo}, {hi}]")
    if any(s <= 0 or w < 0 for s, w in size_histogram.items()) or not sum(size_histogram.values()) > 0:
        raise ValueError("histogram needs positive sizes and non-negative weights")
    best = None
    for ell in range(lo, hi + 1):
        ov = fragment_overhead(size_histogram, ell)
        if best is None or ov < best[1]:
            best = (ell, ov)
    return best

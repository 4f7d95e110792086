"""Keyed short transaction identifiers.

Each node hands every peer a fresh 16-byte secret.  The peer computes the IDs
it puts in codeword headers with that secret, so ID collisions an attacker
could engineer under one key say nothing about any other link.
"""

import hashlib

KEY_SIZE = 16
DEFAULT_ID_SIZE = 4

_TAGS = {}  # (key, h) -> small int naming the memo slot


def new_key(rng):
    """Draw a fresh link key from a seeded ``random.Random``."""
    return rng.getrandbits(8 * KEY_SIZE).to_bytes(KEY_SIZE, "big")


def txid(key, payload, h=DEFAULT_ID_SIZE):
    """Keyed 64-bit BLAKE2b of ``payload`` truncated to ``h`` bytes.

    IDs are handled as unsigned integers (the big-endian value of those
    ``h`` bytes); ``id_bytes`` gives the wire form.
    """
    return int.from_bytes(hashlib.blake2b(payload, key=key, digest_size=8).digest()[:h], "big")


def id_bytes(i, h=DEFAULT_ID_SIZE):
    return i.to_bytes(h, "big")


class KeyedHasher:
    """``txid`` bound to one key; reuses the keyed BLAKE2b state."""

    __slots__ = ("key", "h", "_base", "_shift", "tag")

    def __init__(self, key, h=DEFAULT_ID_SIZE):
        if len(key) != KEY_SIZE:
            raise ValueError(f"link key must be {KEY_SIZE} bytes, got {len(key)}")
        if not 1 <= h <= 8:
            raise ValueError(f"ID size must be in 1..8 bytes, got {h}")
        self.key = key
        self.h = h
        self._base = hashlib.blake2b(key=key, digest_size=8)
        self._shift = 8 * (8 - h)
        # memo slot; hashers built from equal keys may share it
        self.tag = _TAGS.setdefault((key, h), len(_TAGS))

    def __call__(self, payload):
        s = self._base.copy()
        s.update(payload)
        return int.from_bytes(s.digest(), "big") >> self._shift

    def of(self, tx):
        """ID of a ``Transaction``, memoized in ``tx.id_memo`` under this key."""
        memo = tx.id_memo
        i = memo.get(self.tag)
        if i is None:
            s = self._base.copy()
            s.update(tx.payload)
            i = memo[self.tag] = int.from_bytes(s.digest(), "big") >> self._shift
        return i

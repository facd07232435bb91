"""Deterministic, domain-separated random streams.

A stream is numpy's Philox (counter-based) generator keyed by
``(master_seed, purpose, a, b)``: the master seed fills the low key word and
the domain is packed injectively into the high word, so streams for distinct
domains never coincide and any one can be re-created on its own.
"""

import numpy as np

# purpose codes
SIGNATURE = 1
PARTITION = 2
KEYS = 3
TRIAL = 4
ATTACK = 5
PAYLOAD = 6

_MASK64 = (1 << 64) - 1


def domain_key(master_seed, purpose, a=0, b=0) -> int:
    """128-bit Philox key for a domain; seed < 2^64, purpose < 2^8, a < 2^24, b < 2^32."""
    if not 0 <= int(master_seed) <= _MASK64:
        raise ValueError(f"master seed {master_seed} outside 0..2^64-1")
    if not (0 <= purpose < 1 << 8 and 0 <= a < 1 << 24 and 0 <= b < 1 << 32):
        raise ValueError(f"domain ({purpose}, {a}, {b}) out of range")
    packed = (purpose << 56) | (a << 32) | b
    return int(master_seed) | (packed << 64)


def stream(master_seed, purpose, a=0, b=0) -> np.random.Generator:
    """An independent generator for the domain."""
    return np.random.Generator(np.random.Philox(key=domain_key(master_seed, purpose, a, b)))


def derive_seed(master_seed, purpose, a=0, b=0) -> int:
    """A 64-bit seed derived from the domain."""
    return int(stream(master_seed, purpose, a, b).integers(0, 2**64, dtype=np.uint64))


class StreamFactory:
    """Re-keys a single Philox instance per request; much cheaper than
    building a new bit generator each time.

    The generator returned by :meth:`get` is only valid until the next call;
    it produces exactly the same draws as :func:`stream` for that domain.
    """

    def __init__(self):
        self._bg = np.random.Philox(key=0)
        self._gen = np.random.Generator(self._bg)

    def get(self, master_seed, purpose, a=0, b=0) -> np.random.Generator:
        key = domain_key(master_seed, purpose, a, b)
        self._bg.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.zeros(4, dtype=np.uint64),
                      "key": np.array([key & _MASK64, key >> 64], dtype=np.uint64)},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen

    def derive_seed(self, master_seed, purpose, a=0, b=0) -> int:
        return int(self.get(master_seed, purpose, a, b).integers(0, 2**64, dtype=np.uint64))


_factory = StreamFactory()


def shared(master_seed, purpose, a=0, b=0) -> np.random.Generator:
    """Module-wide :class:`StreamFactory` stream; use-and-discard only."""
    return _factory.get(master_seed, purpose, a, b)

"""Pairwise one-time key material and authenticated one-time-pad channels.

Keys model ideal QKD output: shared uniform bits, never reused. Every
envelope is encrypted with fresh pad bits and authenticated with a one-time
polynomial-evaluation hash over GF(2^64) keyed by two fresh 64-bit words.
"""

from __future__ import annotations

import copy
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .errors import (
    AuthFailure,
    InsufficientKeyFileError,
    KeyExhaustedError,
    KeyFileFormatError,
)
from .params import SIGNER, ProtocolParams, key_budget

TAG_BITS = 64
KEY_MAGIC = b"USSK"
KEY_VERSION = 1
_HEADER = struct.Struct("<4sHHHHI")  # magic, version, id A, id B, reserved, bit length
KEYDIR_ENV = "USS_KEYDIR"

# x^64 + x^4 + x^3 + x + 1
_GF_REDUCE = 0x1B
_MASK64 = (1 << 64) - 1


def gf64_mul(a: int, b: int) -> int:
    """Carry-less product of two 64-bit words reduced mod the field polynomial."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        carry = a >> 63
        a = (a << 1) & _MASK64
        if carry:
            a ^= _GF_REDUCE
    return r


def _bits_to_words(bits: np.ndarray) -> list[int]:
    # zero-pad to whole 64-bit words; the length word added by poly_hash
    # keeps padded messages distinct
    pad = (-len(bits)) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    packed = np.packbits(bits.astype(np.uint8), bitorder="little")
    return [int(w) for w in packed.view("<u8")] if len(packed) else []


def _word_from_bits(bits: np.ndarray) -> int:
    return int(np.packbits(bits.astype(np.uint8), bitorder="little").view("<u8")[0])


def poly_hash(key: int, pad: int, seq: int, bits: np.ndarray) -> int:
    """One-time tag: pad XOR (sum of message words times powers of key).

    The hashed words are (seq, bit length, ciphertext words...), evaluated
    by Horner's rule. A substitution succeeds with probability at most
    (word count) / 2^64.
    """
    words = [seq & _MASK64, len(bits) & _MASK64, *_bits_to_words(bits)]
    acc = 0
    for w in words:
        acc = gf64_mul(acc ^ w, key)
    return acc ^ pad


def pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class AuthenticatedEnvelope:
    sender: int
    receiver: int
    seq: int
    ciphertext: np.ndarray
    tag: int


@dataclass
class KeyPool:
    """Shared key bits for each unordered pair plus a consumption ledger.

    A single pool stands in for both ends of every link: both parties derive
    identical offsets, so the pool records the allocation made by each send
    and the receiver replays it.
    """

    pair_keys: dict[tuple[int, int], np.ndarray]
    tag_bits: int = TAG_BITS
    consumed: dict[tuple[int, int], int] = field(default_factory=dict)
    _next_seq: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)
    _recv_seq: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)
    _allocations: dict[tuple[int, int, int], tuple[int, int]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self):
        if self.tag_bits != TAG_BITS:
            raise ValueError("only 64-bit tags are supported")
        for key in self.pair_keys:
            self.consumed.setdefault(key, 0)

    def available(self, a: int, b: int) -> int:
        key = pair(a, b)
        if key not in self.pair_keys:
            return 0
        return len(self.pair_keys[key]) - self.consumed[key]

    def clone(self) -> "KeyPool":
        return copy.deepcopy(self)

    def _take(self, key: tuple[int, int], count: int) -> int:
        have = len(self.pair_keys.get(key, ())) - self.consumed.get(key, 0)
        if count > have:
            raise KeyExhaustedError(
                f"link {key} needs {count} key bits, {max(have, 0)} left"
            )
        start = self.consumed[key]
        self.consumed[key] = start + count
        return start


def envelope_key_bits(payload_bits: int, tag_bits: int = TAG_BITS) -> int:
    return payload_bits + 2 * tag_bits


def secure_send(pool: KeyPool, a: int, b: int, payload) -> AuthenticatedEnvelope:
    payload = np.asarray(payload, dtype=np.uint8)
    key = pair(a, b)
    start = pool._take(key, envelope_key_bits(len(payload), pool.tag_bits))
    material = pool.pair_keys[key]
    pad = material[start:start + len(payload)]
    t0 = start + len(payload)
    hash_key = _word_from_bits(material[t0:t0 + 64])
    tag_pad = _word_from_bits(material[t0 + 64:t0 + 128])
    seq = pool._next_seq.get((a, b), 0)
    pool._next_seq[(a, b)] = seq + 1
    pool._allocations[(a, b, seq)] = (start, len(payload))
    ciphertext = payload ^ pad
    return AuthenticatedEnvelope(a, b, seq, ciphertext, poly_hash(hash_key, tag_pad, seq, ciphertext))


def secure_recv(pool: KeyPool, e: AuthenticatedEnvelope) -> np.ndarray:
    """Check sequence number and tag, then decrypt."""
    link = (e.sender, e.receiver)
    expected = pool._recv_seq.get(link, 0)
    if e.seq != expected:
        raise AuthFailure(f"link {link}: sequence {e.seq}, expected {expected}")
    alloc = pool._allocations.get((e.sender, e.receiver, expected))
    if alloc is None:
        raise KeyExhaustedError(f"link {link}: no key material for sequence {expected}")
    # burn the envelope's key material whatever the outcome
    pool._recv_seq[link] = expected + 1
    start, length = alloc
    material = pool.pair_keys[pair(*link)]
    ciphertext = np.asarray(e.ciphertext, dtype=np.uint8)
    t0 = start + length
    hash_key = _word_from_bits(material[t0:t0 + 64])
    tag_pad = _word_from_bits(material[t0 + 64:t0 + 128])
    if len(ciphertext) != length or poly_hash(hash_key, tag_pad, e.seq, ciphertext) != e.tag:
        raise AuthFailure(f"link {link}: tag mismatch on sequence {e.seq}")
    return ciphertext ^ material[start:start + length]


# -- provisioning ---------------------------------------------------------


def link_requirements(p: ProtocolParams, tag_bits: int = TAG_BITS) -> dict[tuple[int, int], int]:
    """Key bits each link needs for one distribution run, tags included.

    Signer links carry one envelope per message; each recipient pair carries
    one envelope per message in each direction.
    """
    budget = key_budget(p)
    M = p.num_messages
    req = {}
    for i in p.recipients:
        req[(SIGNER, i)] = budget.signer_link_bits + M * 2 * tag_bits
        for j in p.recipients:
            if i < j:
                req[(i, j)] = budget.peer_link_bits + 2 * M * 2 * tag_bits
    return req


@dataclass(frozen=True)
class SeededRandom:
    seed: int


@dataclass(frozen=True)
class FileIngest:
    directory: Path

    @classmethod
    def from_env(cls) -> "FileIngest":
        root = os.environ.get(KEYDIR_ENV)
        if not root:
            raise KeyFileFormatError(f"{KEYDIR_ENV} is not set")
        return cls(Path(root))


def provision_keys(p: ProtocolParams, source, tag_bits: int = TAG_BITS) -> KeyPool:
    req = link_requirements(p, tag_bits)
    if isinstance(source, SeededRandom):
        keys = {}
        for (a, b), bits in req.items():
            g = rng.stream(source.seed, rng.KEYS, a, b)
            keys[(a, b)] = g.integers(0, 2, size=bits, dtype=np.uint8)
        return KeyPool(keys, tag_bits=tag_bits)
    if isinstance(source, FileIngest):
        found = read_key_dir(source.directory)
        for link, bits in req.items():
            have = len(found.get(link, ()))
            if have < bits:
                raise InsufficientKeyFileError(
                    f"link {link}: key file holds {have} bits, need {bits}"
                )
        return KeyPool({k: v for k, v in found.items() if k in req}, tag_bits=tag_bits)
    raise TypeError(f"unknown key source {source!r}")


# -- key files ------------------------------------------------------------


def write_key_file(path, a: int, b: int, bits) -> None:
    bits = np.asarray(bits, dtype=np.uint8)
    a, b = pair(a, b)
    header = _HEADER.pack(KEY_MAGIC, KEY_VERSION, a, b, 0, len(bits))
    Path(path).write_bytes(header + np.packbits(bits, bitorder="little").tobytes())


def read_key_file(path) -> tuple[tuple[int, int], np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise KeyFileFormatError(f"{path}: truncated header")
    magic, version, a, b, _, nbits = _HEADER.unpack_from(raw)
    if magic != KEY_MAGIC:
        raise KeyFileFormatError(f"{path}: bad magic {magic!r}")
    if version != KEY_VERSION:
        raise KeyFileFormatError(f"{path}: unsupported version {version}")
    if a == b:
        raise KeyFileFormatError(f"{path}: key shared with self")
    body = raw[_HEADER.size:]
    if len(body) != (nbits + 7) // 8:
        raise KeyFileFormatError(
            f"{path}: header says {nbits} bits, body has {len(body)} bytes"
        )
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8), bitorder="little")[:nbits]
    return pair(a, b), bits


def read_key_dir(directory) -> dict[tuple[int, int], np.ndarray]:
    directory = Path(directory)
    if not directory.is_dir():
        raise KeyFileFormatError(f"{directory}: not a directory")
    keys = {}
    for path in sorted(directory.glob("*.key")):
        link, bits = read_key_file(path)
        if link in keys:
            raise KeyFileFormatError(f"{path}: duplicate key for link {link}")
        keys[link] = bits
    return keys


def export_pool(pool: KeyPool, directory) -> None:
    """Write each link's full key material as ``<a>_<b>.key``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (a, b), bits in sorted(pool.pair_keys.items()):
        write_key_file(directory / f"{a}_{b}.key", a, b, bits)


def payload_bits(pool: KeyPool) -> dict[tuple[int, int], int]:
    """Key bits spent on envelope payloads per link, tags excluded."""
    out = {k: 0 for k in pool.pair_keys}
    for (a, b, _), (_, length) in pool._allocations.items():
        out[pair(a, b)] += length
    return out


def consumption_report(pool: KeyPool) -> list[dict]:
    payload = payload_bits(pool)
    return [
        {"link": [a, b], "consumed": pool.consumed[(a, b)], "payload": payload[(a, b)],
         "total": len(bits)}
        for (a, b), bits in sorted(pool.pair_keys.items())
    ]

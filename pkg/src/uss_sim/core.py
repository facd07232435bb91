"""Distribution stage, signing, fragment tests and leveled verification.

Indexing conventions used throughout: recipients are 1..N, the signer is 0,
positions are 0-based. Per-recipient arrays are indexed ``[x, j - 1]`` where
``j`` is the recipient whose section the entry belongs to.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import keystore, rng
from .errors import (
    DivisibilityError,
    LevelOutOfRange,
    ReusedMessage,
    SnapshotFormatError,
    UnknownMessage,
)
from .params import (
    SIGNER,
    ProtocolParams,
    ValidatedParams,
    fraction_threshold,
    params_from_mapping,
    position_bits,
    validate_params,
)

SNAPSHOT_MAGIC = b"USSS"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Fragment:
    v: np.ndarray
    p: np.ndarray


@dataclass(frozen=True, eq=False)
class Signature:
    message: int
    bits: np.ndarray
    n: int

    @property
    def sections(self) -> np.ndarray:
        """The N contiguous n-bit sections as an (N, n) view."""
        return self.bits.reshape(-1, self.n)

    @classmethod
    def from_sections(cls, message: int, sections) -> "Signature":
        sections = np.asarray(sections, dtype=np.uint8)
        return cls(message, sections.reshape(-1).copy(), sections.shape[-1])

    @classmethod
    def from_bits(cls, message: int, bits, n: int) -> "Signature":
        bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
        if len(bits) % n:
            raise ValueError(f"signature length {len(bits)} not a multiple of n={n}")
        return cls(message, bits.copy(), n)

    def flipped(self, indices) -> "Signature":
        bits = self.bits.copy()
        bits[np.asarray(list(indices), dtype=np.int64)] ^= 1
        return Signature(self.message, bits, self.n)

    def __eq__(self, other):
        if not isinstance(other, Signature):
            return NotImplemented
        return self.message == other.message and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass
class SignerState:
    params: ValidatedParams
    signatures: np.ndarray  # (M, N, n)
    used: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.used:
            self.used = [False] * len(self.signatures)


@dataclass(frozen=True)
class RecipientState:
    """Everything recipient ``id`` holds after distribution.

    ``positions[x, j-1]`` / ``values[x, j-1]`` form the verification matrix
    row: the fragment of section j this recipient tests. ``created[x, k-1]``
    is the partition this recipient drew for its own section, i.e. the
    positions it handed to recipient k.
    """

    id: int
    params: ValidatedParams
    sections: np.ndarray  # (M, n)
    positions: np.ndarray  # (M, N, m)
    values: np.ndarray  # (M, N, m)
    created: np.ndarray  # (M, N, m)

    def fragment(self, x: int, j: int) -> Fragment:
        return Fragment(self.values[x, j - 1], self.positions[x, j - 1])


@dataclass(frozen=True)
class TranscriptRecord:
    step: int
    sender: int
    receiver: int
    message: int
    bits: int
    tag: str

    def to_json(self) -> str:
        return json.dumps(
            {"step": self.step, "sender": self.sender, "receiver": self.receiver,
             "message": self.message, "payload_bits": self.bits, "tag": self.tag},
            sort_keys=True,
        )


def partition_positions(gen: np.random.Generator, n: int, N: int) -> np.ndarray:
    """Uniformly random ordered partition of range(n) into N sorted sets of n/N.

    Row k of the (N, n/N) result is the k-th set.
    """
    if n % N:
        raise DivisibilityError(f"n={n} is not divisible by N={N}")
    perm = gen.permutation(n).reshape(N, n // N)
    perm.sort(axis=1)
    return perm


def _encode_positions(pos: np.ndarray, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros(0, dtype=np.uint8)
    shifts = np.arange(width)
    return ((pos[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def _decode_positions(bits: np.ndarray, count: int, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros(count, dtype=np.int64)
    return (bits.reshape(count, width).astype(np.int64) << np.arange(width)).sum(axis=1)


def _draw(p: ValidatedParams, master_seed=None):
    """Signatures and partitions for all messages, from the master seed."""
    N, n, M, m = p.num_recipients, p.n, p.num_messages, p.m
    seed = p.master_seed if master_seed is None else master_seed
    signatures = np.empty((M, N, n), dtype=np.uint8)
    partitions = np.empty((N, M, N, m), dtype=np.int64)  # [i-1, x, k-1] = p_{i,k}
    for x in range(M):
        g = rng.shared(seed, rng.SIGNATURE, SIGNER, x)
        signatures[x] = g.integers(0, 2, size=(N, n), dtype=np.uint8)
        for i in range(1, N + 1):
            partitions[i - 1, x] = partition_positions(rng.shared(seed, rng.PARTITION, i, x), n, N)
    return signatures, partitions


def _assemble(p, sections, partitions, values=None, created=None):
    """Build recipient states from received sections and partitions.

    ``sections[i-1, x]`` is what recipient i holds for its own section and
    ``partitions[j-1, x, i-1]`` the positions of section j that i holds.
    ``values`` (holder-major) and ``created`` default to what honest
    parties would compute from those.
    """
    N, M = p.num_recipients, p.num_messages
    held = np.transpose(partitions, (2, 1, 0, 3))  # [i-1, x, j-1, :] = p_{j,i}
    if values is None:
        j_idx = np.arange(N)[None, None, :, None]
        x_idx = np.arange(M)[None, :, None, None]
        values = sections[j_idx, x_idx, held]
    if created is None:
        created = partitions
    return [
        RecipientState(id=i, params=p, sections=sections[i - 1],
                       positions=held[i - 1], values=values[i - 1],
                       created=created[i - 1])
        for i in range(1, N + 1)
    ]


def deal(p: ProtocolParams, master_seed=None) -> tuple[SignerState, list[RecipientState]]:
    """Honest distribution over ideal secure channels (no key accounting).

    ``master_seed`` overrides ``p.master_seed``; the returned states still
    carry ``p``.
    """
    p = validate_params(p)
    signatures, partitions = _draw(p, master_seed)
    sections = signatures.transpose(1, 0, 2)  # [i-1, x, :]
    return SignerState(p, signatures), _assemble(p, sections, partitions)


def run_distribution(p: ProtocolParams, pool: keystore.KeyPool):
    """Run steps 2-4 over authenticated one-time-pad channels.

    Returns ``(signer, recipients, transcript)``. Recipient states are built
    only from decrypted payloads, so any channel failure surfaces here.
    """
    p = validate_params(p)
    N, n, M, m = p.num_recipients, p.n, p.num_messages, p.m
    width = position_bits(n)
    signatures, partitions = _draw(p)
    transcript: list[TranscriptRecord] = []

    def transfer(step, a, b, x, payload):
        env = keystore.secure_send(pool, a, b, payload)
        transcript.append(TranscriptRecord(step, a, b, x, len(payload), f"{env.tag:016x}"))
        return keystore.secure_recv(pool, env)

    received_sections = np.empty((N, M, n), dtype=np.uint8)
    for x in range(M):
        for i in range(1, N + 1):
            received_sections[i - 1, x] = transfer(2, SIGNER, i, x, signatures[x, i - 1])

    received = partitions.copy()
    received_vals = np.empty((N, M, N, m), dtype=np.uint8)  # [i-1, x, j-1] = v_{j,i}
    for x in range(M):
        for i in range(1, N + 1):
            own = received_sections[i - 1, x]
            for j in range(1, N + 1):
                pos = partitions[i - 1, x, j - 1]
                if i == j:
                    received_vals[j - 1, x, i - 1] = own[pos]
                    continue
                payload = np.concatenate([own[pos], _encode_positions(pos, width)])
                got = transfer(4, i, j, x, payload)
                received_vals[j - 1, x, i - 1] = got[:m]
                # j records p_{i,j}; stored in the sender-major partition table
                received[i - 1, x, j - 1] = _decode_positions(got[m:], m, width)

    states = _assemble(p, received_sections, received, received_vals, partitions)
    return SignerState(p, signatures), states, transcript


def sign(s: SignerState, x: int) -> Signature:
    if not 0 <= x < s.params.num_messages:
        raise UnknownMessage(f"message {x} not in 0..{s.params.num_messages - 1}")
    if s.used[x]:
        raise ReusedMessage(f"message {x} was already signed")
    s.used[x] = True
    return Signature.from_sections(x, s.signatures[x])


def _check_level(p, level):
    if level not in p.levels:
        raise LevelOutOfRange(f"level {level} not in -1..{p.l_max}")


def _as_sections(p, sigma) -> np.ndarray:
    if isinstance(sigma, Signature):
        bits = sigma.bits
    else:
        bits = np.asarray(sigma, dtype=np.uint8)
    if bits.ndim >= 2 and bits.shape[-2:] == (p.num_recipients, p.n):
        return bits
    if bits.shape[-1] != p.K:
        raise ValueError(f"signature must have K={p.K} bits, got shape {bits.shape}")
    return bits.reshape(bits.shape[:-1] + (p.num_recipients, p.n))


def fragment_test(r: RecipientState, x: int, j: int, section_bits, level: int) -> int:
    p = r.params
    _check_level(p, level)
    section_bits = np.asarray(section_bits, dtype=np.uint8)
    if section_bits.shape != (p.n,):
        raise ValueError(f"section must have {p.n} bits")
    frag = r.fragment(x, j)
    h = int(np.count_nonzero(section_bits[frag.p] != frag.v))
    return int(h < p.s(level) * p.m)


def hamming_matrix(states: Sequence[RecipientState], x: int, sigma) -> np.ndarray:
    """Mismatch counts h[..., r, j] of recipient ``states[r]`` on section j.

    ``sigma`` may be a Signature, a (K,) / (N, n) bit array, or a batch
    (B, K) / (B, N, n); batch dimensions lead the result.
    """
    p = states[0].params
    sections = _as_sections(p, sigma)
    P = np.stack([st.positions[x] for st in states])  # (R, N, m)
    V = np.stack([st.values[x] for st in states])
    j_idx = np.arange(p.num_recipients)[None, :, None]
    gathered = sections[..., j_idx, P]
    return np.count_nonzero(gathered != V, axis=-1)


def tests_passed(p: ProtocolParams, h: np.ndarray, level: int) -> np.ndarray:
    """Elementwise h < s_level * m, exact."""
    s = p.s(level)
    return h * s.denominator < s.numerator * p.m


def accepts(p: ProtocolParams, count, level: int):
    """count > N * f_level, exact."""
    f = fraction_threshold(p, level)
    return np.asarray(count) * f.denominator > p.num_recipients * f.numerator


def pass_counts(states, x, sigma, level) -> np.ndarray:
    p = states[0].params
    _check_level(p, level)
    return tests_passed(p, hamming_matrix(states, x, sigma), level).sum(axis=-1)


def verify_all(states, x, sigma, level) -> np.ndarray:
    """Ver at ``level`` for each state, vectorised."""
    p = states[0].params
    return accepts(p, pass_counts(states, x, sigma, level), level)


def verify(r: RecipientState, x: int, sigma, level: int) -> bool:
    return bool(verify_all([r], x, sigma, level)[..., 0])


def max_levels(p: ProtocolParams, h: np.ndarray) -> np.ndarray:
    """Highest level each row of ``h`` verifies at; -2 when it fails at -1.

    Relies on level monotonicity: thresholds only tighten as level grows.
    """
    out = np.full(h.shape[:-1], -2, dtype=np.int64)
    for level in p.levels:
        ok = accepts(p, tests_passed(p, h, level).sum(axis=-1), level)
        out = np.where(ok, level, out)
    return out


# -- persistence ----------------------------------------------------------


def write_transcript(path, transcript) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in transcript:
            fh.write(rec.to_json() + "\n")


def save_snapshot(path, signer: SignerState, states: Sequence[RecipientState]) -> None:
    buf = io.BytesIO()
    meta = json.dumps({"params": signer.params.to_dict()}, sort_keys=True).encode()
    np.savez(
        buf,
        meta=np.frombuffer(meta, dtype=np.uint8),
        signatures=signer.signatures,
        used=np.array(signer.used, dtype=bool),
        ids=np.array([st.id for st in states]),
        sections=np.stack([st.sections for st in states]),
        positions=np.stack([st.positions for st in states]),
        values=np.stack([st.values for st in states]),
        created=np.stack([st.created for st in states]),
    )
    header = SNAPSHOT_MAGIC + struct.pack("<HH", SNAPSHOT_VERSION, 0)
    with open(path, "wb") as fh:
        fh.write(header + buf.getvalue())


def load_snapshot(path) -> tuple[SignerState, list[RecipientState]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: not a state snapshot")
    (version, _) = struct.unpack_from("<HH", raw, 4)
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported snapshot version {version}")
    try:
        data = np.load(io.BytesIO(raw[8:]), allow_pickle=False)
        meta = json.loads(bytes(data["meta"]).decode())
    except (ValueError, KeyError, OSError) as exc:
        raise SnapshotFormatError(f"{path}: corrupt snapshot") from exc
    p = validate_params(params_from_mapping(meta["params"]))
    signer = SignerState(p, data["signatures"], [bool(u) for u in data["used"]])
    states = [
        RecipientState(int(i), p, data["sections"][k], data["positions"][k],
                       data["values"][k], data["created"][k])
        for k, i in enumerate(data["ids"])
    ]
    return signer, states

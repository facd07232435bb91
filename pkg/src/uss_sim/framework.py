"""Signature classification, majority-vote dispute resolution, attack
indicators, and exhaustive acceptance-set enumeration.

Everything here works over a list of post-distribution recipient states and
only calls into leveled verification, so the definitions stay independent of
how the states were produced.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import core
from .errors import CoalitionRoleError, InstanceTooLarge, LevelOutOfRange, ValidationError
from .params import SIGNER

VALID = "Valid"
INVALID = "Invalid"
TRANSFERABLE = "l-transferable"
NOT_TRANSFERABLE = "not l-transferable"

REP, FORG, NONTRANS = "Rep", "Forg", "NonTrans"
MAX_ENUMERATION_BITS = 24


@dataclass(frozen=True)
class SignatureClassification:
    authentic: bool
    valid: bool
    acceptable_by: frozenset
    fraudulent_for: frozenset
    per_recipient_max_level: dict  # id -> level, None when it fails at level 0
    l_transferable: Optional[int]

    def to_json(self) -> str:
        d = asdict(self)
        d["acceptable_by"] = sorted(self.acceptable_by)
        d["fraudulent_for"] = sorted(self.fraudulent_for)
        d["per_recipient_max_level"] = {str(k): v for k, v in self.per_recipient_max_level.items()}
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class DisputeVerdict:
    verdict: str
    accepting: frozenset
    level: int  # level the votes were taken at

    def to_json(self) -> str:
        return json.dumps({"verdict": self.verdict, "accepting": sorted(self.accepting),
                           "vote_level": self.level}, sort_keys=True)


def _ids(states):
    return np.array([st.id for st in states])


def classify_signature(states, x, sigma, authentic_ref=None) -> SignatureClassification:
    p = states[0].params
    ids = _ids(states)
    top = core.max_levels(p, core.hamming_matrix(states, x, sigma))
    acceptable = frozenset(int(i) for i in ids[top >= 0])
    valid = len(acceptable) == len(states)
    per = {int(i): (int(t) if t >= 0 else None) for i, t in zip(ids, top)}
    lowest = int(top.min())
    if authentic_ref is None:
        authentic = False
    else:
        ref = authentic_ref.bits if isinstance(authentic_ref, core.Signature) else authentic_ref
        bits = sigma.bits if isinstance(sigma, core.Signature) else sigma
        authentic = bool(np.array_equal(np.ravel(ref), np.ravel(bits)))
    return SignatureClassification(
        authentic=authentic,
        valid=valid,
        acceptable_by=acceptable,
        fraudulent_for=frozenset() if valid else acceptable,
        per_recipient_max_level=per,
        # verification at l_max + 1 counts as False, so the cap is l_max
        l_transferable=lowest if lowest >= 0 else None,
    )


def _majority(states, x, sigma, level, dishonest):
    ok = core.verify_all(states, x, sigma, level)
    dishonest = frozenset(dishonest)
    accepting = frozenset(
        int(st.id) for st, v in zip(states, ok) if v and st.id not in dishonest
    )
    return accepting, 2 * len(accepting) > len(states)


def mv_dispute(states, x, sigma, dishonest: Iterable[int] = ()) -> DisputeVerdict:
    """Valid iff strictly more than N/2 recipients verify at level -1.

    Recipients listed in ``dishonest`` vote Invalid regardless of their
    verification result.
    """
    accepting, win = _majority(states, x, sigma, -1, dishonest)
    return DisputeVerdict(VALID if win else INVALID, accepting, -1)


def mv_transfer_dispute(states, x, sigma, level, dishonest: Iterable[int] = ()) -> DisputeVerdict:
    p = states[0].params
    if not 0 <= level <= p.l_max:
        raise LevelOutOfRange(f"transfer level {level} not in 0..{p.l_max}")
    accepting, win = _majority(states, x, sigma, level - 1, dishonest)
    return DisputeVerdict(TRANSFERABLE if win else NOT_TRANSFERABLE, accepting, level - 1)


def attack_indicator(kind, coalition, states, x, sigma, level=None, target=None) -> int:
    """1 if ``sigma`` is a successful attack of ``kind`` by ``coalition``.

    ``target`` restricts Forg to one honest recipient (the fixed-target
    variant); by default any honest recipient counts. For Rep, coalition
    recipients vote Invalid in the dispute.
    """
    coalition = frozenset(coalition)
    has_signer = SIGNER in coalition
    if kind == FORG and has_signer:
        raise CoalitionRoleError("a forging coalition cannot include the signer")
    if kind in (REP, NONTRANS) and not has_signer:
        raise CoalitionRoleError(f"{kind} requires the signer in the coalition")
    if kind not in (REP, FORG, NONTRANS):
        raise ValidationError(f"unknown attack kind {kind!r}")
    p = states[0].params
    honest = [st for st in states if st.id not in coalition]
    if not honest:
        return 0

    if kind == FORG:
        if target is not None:
            if target in coalition:
                raise CoalitionRoleError(f"target {target} is in the coalition")
            honest = [st for st in honest if st.id == target]
        return int(core.verify_all(honest, x, sigma, 0).any())

    if kind == REP:
        if not core.verify_all(honest, x, sigma, 0).any():
            return 0
        return int(mv_dispute(states, x, sigma, dishonest=coalition).verdict == INVALID)

    if level is None or not 1 <= level <= p.l_max:
        raise LevelOutOfRange(f"NonTrans level must be in 1..{p.l_max}, got {level}")
    top = core.max_levels(p, core.hamming_matrix(honest, x, sigma))
    # failing at some 0 <= l' < level is failing at level - 1; such a
    # recipient can never also pass at level, so the two sets are disjoint
    return int(bool(np.any(top >= level)) and bool(np.any(top < level - 1)))


@dataclass(frozen=True)
class SetReport:
    sigma_space: int
    coalition_set: int  # |S_C|
    honest_sets: dict = field(default_factory=dict)  # id -> |S_i|
    intersections: dict = field(default_factory=dict)  # id -> |S_i & S_C|

    def forging_ratio(self, i) -> float:
        return self.intersections[i] / self.coalition_set if self.coalition_set else 0.0

    def acceptance_ratio(self, i) -> float:
        return self.honest_sets[i] / self.sigma_space

    def to_json(self) -> str:
        return json.dumps({
            "sigma_space": self.sigma_space,
            "coalition_set": self.coalition_set,
            "honest": {str(i): {"size": self.honest_sets[i],
                                "intersection": self.intersections[i],
                                "forging_ratio": self.forging_ratio(i),
                                "acceptance_ratio": self.acceptance_ratio(i)}
                       for i in sorted(self.honest_sets)},
        }, sort_keys=True)


def acceptance_masks(states, x, level, chunk=1 << 16):
    """Boolean (2^K, R) table: does states[r] accept signature number b.

    Bit k of ``b`` is signature bit k.
    """
    p = states[0].params
    K = p.K
    if K > MAX_ENUMERATION_BITS:
        raise InstanceTooLarge(f"K={K} exceeds enumeration limit {MAX_ENUMERATION_BITS}")
    total = 1 << K
    shifts = np.arange(K, dtype=np.int64)
    out = np.empty((total, len(states)), dtype=bool)
    for start in range(0, total, chunk):
        b = np.arange(start, min(total, start + chunk), dtype=np.int64)
        bits = ((b[:, None] >> shifts) & 1).astype(np.uint8)
        out[start:start + len(b)] = core.verify_all(states, x, bits, level)
    return out


def enumerate_acceptance_sets(states, x, coalition, level=0) -> SetReport:
    coalition = frozenset(coalition) - {SIGNER}
    masks = acceptance_masks(states, x, level)
    ids = [st.id for st in states]
    cols = {i: masks[:, k] for k, i in enumerate(ids)}
    members = [cols[c] for c in coalition if c in cols]
    # empty coalition constrains nothing
    s_c = np.logical_and.reduce(members) if members else np.ones(len(masks), dtype=bool)
    honest = [i for i in ids if i not in coalition]
    return SetReport(
        sigma_space=len(masks),
        coalition_set=int(s_c.sum()),
        honest_sets={i: int(cols[i].sum()) for i in honest},
        intersections={i: int((cols[i] & s_c).sum()) for i in honest},
    )

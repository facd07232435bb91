"""Coalition knowledge pooling and the forging / tampering strategies.

Attacks act on frozen post-distribution states: a deviation during
distribution is equivalent to honest distribution followed by a later
deviation, so nothing is lost by attacking afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from . import core
from .errors import CoalitionTooLarge, LevelOrderError, LevelOutOfRange, RoleError
from .params import SIGNER

ANY = "any"


@dataclass(frozen=True)
class CoalitionView:
    """The union of what the coalition members hold, and nothing else.

    ``fragments[c]`` is member c's verification matrix row (positions and
    values, ``[x, j-1]``); ``spy[c]`` the partition c drew for its own
    section, whose values c also knows.
    """

    members: frozenset
    sections: dict = field(default_factory=dict)  # c -> (M, n)
    fragments: dict = field(default_factory=dict)  # c -> (positions, values)
    spy: dict = field(default_factory=dict)  # c -> (positions, values), [x, k-1]
    signatures: np.ndarray = None  # (M, N, n) when the signer is a member

    @property
    def has_signer(self) -> bool:
        return SIGNER in self.members

    @property
    def recipients(self) -> frozenset:
        return self.members - {SIGNER}


def pool_knowledge(states, coalition: Iterable[int], p=None, signer=None) -> CoalitionView:
    """Collect members' stored data. ``signer`` is the SignerState, needed
    only when the signer is a member."""
    p = p or states[0].params
    members = frozenset(coalition)
    recips = members - {SIGNER}
    bad = [c for c in recips if c not in p.recipients]
    if bad:
        raise RoleError(f"unknown participants {sorted(bad)}")
    if len(recips) > p.capacity:
        raise CoalitionTooLarge(
            f"{len(recips)} dishonest recipients exceed floor(N*d_f) = {p.capacity}"
        )
    by_id = {st.id: st for st in states}
    sections, fragments, spy = {}, {}, {}
    for c in sorted(recips):
        st = by_id[c]
        sections[c] = st.sections
        fragments[c] = (st.positions, st.values)
        x_idx = np.arange(p.num_messages)[:, None, None]
        spy[c] = (st.created, st.sections[x_idx, st.created])
    sigs = None
    if SIGNER in members:
        if signer is None:
            raise RoleError("signer is in the coalition but no signer state given")
        sigs = signer.signatures
    return CoalitionView(members, sections, fragments, spy, sigs)


def forge_attempt(view: CoalitionView, p, x: int, gen: np.random.Generator,
                  target: Union[int, str] = ANY) -> core.Signature:
    """One candidate: known bits where the coalition has them, coins elsewhere.

    The construction does not depend on ``target``; it is checked only so a
    caller cannot aim at a coalition member.
    """
    if view.has_signer:
        raise RoleError("forging coalitions exclude the signer")
    if target != ANY and target in view.members:
        raise RoleError(f"target {target} is a coalition member")
    N, n = p.num_recipients, p.n
    cand = gen.integers(0, 2, size=(N, n), dtype=np.uint8)
    for c in view.recipients:
        positions, values = view.fragments[c]
        for j in range(1, N + 1):
            cand[j - 1, positions[x, j - 1]] = values[x, j - 1]
    for c in view.recipients:
        cand[c - 1] = view.sections[c][x]
    return core.Signature.from_sections(x, cand)


def optimal_error_rate(p, level: int, lower_level: int):
    """(s_level + s_lower) / 2, the error rate balancing both Hoeffding tails."""
    return (p.s(level) + p.s(lower_level)) / 2


def tamper_attempt(view: CoalitionView, p, x: int, level: int, lower_level: int,
                   target_pass: int, target_fail, gen: np.random.Generator,
                   p_e=None) -> core.Signature:
    """Start from the authentic signature and push two honest recipients apart.

    Coalition sections: positions handed to ``target_pass`` stay intact and
    every position handed to each ``target_fail`` recipient is flipped.
    Honest sections: each bit flips independently with probability ``p_e``
    (default: the balancing rate for the two levels).
    """
    if not view.has_signer:
        raise RoleError("tampering requires the signer in the coalition")
    if lower_level >= level:
        raise LevelOrderError(f"need lower level < level, got {lower_level} >= {level}")
    for lv in (level, lower_level):
        if lv not in p.levels:
            raise LevelOutOfRange(f"level {lv} not in -1..{p.l_max}")
    fails = [target_fail] if np.isscalar(target_fail) else list(target_fail)
    for t in [target_pass, *fails]:
        if t in view.members or t not in p.recipients:
            raise RoleError(f"target {t} is not an honest recipient")
    if target_pass in fails:
        raise RoleError("target_pass cannot also be a fail target")
    rate = float(optimal_error_rate(p, level, lower_level) if p_e is None else p_e)
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"p_e must lie in [0, 1], got {rate}")

    sig = view.signatures[x].copy()
    N, n = p.num_recipients, p.n
    flips = gen.random((N, n)) < rate
    for c in view.recipients:
        flips[c - 1] = False
    sig ^= flips.astype(np.uint8)
    for c in view.recipients:
        created, _ = view.spy[c]
        for t in fails:
            sig[c - 1, created[x, t - 1]] ^= 1
    return core.Signature.from_sections(x, sig)

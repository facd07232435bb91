"""Public protocol constants, their validation, and derived quantities.

All thresholds are held as :class:`fractions.Fraction` so that the test and
vote comparisons stay exact.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping

from .errors import (
    DivisibilityError,
    LevelBudgetError,
    LevelOutOfRange,
    MissingLevelError,
    ThresholdOrderError,
    ValidationError,
)

SIGNER = 0
HALF = Fraction(1, 2)
# n below this multiple of N triggers a warning (no hard requirement known)
ADVISORY_N_FACTOR = 8


class SecurityParameterWarning(UserWarning):
    """Signature length looks small relative to the number of recipients."""


def as_fraction(value: Any) -> Fraction:
    """Parse ints, decimal strings, ``"p/q"`` strings, floats and Fractions."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"not a fraction: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # shortest repr, so 0.1 becomes 1/10 rather than a binary expansion
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"not a fraction: {value!r}") from exc
    raise ValidationError(f"not a fraction: {value!r}")


@dataclass(frozen=True)
class ProtocolParams:
    num_recipients: int
    n: int
    num_messages: int
    dishonest_fraction: Fraction
    l_max: int
    s_thresholds: Mapping[int, Fraction]
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dishonest_fraction", as_fraction(self.dishonest_fraction))
        object.__setattr__(
            self,
            "s_thresholds",
            {int(k): as_fraction(v) for k, v in dict(self.s_thresholds).items()},
        )

    @property
    def N(self) -> int:
        return self.num_recipients

    @property
    def M(self) -> int:
        return self.num_messages

    @property
    def K(self) -> int:
        """Total signature length in bits."""
        return self.n * self.num_recipients

    @property
    def m(self) -> int:
        """Fragment length n/N."""
        return self.n // self.num_recipients

    @property
    def levels(self) -> range:
        return range(-1, self.l_max + 1)

    @property
    def recipients(self) -> range:
        return range(1, self.num_recipients + 1)

    @property
    def capacity(self) -> int:
        """Largest number of dishonest recipients, floor(N * d_f)."""
        return math.floor(self.num_recipients * self.dishonest_fraction)

    def s(self, level: int) -> Fraction:
        try:
            return self.s_thresholds[level]
        except KeyError:
            raise LevelOutOfRange(f"level {level} not in {-1}..{self.l_max}") from None

    def replace(self, **changes) -> "ProtocolParams":
        return ProtocolParams(**{**_fields(self), **changes})

    def to_dict(self) -> dict:
        """Plain-data form; fractions become ``"p/q"`` strings."""
        return {
            "num_recipients": self.num_recipients,
            "n": self.n,
            "num_messages": self.num_messages,
            "dishonest_fraction": str(self.dishonest_fraction),
            "l_max": self.l_max,
            "s_thresholds": {str(k): str(v) for k, v in sorted(self.s_thresholds.items())},
            "master_seed": self.master_seed,
        }


@dataclass(frozen=True)
class ValidatedParams(ProtocolParams):
    """ProtocolParams that passed :func:`validate_params`. Immutable."""


def _fields(p: ProtocolParams) -> dict:
    return {f.name: getattr(p, f.name) for f in dataclasses.fields(ProtocolParams)}


def validate_params(p: ProtocolParams) -> ValidatedParams:
    if isinstance(p, ValidatedParams):
        return p
    N, n = p.num_recipients, p.n
    for name in ("num_recipients", "n", "num_messages", "l_max", "master_seed"):
        value = getattr(p, name)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValidationError(f"{name} must be an integer, got {value!r}")
    if N < 1 or n < 1:
        raise ValidationError("num_recipients and n must be positive")
    if p.num_messages < 0:
        raise ValidationError("num_messages must be non-negative")
    if p.l_max < 0:
        raise ValidationError("l_max must be non-negative")
    if not 0 <= p.master_seed < 2**64:
        raise ValidationError("master_seed must be a 64-bit unsigned integer")
    if n % N:
        raise DivisibilityError(f"n={n} is not divisible by N={N}")
    d_f = p.dishonest_fraction
    if not 0 <= d_f < HALF:
        raise LevelBudgetError(f"dishonest fraction {d_f} outside [0, 1/2)")
    if (p.l_max + 1) * d_f >= HALF:
        raise LevelBudgetError(
            f"(l_max+1)*d_f = {(p.l_max + 1) * d_f} must be < 1/2"
        )
    expected = set(range(-1, p.l_max + 1))
    got = set(p.s_thresholds)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise MissingLevelError(f"s thresholds must cover levels -1..{p.l_max}; "
                                f"missing {missing}, unexpected {extra}")
    prev = HALF
    for level in range(-1, p.l_max + 1):
        s = p.s_thresholds[level]
        if not 0 < s < prev:
            raise ThresholdOrderError(
                f"need 1/2 > s_-1 > s_0 > ... > s_lmax > 0; s_{level}={s} breaks it"
            )
        prev = s
    if n < ADVISORY_N_FACTOR * N:
        warnings.warn(
            f"n={n} < {ADVISORY_N_FACTOR}*N; cheating probabilities will not be small",
            SecurityParameterWarning,
            stacklevel=2,
        )
    return ValidatedParams(**_fields(p))


def fraction_threshold(p: ProtocolParams, level: int) -> Fraction:
    """Fraction of the N section tests that must pass at ``level``."""
    if level not in p.levels:
        raise LevelOutOfRange(f"level {level} not in -1..{p.l_max}")
    return HALF + (level + 1) * p.dishonest_fraction


@dataclass(frozen=True)
class KeyBudget:
    signer_link_bits: int
    peer_link_bits: int


def position_bits(n: int) -> int:
    """Bits needed to encode one position in 0..n-1, i.e. ceil(log2 n)."""
    return (n - 1).bit_length()


def key_budget(p: ProtocolParams) -> KeyBudget:
    """Payload key bits per link, excluding authentication tags."""
    n, M, N = p.n, p.num_messages, p.num_recipients
    return KeyBudget(
        signer_link_bits=n * M,
        peer_link_bits=2 * (n * M // N) * (1 + position_bits(n)),
    )


def params_from_mapping(data: Mapping[str, Any]) -> ProtocolParams:
    """Build ProtocolParams from a parsed config tree (unknown keys rejected)."""
    known = {f.name for f in dataclasses.fields(ProtocolParams)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown parameter keys: {sorted(unknown)}")
    missing = known - set(data) - {"master_seed"}
    if missing:
        raise ValidationError(f"missing parameter keys: {sorted(missing)}")
    thresholds = data["s_thresholds"]
    if not isinstance(thresholds, Mapping):
        raise ValidationError("s_thresholds must be a mapping level -> fraction")
    try:
        s = {int(k): as_fraction(v) for k, v in thresholds.items()}
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad s_thresholds: {exc}") from exc
    return ProtocolParams(
        num_recipients=data["num_recipients"],
        n=data["n"],
        num_messages=data["num_messages"],
        dishonest_fraction=as_fraction(data["dishonest_fraction"]),
        l_max=data["l_max"],
        s_thresholds=s,
        master_seed=data.get("master_seed", 0),
    )

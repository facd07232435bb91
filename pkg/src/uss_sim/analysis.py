"""Closed-form cheating bounds, exact small-instance oracles, and Monte Carlo
estimation of attack success rates with Clopper-Pearson intervals.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import stats

from . import adversary, core, framework, rng
from .errors import LevelOrderError, ScenarioError, ThresholdRangeError
from .params import HALF, SIGNER, ValidatedParams, as_fraction, fraction_threshold

SCENARIOS = ("forge-fixed", "forge-any", "nontrans", "repudiate", "spy-demo")
LINEAR, UNION = "linear", "union"


# -- single-test probabilities --------------------------------------------


def hoeffding_single_test(m: int, s) -> float:
    """Hoeffding bound exp(-2 (1/2 - s)^2 m) on passing a test by guessing."""
    s = float(s)
    if not 0.0 < s < 0.5:
        raise ThresholdRangeError(f"s must lie in (0, 1/2), got {s}")
    return math.exp(-2.0 * (0.5 - s) ** 2 * m)


def binomial_cdf_below(m: int, threshold: Fraction, q: Fraction) -> Fraction:
    """P[Binomial(m, q) < threshold], exactly."""
    total = Fraction(0)
    for k in range(m + 1):
        if not k < threshold:
            break
        total += math.comb(m, k) * q**k * (1 - q) ** (m - k)
    return total


def exact_single_test(m: int, s, bit_error) -> Fraction:
    """P[Binomial(m, bit_error) < s*m]: chance a fragment test passes when
    each tested bit is wrong independently with probability ``bit_error``."""
    q = as_fraction(bit_error)
    if not 0 <= q <= 1:
        raise ValueError(f"bit_error must lie in [0, 1], got {q}")
    return binomial_cdf_below(m, as_fraction(s) * m, q)


def binomial_tail(u: int, need: int, q: Fraction) -> Fraction:
    """P[Binomial(u, q) >= need]."""
    if need <= 0:
        return Fraction(1)
    return sum((math.comb(u, k) * q**k * (1 - q) ** (u - k) for k in range(need, u + 1)),
               Fraction(0))


def fixed_forge_exact(p: ValidatedParams, coalition_size: int) -> Fraction:
    """Exact success probability of the guessing forger against one target.

    Sections of coalition members pass with certainty; each of the other
    N - c tests passes independently with the uniform-guess probability.
    """
    c = coalition_size
    q = exact_single_test(p.m, p.s(0), HALF)
    f0 = fraction_threshold(p, 0)
    need_total = math.floor(p.num_recipients * f0) + 1
    return binomial_tail(p.num_recipients - c, need_total - c, q)


# -- closed-form bounds ---------------------------------------------------


def clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


def _union(prob: float, count: float) -> float:
    return 1.0 - (1.0 - clamp01(prob)) ** count


def honest_count(p) -> float:
    return float(p.num_recipients * (1 - p.dishonest_fraction))


def honest_pairs(p) -> float:
    h = honest_count(p)
    return h * (h - 1) / 2


def forge_bound(p: ValidatedParams, fixed_target: bool = True, form: str = LINEAR) -> float:
    p_t = hoeffding_single_test(p.m, p.s(0))
    h = honest_count(p)
    if form == LINEAR:
        fixed = h * p_t
        return fixed if fixed_target else h * h * p_t
    fixed = _union(p_t, h)
    return fixed if fixed_target else _union(fixed, h)


def _check_pair(p, level, lower):
    if not (-1 <= lower < level <= p.l_max):
        raise LevelOrderError(f"need -1 <= l' < l <= {p.l_max}, got l={level}, l'={lower}")


def mismatch_bound(p, level: int, lower: int) -> float:
    """Bound on one honest section test splitting the two levels."""
    _check_pair(p, level, lower)
    gap = float(p.s(lower) - p.s(level))
    return math.exp(-(gap**2) / 2.0 * p.m)


def nontrans_bound(p: ValidatedParams, level: int, lower: int, fixed_pair: bool = True,
                   form: str = LINEAR) -> float:
    p_m = mismatch_bound(p, level, lower)
    tests = float(p.num_recipients * (fraction_threshold(p, level) - p.dishonest_fraction) + 1)
    if form == LINEAR:
        fixed = tests * p_m
        return fixed if fixed_pair else honest_pairs(p) * fixed
    fixed = _union(p_m, tests)
    return fixed if fixed_pair else _union(fixed, honest_pairs(p))


def repudiation_bound(p: ValidatedParams, form: str = LINEAR) -> float:
    """Honest pairs times the fixed-pair level 0 -> -1 transfer-failure bound."""
    p_m = mismatch_bound(p, 0, -1)
    per_pair_tests = p.num_recipients / 2 + 1
    if form == LINEAR:
        return honest_pairs(p) * per_pair_tests * p_m
    return _union(_union(p_m, per_pair_tests), honest_pairs(p))


# -- estimates ------------------------------------------------------------


def clopper_pearson(k: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass
class AttackEstimate:
    scenario: str
    successes: int
    trials: int
    confidence: float = 0.99
    analytic_bound: float = float("nan")
    exact_oracle: Optional[Fraction] = None
    strict_successes: Optional[int] = None
    n: Optional[int] = None
    runtime: Optional[float] = None

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @property
    def ci(self) -> tuple[float, float]:
        return clopper_pearson(self.successes, self.trials, self.confidence)

    @property
    def bound_clamped(self) -> float:
        return clamp01(self.analytic_bound)

    @property
    def bound_ok(self) -> bool:
        return self.ci[0] <= self.bound_clamped

    def merge(self, other: "AttackEstimate") -> "AttackEstimate":
        if other.scenario != self.scenario:
            raise ScenarioError("cannot merge estimates of different scenarios")
        strict = None
        if self.strict_successes is not None and other.strict_successes is not None:
            strict = self.strict_successes + other.strict_successes
        return dataclasses.replace(
            self, successes=self.successes + other.successes,
            trials=self.trials + other.trials, strict_successes=strict, runtime=None,
        )

    def record(self, timing: bool = False) -> dict:
        lo, hi = self.ci
        rec = {
            "scenario": self.scenario, "n": self.n, "trials": self.trials,
            "successes": self.successes, "p_hat": self.p_hat,
            "ci_low": lo, "ci_high": hi, "confidence": self.confidence,
            "bound": self.analytic_bound, "bound_clamped": self.bound_clamped,
            "exact": None if self.exact_oracle is None else str(self.exact_oracle),
            "strict_successes": self.strict_successes, "bound_ok": self.bound_ok,
        }
        if timing:
            rec["runtime_s"] = self.runtime
        return rec


TABLE_COLUMNS = ("scenario", "n", "trials", "successes", "p_hat", "ci_low", "ci_high",
                 "exact", "bound", "bound_clamped", "bound_ok")


def format_table(estimates, timing: bool = False) -> str:
    cols = TABLE_COLUMNS + (("runtime_s",) if timing else ())
    rows = [cols]
    for est in estimates:
        rec = est.record(timing)
        rec["exact"] = short_fraction(est.exact_oracle)
        rows.append(tuple(_cell(rec[c]) for c in cols))
    widths = [max(len(r[k]) for r in rows) for k in range(len(cols))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows) + "\n"


def short_fraction(value, width: int = 16):
    """Exact text when it is short, otherwise a float."""
    if value is None:
        return None
    text = str(value)
    return text if len(text) <= width else float(value)


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return "-" if v is None else str(v)


def format_records(estimates, timing: bool = False) -> str:
    return "".join(json.dumps(e.record(timing), sort_keys=True) + "\n" for e in estimates)


# -- scenarios ------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Attack descriptor. Unset fields take the defaults below.

    coalition: dishonest recipients (default: the last floor(N*d_f)).
    target: honest recipient to deceive / to make accept (default: lowest honest).
    fail_targets: honest recipients pushed to reject (default: all other honest).
    level: verification level of the passing side (nontrans, default 1).
    """

    kind: str
    coalition: Optional[tuple] = None
    target: Optional[int] = None
    fail_targets: Optional[tuple] = None
    level: Optional[int] = None
    p_e: Optional[float] = None
    message: int = 0

    @classmethod
    def from_mapping(cls, data) -> "Scenario":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known - {"trials", "seed"}
        if extra:
            raise ScenarioError(f"unknown scenario keys {sorted(extra)}")
        kw = {k: data[k] for k in known if k in data and data[k] is not None}
        for key in ("coalition", "fail_targets"):
            if key in kw:
                kw[key] = tuple(int(v) for v in kw[key])
        return cls(**kw)

    def resolve(self, p: ValidatedParams) -> "Scenario":
        if self.kind not in SCENARIOS:
            raise ScenarioError(f"unknown scenario {self.kind!r}; choose from {SCENARIOS}")
        N = p.num_recipients
        coalition = self.coalition
        if coalition is None:
            coalition = tuple(range(N - p.capacity + 1, N + 1))
        if len(set(coalition)) > p.capacity or any(c not in p.recipients for c in coalition):
            raise ScenarioError(f"coalition {coalition} is not a set of at most "
                                f"{p.capacity} recipients")
        honest = [i for i in p.recipients if i not in coalition]
        if len(honest) < (1 if self.kind.startswith("forge") else 2):
            raise ScenarioError("not enough honest recipients for this scenario")
        target = honest[0] if self.target is None else self.target
        if target not in honest:
            raise ScenarioError(f"target {target} is not honest")
        fails = self.fail_targets
        if fails is None:
            fails = tuple(i for i in honest if i != target)
        if any(f not in honest or f == target for f in fails):
            raise ScenarioError(f"fail targets {fails} must be honest and differ from target")
        level = self.level
        if self.kind == "nontrans":
            level = 1 if level is None else level
            if not 1 <= level <= p.l_max:
                raise ScenarioError(f"nontrans level must lie in 1..{p.l_max}")
        elif self.kind in ("repudiate", "spy-demo"):
            level = 0
        if not 0 <= self.message < p.num_messages:
            raise ScenarioError(f"message {self.message} not in 0..{p.num_messages - 1}")
        p_e = 0.0 if self.kind == "spy-demo" else self.p_e
        return dataclasses.replace(self, coalition=tuple(sorted(set(coalition))), target=target,
                                   fail_targets=tuple(fails), level=level, p_e=p_e)


def scenario_bound(sc: Scenario, p: ValidatedParams) -> float:
    if sc.kind == "forge-fixed":
        return forge_bound(p, fixed_target=True)
    if sc.kind == "forge-any":
        return forge_bound(p, fixed_target=False)
    if sc.kind == "nontrans":
        return nontrans_bound(p, sc.level, sc.level - 1, fixed_pair=False)
    if sc.kind == "repudiate":
        return repudiation_bound(p)
    return 0.0  # spy-demo: the disagreement cap must never be exceeded


def scenario_exact(sc: Scenario, p: ValidatedParams) -> Optional[Fraction]:
    if sc.kind == "forge-fixed":
        return fixed_forge_exact(p, len(sc.coalition))
    return None


def spy_cap_exceeded(states, coalition, x, sigma, cap) -> bool:
    honest = [st for st in states if st.id not in coalition]
    p = states[0].params
    h = core.hamming_matrix(honest, x, sigma)
    for level in p.levels:
        counts = core.tests_passed(p, h, level).sum(axis=-1)
        if counts.max() - counts.min() > cap:
            return True
    return False


_trial_streams = rng.StreamFactory()


def run_trial(sc: Scenario, p: ValidatedParams, seed: int, t: int, pinned=None):
    """One independent trial -> (success, strict success or None)."""
    if pinned is None:
        signer, states = core.deal(p, master_seed=_trial_streams.derive_seed(seed, rng.TRIAL, 0, t))
    else:
        signer, states = pinned
    gen = _trial_streams.get(seed, rng.ATTACK, 0, t)
    x = sc.message
    coalition = frozenset(sc.coalition)

    if sc.kind in ("forge-fixed", "forge-any"):
        view = adversary.pool_knowledge(states, coalition, p)
        if sc.kind == "forge-fixed":
            cands = [adversary.forge_attempt(view, p, x, gen, sc.target)]
            target = sc.target
        else:
            honest = [i for i in p.recipients if i not in coalition]
            cands = [adversary.forge_attempt(view, p, x, gen, i) for i in honest]
            target = None
        ok = strict = False
        for cand in cands:
            if framework.attack_indicator(framework.FORG, coalition, states, x, cand,
                                          target=target):
                ok = True
                if framework.mv_dispute(states, x, cand, dishonest=coalition).verdict == \
                        framework.VALID:
                    strict = True
        return ok, strict

    full = coalition | {SIGNER}
    view = adversary.pool_knowledge(states, full, p, signer)
    lower = sc.level - 1
    cand = adversary.tamper_attempt(view, p, x, sc.level, lower, sc.target,
                                    sc.fail_targets, gen, p_e=sc.p_e)
    if sc.kind == "repudiate":
        return bool(framework.attack_indicator(framework.REP, full, states, x, cand)), None
    if sc.kind == "nontrans":
        return bool(framework.attack_indicator(framework.NONTRANS, full, states, x, cand,
                                               level=sc.level)), None
    return spy_cap_exceeded(states, coalition, x, cand, p.capacity), None


def _run_chunk(args):
    sc, p, seed, start, stop, pinned = args
    wins = strict = 0
    for t in range(start, stop):
        ok, st = run_trial(sc, p, seed, t, pinned)
        wins += ok
        strict += bool(st)
    return wins, strict


def monte_carlo(scenario: Scenario, p: ValidatedParams, trials: int, seed: int,
                confidence: float = 0.99, workers: int = 1, pinned=None) -> AttackEstimate:
    """Run ``trials`` independent trials of ``scenario``.

    Trial t draws its distribution and attack randomness from streams keyed
    by (seed, t) only, so the result does not depend on ``workers``.
    ``pinned`` is an optional (signer, states) pair reused by every trial.
    """
    if trials < 1:
        raise ScenarioError("need at least one trial")
    if not 0 < confidence < 1:
        raise ScenarioError("confidence must lie in (0, 1)")
    sc = scenario.resolve(p)
    t0 = time.perf_counter()
    if workers <= 1:
        chunks = [_run_chunk((sc, p, seed, 0, trials, pinned))]
    else:
        bounds = np.linspace(0, trials, workers + 1).astype(int)
        jobs = [(sc, p, seed, a, b, pinned) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, jobs))
    wins = sum(c[0] for c in chunks)
    strict = sum(c[1] for c in chunks) if sc.kind.startswith("forge") else None
    return AttackEstimate(
        scenario=sc.kind, successes=wins, trials=trials, confidence=confidence,
        analytic_bound=scenario_bound(sc, p), exact_oracle=scenario_exact(sc, p),
        strict_successes=strict, n=p.n, runtime=time.perf_counter() - t0,
    )

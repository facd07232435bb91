"""Command-line entry point.

Exit codes: 0 ok, 2 usage or validation error, 3 protocol abort,
4 an empirical rate exceeded its analytic bound.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import analysis, core, framework, keystore
from .errors import (AuthFailure, KeyExhaustedError, LevelOutOfRange, UnknownMessage, USSError,
                     ValidationError)
from .estimator import DEFAULT_THRESHOLDS
from .params import as_fraction, key_budget, params_from_mapping, validate_params

log = logging.getLogger("uss_sim")

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_BOUND = 0, 2, 3, 4

# used when neither the config nor a flag sets a parameter
DEFAULT_PARAMS = {
    "num_recipients": 8, "n": 64, "num_messages": 1, "dishonest_fraction": "1/8",
    "l_max": 2, "s_thresholds": DEFAULT_THRESHOLDS, "master_seed": 0,
}

PARAM_FLAGS = {
    "num_recipients": int,
    "n": int,
    "num_messages": int,
    "dishonest_fraction": str,
    "l_max": int,
    "master_seed": int,
}


class UsageError(ValidationError):
    pass


# -- configuration --------------------------------------------------------


def load_config(path) -> dict:
    """Read a YAML or JSON config file into a plain tree."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return data


def resolve_params(args, config):
    """Config ``params`` section with command-line flags layered on top."""
    tree = dict(DEFAULT_PARAMS)
    tree.update(config.get("params") or {})
    for name in PARAM_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            tree[name] = value
    if getattr(args, "s", None):
        # flags replace the default table rather than patching it
        declared = (config.get("params") or {}).get("s_thresholds") or {}
        thresholds = {int(k): v for k, v in declared.items()}
        for item in args.s:
            level, _, frac = item.partition("=")
            try:
                thresholds[int(level)] = as_fraction(frac)
            except ValueError as exc:
                raise UsageError(f"bad --s value {item!r}; use LEVEL=FRACTION") from exc
        tree["s_thresholds"] = thresholds
    return validate_params(params_from_mapping(tree))


def key_source(args, config):
    keys = dict(config.get("keys") or {})
    kind = args.key_source or keys.get("source", "seeded")
    if kind == "seeded":
        seed = args.key_seed if args.key_seed is not None else keys.get("seed")
        return keystore.SeededRandom(int(seed) if seed is not None else 0)
    if kind == "files":
        directory = args.key_dir or keys.get("directory")
        return keystore.FileIngest(Path(directory)) if directory else keystore.FileIngest.from_env()
    raise UsageError(f"unknown key source {kind!r}")


def _emit(text, out=None):
    sys.stdout.write(text)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")


# -- signatures on the command line ---------------------------------------


def _read_signature(path, x, p):
    text = Path(path).read_text(encoding="utf-8")
    bits = np.array([int(c) for c in text if c in "01"], dtype=np.uint8)
    if len(bits) != p.K:
        raise UsageError(f"{path}: expected {p.K} signature bits, found {len(bits)}")
    return core.Signature.from_bits(x, bits, p.n)


def _parse_flips(text, p):
    if not text:
        return []
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    bad = [i for i in out if not 0 <= i < p.K]
    if bad:
        raise UsageError(f"flip indices out of range 0..{p.K - 1}: {bad[:5]}")
    return out


def _candidate(args, signer, p):
    x = args.message
    if not 0 <= x < p.num_messages:
        raise UnknownMessage(f"message {x} not in 0..{p.num_messages - 1}")
    if args.signature:
        sig = _read_signature(args.signature, x, p)
    else:
        sig = core.Signature.from_sections(x, signer.signatures[x])
    return sig.flipped(_parse_flips(args.flip, p))


# -- commands -------------------------------------------------------------


def cmd_distribute(args, config):
    p = resolve_params(args, config)
    pool = keystore.provision_keys(p, key_source(args, config))
    signer, states, transcript = core.run_distribution(p, pool)
    out = Path(args.out or (config.get("output") or {}).get("directory") or ".")
    out.mkdir(parents=True, exist_ok=True)
    core.save_snapshot(out / "snapshot.usss", signer, states)
    core.write_transcript(out / "transcript.jsonl", transcript)
    report = {"links": keystore.consumption_report(pool), "budget": vars(key_budget(p))}
    (out / "keys.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n",
                                   encoding="utf-8")
    print(f"distribution complete: {len(transcript)} envelopes, snapshot {out / 'snapshot.usss'}")
    return EXIT_OK


def cmd_sign(args, config):
    signer, states = core.load_snapshot(args.snapshot)
    sig = core.sign(signer, args.message)
    core.save_snapshot(args.snapshot, signer, states)
    text = "".join(map(str, sig.bits)) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_verify(args, config):
    signer, states = core.load_snapshot(args.snapshot)
    p = signer.params
    if args.level not in p.levels:
        raise LevelOutOfRange(f"level {args.level} not in -1..{p.l_max}")
    sig = _candidate(args, signer, p)
    counts = core.pass_counts(states, args.message, sig, args.level)
    verdicts = core.accepts(p, counts, args.level)
    lines = [f"recipient  passed/{p.num_recipients}  Ver(level={args.level})"]
    for st, c, v in zip(states, counts, verdicts):
        lines.append(f"{st.id:>9}  {int(c):>8}  {bool(v)}")
    if args.classify:
        ref = core.Signature.from_sections(args.message, signer.signatures[args.message])
        lines.append(framework.classify_signature(states, args.message, sig, ref).to_json())
    _emit("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_dispute(args, config):
    signer, states = core.load_snapshot(args.snapshot)
    sig = _candidate(args, signer, signer.params)
    if args.transfer_level is None:
        verdict = framework.mv_dispute(states, args.message, sig)
    else:
        verdict = framework.mv_transfer_dispute(states, args.message, sig, args.transfer_level)
    _emit(verdict.to_json() + "\n")
    return EXIT_OK


def _scenarios(args, config):
    declared = list(config.get("scenarios") or [])
    if args.scenario is None:
        if not declared:
            raise UsageError("no --scenario given and none declared in the config")
        return declared
    for entry in declared:
        if entry.get("kind") == args.scenario:
            return [entry]
    if declared:
        raise UsageError(f"scenario {args.scenario!r} is not declared in the config")
    return [{"kind": args.scenario}]


def _scenario_from(entry, args):
    data = dict(entry)
    for key, value in (("coalition", args.coalition), ("target", args.target),
                       ("fail_targets", args.fail_targets), ("level", args.level),
                       ("p_e", args.p_e)):
        if value is not None:
            data[key] = value
    if data.get("kind") not in analysis.SCENARIOS:
        raise UsageError(f"unknown scenario {data.get('kind')!r}; "
                         f"choose from {', '.join(analysis.SCENARIOS)}")
    return analysis.Scenario.from_mapping(data)


def _pinned(args):
    if getattr(args, "snapshot", None):
        return core.load_snapshot(args.snapshot)
    return None


def _report(estimates, args):
    if args.format == "jsonl":
        text = analysis.format_records(estimates, args.timing)
    else:
        text = analysis.format_table(estimates, args.timing)
    _emit(text, args.out)
    return EXIT_OK if all(e.bound_ok for e in estimates) else EXIT_BOUND


def cmd_attack(args, config):
    p = resolve_params(args, config)
    pinned = _pinned(args)
    estimates = []
    for entry in _scenarios(args, config):
        sc = _scenario_from(entry, args)
        trials = args.trials or entry.get("trials") or 1000
        seed = args.seed if args.seed is not None else entry.get("seed", 0)
        estimates.append(analysis.monte_carlo(sc, p, int(trials), int(seed), args.confidence,
                                              args.workers, pinned))
    return _report(estimates, args)


def cmd_sweep(args, config):
    base = resolve_params(args, config)
    entry = _scenarios(args, config)[0]
    sc = _scenario_from(entry, args)
    trials = args.trials or entry.get("trials") or 1000
    seed = args.seed if args.seed is not None else entry.get("seed", 0)
    estimates = []
    for n in args.n_values:
        p = validate_params(base.replace(n=n))
        estimates.append(analysis.monte_carlo(sc, p, int(trials), int(seed), args.confidence,
                                              args.workers))
    return _report(estimates, args)


def cmd_bounds(args, config):
    p = resolve_params(args, config)
    rows = [("bound", "linear", "union", "clamped")]

    def add(name, fn, **kw):
        lin = fn(p, **kw)
        uni = fn(p, form=analysis.UNION, **kw)
        rows.append((name, f"{lin:.6g}", f"{uni:.6g}", f"{analysis.clamp01(lin):.6g}"))

    add("forge-fixed", analysis.forge_bound, fixed_target=True)
    add("forge-any", analysis.forge_bound, fixed_target=False)
    for level in range(1, p.l_max + 1):
        add(f"nontrans-pair(l={level})", analysis.nontrans_bound,
            level=level, lower=level - 1, fixed_pair=True)
        add(f"nontrans-any(l={level})", analysis.nontrans_bound,
            level=level, lower=level - 1, fixed_pair=False)
    add("repudiation", analysis.repudiation_bound)
    widths = [max(len(r[k]) for r in rows) for k in range(4)]
    text = "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)
    exact = analysis.fixed_forge_exact(p, p.capacity)
    shown = analysis.short_fraction(exact, 32)
    shown = f"{shown} ~ {float(exact):.6g}" if isinstance(shown, str) else f"{shown:.6g}"
    text += f"\nexact fixed-forge (coalition {p.capacity}): {shown}\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_enumerate(args, config):
    signer, states = core.load_snapshot(args.snapshot)
    report = framework.enumerate_acceptance_sets(states, args.message, args.coalition or (),
                                                 args.level)
    _emit(report.to_json() + "\n", args.out)
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _add_params(sp):
    g = sp.add_argument_group("protocol parameters (override the config file)")
    g.add_argument("--config", type=Path)
    for name, typ in PARAM_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    g.add_argument("--s", action="append", metavar="LEVEL=FRACTION",
                   help="mismatch threshold for one level; repeatable")


def _add_report(sp):
    sp.add_argument("--format", choices=("table", "jsonl"), default="table")
    sp.add_argument("--out", type=Path)
    sp.add_argument("--timing", action="store_true", help="add a runtime column")


def _add_attack(sp):
    sp.add_argument("--scenario")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--confidence", type=float, default=0.99)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--coalition", type=_int_list)
    sp.add_argument("--target", type=int)
    sp.add_argument("--fail-targets", dest="fail_targets", type=_int_list)
    sp.add_argument("--level", type=int)
    sp.add_argument("--p-e", dest="p_e", type=float)


def _add_candidate(sp):
    sp.add_argument("--snapshot", type=Path, required=True)
    sp.add_argument("--message", type=int, default=0)
    sp.add_argument("--signature", type=Path, help="file of 0/1 characters; default Sign(x)")
    sp.add_argument("--flip", help="bit indices to flip, e.g. 0,5,64-127")


def build_parser():
    parser = argparse.ArgumentParser(prog="uss-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("distribute", help="run the distribution stage")
    _add_params(sp)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--key-source", choices=("seeded", "files"))
    sp.add_argument("--key-seed", type=int)
    sp.add_argument("--key-dir", type=Path)
    sp.set_defaults(func=cmd_distribute)

    sp = sub.add_parser("sign", help="release Sign(x) from a snapshot")
    sp.add_argument("--config", type=Path)
    sp.add_argument("--snapshot", type=Path, required=True)
    sp.add_argument("--message", type=int, default=0)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_sign)

    sp = sub.add_parser("verify", help="per-recipient test counts and verdicts")
    sp.add_argument("--config", type=Path)
    _add_candidate(sp)
    sp.add_argument("--level", type=int, default=0)
    sp.add_argument("--classify", action="store_true")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("dispute", help="majority-vote dispute resolution")
    sp.add_argument("--config", type=Path)
    _add_candidate(sp)
    sp.add_argument("--transfer-level", type=int)
    sp.set_defaults(func=cmd_dispute)

    sp = sub.add_parser("attack", help="Monte Carlo attack estimates vs bounds")
    _add_params(sp)
    _add_attack(sp)
    _add_report(sp)
    sp.add_argument("--snapshot", type=Path, help="pin every trial to this state")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("sweep", help="one attack estimate per signature length")
    _add_params(sp)
    _add_attack(sp)
    _add_report(sp)
    sp.add_argument("--n-values", type=_int_list, required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bounds", help="closed-form bounds for the parameters")
    _add_params(sp)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("enumerate", help="exhaustive acceptance-set sizes (K <= 24)")
    sp.add_argument("--config", type=Path)
    sp.add_argument("--snapshot", type=Path, required=True)
    sp.add_argument("--message", type=int, default=0)
    sp.add_argument("--coalition", type=_int_list)
    sp.add_argument("--level", type=int, default=0)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    warnings.formatwarning = lambda msg, cat, *_a, **_k: f"warning: {cat.__name__}: {msg}\n"
    try:
        config = load_config(getattr(args, "config", None))
        return args.func(args, config)
    except (AuthFailure, KeyExhaustedError) as exc:
        print(f"protocol abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ValidationError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except USSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

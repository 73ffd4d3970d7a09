"""Command-line harness for protocol runs, attack sweeps and robustness checks.

Subcommands:
    run              one full protocol run, optional per-round trace
    attack-sweep     repeated single-attack analyses
    verify-theorem1  compliant attacks stay silent, non-compliant ones get caught
    efficiency       qubit efficiency accounting

Exit codes: 0 completed (a protocol abort counts as completed), 1 a verified
property failed, 2 usage or configuration error.

Trace lines are space-separated key=value pairs in the order of TRACE_FIELDS;
absent values print as "-".
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .adversary import (
    AttackModel,
    bob_participant_attack,
    build_entangle_measure,
    compliant_bob_params,
    eval_zero_error_constraints,
    identity_attack,
    intercept_resend_z,
    load_attack_params,
    random_compliant_attack,
    random_entangle_measure_params,
)
from .analysis import (
    AnalysisError,
    analyze_attack,
    detection_from_outcome,
    qubit_efficiency,
    run_with_probe_metrics,
)
from .protocol import CASES, ProtocolConfig, ProtocolOutcome, RoundRecord, run_protocol
from .qcore import RngStream

SCHEMA_VERSION = 1
ATTACKS = ("none", "intercept-resend", "entangle-measure", "compliant", "bob-participant")
INTERCEPT_TARGETS = {"particle1": ("particle1",), "particle4": ("particle4",), "both": ("particle1", "particle4")}
PROBE_TOL = 1e-6
RESIDUAL_TOL = 1e-9
SAMPLED_MIN_RESIDUAL = 0.1
# small n gives too few Case A rounds to compare both r_a ensembles
MIN_VERIFY_ROUNDS = 400

TRACE_FIELDS = (
    "round", "bob", "charlie", "case", "bob_z", "charlie_z", "fresh_bob", "fresh_charlie",
    "alice_bell", "alice_z2", "alice_z3", "alice_fresh_bob", "alice_fresh_charlie", "alice_fmb",
    "check", "verdict",
)


class UsageError(Exception):
    pass


def bits_to_hex(bits: Sequence[int]) -> str:
    """Most significant bit first, zero-padded on the right to whole bytes."""
    bits = list(bits)
    if not bits:
        return ""
    bits += [0] * (-len(bits) % 8)
    return bytes(
        int("".join(str(b) for b in bits[i : i + 8]), 2) for i in range(0, len(bits), 8)
    ).hex()


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def format_trace_line(record: RoundRecord) -> str:
    if record.used_for_key:
        verdict = "key"
    elif record.check_selected:
        verdict = "pass" if record.check_pass else "fail"
    else:
        verdict = "unused"
    values = (
        record.round_index, record.bob_choice, record.charlie_choice, record.case,
        record.bob_z, record.charlie_z, record.fresh_bob, record.fresh_charlie,
        record.alice_bell, record.alice_z2, record.alice_z3,
        record.alice_fresh_bob, record.alice_fresh_charlie, record.alice_fmb,
        record.check_selected, verdict,
    )
    return " ".join(f"{k}={_fmt(v)}" for k, v in zip(TRACE_FIELDS, values))


def parse_attack(text: str) -> tuple[str, Optional[str]]:
    name, _, target = text.partition(":")
    if name not in ATTACKS:
        raise UsageError(f"unknown attack {name!r}; choose from {', '.join(ATTACKS)}")
    if target and name != "intercept-resend":
        raise UsageError(f"attack {name!r} takes no target")
    if name == "intercept-resend":
        target = target or "particle1"
        if target not in INTERCEPT_TARGETS:
            raise UsageError(f"intercept-resend target must be one of {', '.join(INTERCEPT_TARGETS)}, got {target!r}")
    return name, target or None


def build_attack(name: str, target: Optional[str], params_path: Optional[str], probe_dim: int, rng: RngStream) -> AttackModel:
    """Instantiate an attack; random kinds draw from ``rng`` unless a parameter file is given."""
    if name == "none":
        return identity_attack(probe_dim)
    if name == "intercept-resend":
        return intercept_resend_z(INTERCEPT_TARGETS[target])
    if name == "compliant":
        return random_compliant_attack(probe_dim, rng)
    if name == "entangle-measure":
        params = load_attack_params(params_path) if params_path else random_entangle_measure_params(probe_dim, rng)
        return build_entangle_measure(params)
    params = load_attack_params(params_path, returning_qubits=1) if params_path else compliant_bob_params(probe_dim)
    return bob_participant_attack(params)


def _residuals(attack: AttackModel) -> Optional[dict]:
    params = attack.params
    if params is None or attack.name == "bob-participant":
        return None
    return eval_zero_error_constraints(params).as_dict()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _config_echo(args, config: ProtocolConfig) -> dict:
    return {
        "n": config.n,
        "seed": config.seed,
        "attack": args.attack,
        "attack_params": args.attack_params,
        "probe_dim": config.probe_dim,
        "check_fraction": config.check_fraction,
        "abort_threshold": config.abort_threshold,
        "trials": args.trials,
    }


def _base_report(command: str, args, config: ProtocolConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": command,
        "seed": config.seed,
        "config": _config_echo(args, config),
    }


def _keys_block(outcome: ProtocolOutcome) -> Optional[dict]:
    keys = outcome.keys
    if keys is None:
        return None
    return {
        "bits": len(keys),
        "r_a": bits_to_hex(keys.r_a),
        "r_b": bits_to_hex(keys.r_b),
        "r_c": bits_to_hex(keys.r_c),
        "alice_agrees": keys.alice_agrees,
    }


def cmd_run(args, config: ProtocolConfig, attack: AttackModel) -> tuple[dict, int]:
    outcome, probe = run_with_probe_metrics(config, attack)
    if args.trace:
        with open(args.trace, "w") as fh:
            for record in outcome.records:
                fh.write(format_trace_line(record) + "\n")
    report = _base_report("run", args, config)
    report.update(
        attack=attack.descriptor,
        aborted=outcome.aborted,
        diagnostic=outcome.diagnostic,
        error_rates={str(c): outcome.error_rates[c] for c in CASES},
        case_counts={str(c): v for c, v in outcome.case_counts().items()},
        detection=detection_from_outcome(outcome).as_dict(),
        keys=_keys_block(outcome),
        probe=None if probe is None else probe.as_dict(),
        constraints=_residuals(attack),
        efficiency=qubit_efficiency(config.n, outcome).as_dict(),
    )
    return report, 0


def cmd_attack_sweep(args, config: ProtocolConfig, name: str, target: Optional[str]) -> tuple[dict, int]:
    trials = 20 if args.trials is None else args.trials
    if trials < 1:
        raise UsageError(f"--trials must be >= 1, got {trials}")
    entries = []
    for i in range(trials):
        rng = RngStream(config.seed, f"sweep-attack-{i}")
        attack = build_attack(name, target, args.attack_params, config.probe_dim, rng)
        trial_config = ProtocolConfig(
            n=config.n, check_fraction=config.check_fraction, abort_threshold=config.abort_threshold,
            probe_dim=config.probe_dim, seed=int(RngStream(config.seed, f"sweep-seed-{i}").generator.integers(2**63)),
        )
        try:
            result = analyze_attack(attack, trial_config, config.rounds)
            detection, probe = result.detection.as_dict(), result.probe.as_dict()
            detected = result.detection.detected
        except AnalysisError as exc:
            detection, probe, detected = None, {"error": str(exc)}, None
        entries.append({
            "trial": i,
            "seed": trial_config.seed,
            "attack": attack.descriptor,
            "constraints": _residuals(attack),
            "detection": detection,
            "detected": detected,
            "probe": probe,
        })
    report = _base_report("attack-sweep", args, config)
    report.update(rounds_per_trial=config.rounds, trials=entries)
    return report, 0


def cmd_verify_theorem1(args, config: ProtocolConfig) -> tuple[dict, int]:
    trials = 100 if args.trials is None else args.trials
    if trials < 100:
        raise UsageError(f"verify-theorem1 needs --trials >= 100 for the sampled half, got {trials}")
    rounds = max(config.rounds, MIN_VERIFY_ROUNDS)
    violations = []

    constructive = []
    for i in range(max(5, trials // 20)):
        attack = random_compliant_attack(config.probe_dim, RngStream(config.seed, f"compliant-{i}"))
        cfg = ProtocolConfig(n=config.n, probe_dim=config.probe_dim, seed=config.seed + i)
        try:
            result = analyze_attack(attack, cfg, rounds)
        except AnalysisError as exc:
            violations.append(f"compliant attack {i}: {exc}")
            continue
        residual = eval_zero_error_constraints(attack.params).max_residual
        entry = {
            "index": i,
            "max_residual": residual,
            "failures": result.detection.total_failures,
            "probe": result.probe.as_dict(),
        }
        constructive.append(entry)
        if residual >= RESIDUAL_TOL:
            violations.append(f"compliant attack {i}: constraint residual {residual:.3g}")
        if result.detection.total_failures:
            violations.append(f"compliant attack {i}: {result.detection.total_failures} check failures")
        if max(result.probe.trace_distance, result.probe.holevo_bound) >= PROBE_TOL:
            violations.append(f"compliant attack {i}: probe depends on r_a")

    sampled = []
    for i in range(trials):
        params = random_entangle_measure_params(config.probe_dim, RngStream(config.seed, f"haar-{i}"))
        residual = eval_zero_error_constraints(params).max_residual
        cfg = ProtocolConfig(n=config.n, probe_dim=config.probe_dim, seed=config.seed + i)
        detection = analyze_attack(build_entangle_measure(params), cfg, rounds).detection
        in_scope = residual > SAMPLED_MIN_RESIDUAL
        sampled.append({
            "index": i,
            "max_residual": residual,
            "in_scope": in_scope,
            "detected": detection.detected,
            "detection": detection.as_dict(),
        })
        if in_scope and not detection.detected:
            violations.append(f"sampled attack {i}: residual {residual:.3g} but no detection at 99% confidence")

    report = _base_report("verify-theorem1", args, config)
    report.update(
        rounds_per_attack=rounds,
        constructive={
            "attacks": constructive,
            "max_residual": max((e["max_residual"] for e in constructive), default=None),
        },
        sampled={
            "attacks": sampled,
            "in_scope": sum(e["in_scope"] for e in sampled),
            "detected": sum(bool(e["in_scope"] and e["detected"]) for e in sampled),
        },
        violations=violations,
        verdict="FAIL" if violations else "PASS",
    )
    return report, 1 if violations else 0


def cmd_efficiency(args, config: ProtocolConfig, seeded: bool) -> tuple[dict, int]:
    outcome = run_protocol(config) if seeded else None
    report = _base_report("efficiency", args, config)
    if not seeded:
        report["seed"] = None
        report["config"]["seed"] = None
    report.update(efficiency=qubit_efficiency(config.n, outcome).as_dict())
    return report, 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=16, help="target key length (8n rounds)")
    common.add_argument("--seed", type=int, default=None, help="master seed (falls back to $SQSS_SEED, then 0)")
    common.add_argument("--attack", default="none", help="none | intercept-resend[:particle1|particle4|both] | "
                        "entangle-measure | compliant | bob-participant")
    common.add_argument("--attack-params", default=None, help="JSON attack parameter file")
    common.add_argument("--probe-dim", type=int, default=4)
    common.add_argument("--check-fraction", type=float, default=0.5)
    common.add_argument("--abort-threshold", type=float, default=0.0)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--output", default=None, help="write the JSON report here instead of stdout")
    common.add_argument("--trace", default=None, help="write the per-round trace here (run only)")

    parser = argparse.ArgumentParser(prog="sqss", description="Semiquantum secret sharing simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "attack-sweep", "verify-theorem1", "efficiency"):
        sub.add_parser(name, parents=[common])
    return parser


def _resolve_seed(args) -> tuple[int, bool]:
    if args.seed is not None:
        return args.seed, True
    env = os.environ.get("SQSS_SEED")
    if env is not None and env.strip():
        try:
            return int(env), True
        except ValueError:
            raise UsageError(f"SQSS_SEED must be an integer, got {env!r}") from None
    return 0, False


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        seed, seeded = _resolve_seed(args)
        name, target = parse_attack(args.attack)
        config = ProtocolConfig(
            n=args.n, check_fraction=args.check_fraction, abort_threshold=args.abort_threshold,
            probe_dim=args.probe_dim, seed=seed,
        )
        if args.trace and args.command != "run":
            raise UsageError("--trace is only available for run")
        if args.command == "run":
            attack = build_attack(name, target, args.attack_params, config.probe_dim, RngStream(seed, "attack"))
            report, code = cmd_run(args, config, attack)
        elif args.command == "attack-sweep":
            report, code = cmd_attack_sweep(args, config, name, target)
        elif args.command == "verify-theorem1":
            report, code = cmd_verify_theorem1(args, config)
        else:
            report, code = cmd_efficiency(args, config, seeded)
    except (UsageError, ValueError, OSError) as exc:
        print(f"sqss: error: {exc}", file=sys.stderr)
        return 2

    text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if code == 1:
        for v in report.get("violations", []):
            print(f"sqss: violated: {v}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

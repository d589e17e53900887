"""Command-line front end.

    ghzsq run --n 16 --tau 2 --attack none --seed 7
    ghzsq detect --attack measure-resend-b --sessions 10000
    ghzsq sweep --attack intercept-resend-b --n 8 --tau 1 --format csv
    ghzsq efficiency --n 96 --tau 4
    ghzsq verify --quick

Reports go to --out, else to $GHZSQ_OUTPUT_DIR/<command>.<format> when that
variable is set, else to stdout.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import acceptance, adversary, analysis, protocol
from .report import COMMANDS, Report

OUTPUT_DIR_ENV = "GHZSQ_OUTPUT_DIR"
DEFAULT_SESSIONS = {"run": 1, "detect": 1000, "sweep": 1000, "efficiency": 1, "verify": 0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ghzsq", description="Three-party semiquantum key distribution simulator.")
    p.add_argument("command_pos", nargs="?", choices=COMMANDS, metavar="command", help=" | ".join(COMMANDS))
    p.add_argument("--command", choices=COMMANDS, help="alternative to the positional command")
    p.add_argument("--n", type=int, default=16, help="key length (default 16)")
    p.add_argument("--tau", type=int, default=2, help="extra rounds parameter (default 2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attack", default="none", help="preset name or entangle-measure:<matrix file>")
    p.add_argument("--sessions", type=int, help="Monte Carlo sessions (default depends on the command)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="output file")
    p.add_argument("--quick", action="store_true", help="verify: subsampled Monte Carlo")
    return p


def _parse(argv):
    args = build_parser().parse_args(argv)
    if args.command_pos and args.command and args.command_pos != args.command:
        raise UsageError(f"conflicting commands {args.command_pos!r} and {args.command!r}")
    args.command = args.command or args.command_pos
    if args.command is None:
        raise UsageError("a command is required")
    if args.sessions is None:
        args.sessions = DEFAULT_SESSIONS[args.command]
    if args.n < 1 or args.tau < 1:
        raise UsageError("--n and --tau must be positive")
    if args.sessions < 0:
        raise UsageError("--sessions must be non-negative")
    try:
        args.attack_obj = adversary.preset(args.attack)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    return args


def _config(args) -> dict:
    return {
        "command": args.command,
        "n": args.n,
        "tau": args.tau,
        "seed": args.seed,
        "attack": args.attack,
        "sessions": args.sessions,
        "format": args.format,
        "quick": args.quick,
    }


def _per_case(d: dict) -> dict:
    return {str(k): v for k, v in sorted(d.items())}


def round_dict(r: protocol.RoundRecord) -> dict:
    out = {
        "index": r.index,
        "bob_mode": protocol.Mode(r.bob_mode).value,
        "charlie_mode": protocol.Mode(r.charlie_mode).value,
        "case": r.case,
        "bob_z": r.bob_z,
        "charlie_z": r.charlie_z,
        "alice_z": dict(r.alice_z),
        "alice_bell": r.alice_bell,
        "alice_ghz": r.alice_ghz,
        "checked": r.checked,
        "consistent": r.consistent,
    }
    if r.eve is not None and (r.eve.intercepted or r.eve.fake):
        out["eve"] = {"intercepted": dict(r.eve.intercepted), "fake": dict(r.eve.fake)}
    return out


def session_dict(result: protocol.SessionResult) -> dict:
    keys = result.keys
    return {
        "attack": result.config.attack.describe(),
        "aborted": result.aborted,
        "abort_reason": result.abort_reason,
        "attempts": result.attempts,
        "case_counts": _per_case(result.case_counts),
        "checked_counts": _per_case(result.checked_counts),
        "inconsistent_counts": _per_case(result.inconsistent_counts),
        "error_rates": _per_case(result.error_rates),
        "keys": None if keys is None else {
            "k_ab": keys.k_ab,
            "k_ab_alice": keys.k_ab_alice,
            "k_ac": keys.k_ac,
            "k_ac_alice": keys.k_ac_alice,
            "k_a": keys.k_a,
            "k_b": keys.k_b,
            "k_c": keys.k_c,
            "positions": keys.positions,
        },
        "rounds": [round_dict(r) for r in result.records],
        "transcript": result.transcript,
    }


def _run(args):
    config = protocol.SessionConfig(args.n, args.tau, seed=args.seed, attack=args.attack_obj)
    result = protocol.run_session(config, keep_probe=False)
    return session_dict(result), (1 if result.aborted else 0)


def _detect(args):
    rep = analysis.exact_detection(args.attack_obj)
    if args.sessions:
        rep.monte_carlo = analysis.monte_carlo_detection(args.attack_obj, args.n, args.tau, args.sessions, args.seed)
        rep.samples = args.sessions
    out = rep.to_dict(args.n, args.tau)
    check = {c: float(analysis.CHECK_PROBABILITY[c]) for c in protocol.CASES}
    out["check_probability"] = _per_case(check)
    out["contribution"] = _per_case(
        {c: float(analysis.CASE_PROBABILITY) * check[c] * rep.per_case_exact[c] for c in protocol.CASES}
    )
    if 8 * (args.n + args.tau) <= 256:
        out["floor_rule_exact"] = analysis.exact_session_detection(rep.per_case_exact, args.n, args.tau)
    return out, 0


def _sweep(args):
    sizes = [(n, args.tau) for n in range(1, args.n + 1)]
    rep = analysis.exact_detection(args.attack_obj)
    points = analysis.detection_sweep(args.attack_obj, sizes, args.sessions, args.seed)
    return {"attack": rep.attack, "per_particle_exact": rep.per_particle_exact, "points": points}, 0


def _efficiency(args):
    session = None
    if args.sessions:
        session = protocol.run_session(protocol.SessionConfig(args.n, args.tau, seed=args.seed), keep_probe=False)
    return analysis.efficiency(args.n, args.tau, session).to_dict(), 0


def _verify(args):
    results = acceptance.run_all(args.quick, echo=lambda line: print(line, flush=True))
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed", flush=True)
    data = {"passed": passed, "quick": args.quick, "criteria": [r.to_dict() for r in results]}
    return data, (0 if passed else 1)


_COMMANDS = {"run": _run, "detect": _detect, "sweep": _sweep, "efficiency": _efficiency, "verify": _verify}


def execute(argv) -> tuple[Report, int, argparse.Namespace]:
    args = _parse(argv)
    try:
        results, code = _COMMANDS[args.command](args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return Report(args.command, _config(args), results), code, args


def render(argv) -> str:
    report, _, args = execute(argv)
    return report.render(args.format)


def _destination(args) -> str | None:
    if args.out:
        return args.out
    directory = os.environ.get(OUTPUT_DIR_ENV)
    if directory:
        return os.path.join(directory, f"{args.command}.{args.format}")
    return None


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        report, code, args = execute(argv)
    except UsageError as exc:
        parser = build_parser()
        parser.print_usage(sys.stderr)
        print(f"ghzsq: error: {exc}", file=sys.stderr)
        return 2
    text = report.render(args.format)
    dest = _destination(args)
    if dest is None:
        if args.command != "verify":
            sys.stdout.write(text)
    else:
        parent = os.path.dirname(dest)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())

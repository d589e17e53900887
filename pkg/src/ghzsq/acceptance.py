"""Acceptance checklist.

Each criterion is a function ``(quick) -> (passed, detail)``; :func:`run_all`
times them against their runtime limits. Everything is looked up through
the modules at call time, so a patched ``protocol.consistency_check`` is
exercised by every criterion that depends on it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import adversary, analysis, protocol, qstate
from .qstate import PHI_PLUS, PSI_PLUS, Basis

FULL_SESSIONS = 10_000
QUICK_SESSIONS = 1_000
TIGHT = 1e-12


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    seconds: float
    limit: float | None
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        limit = "" if self.limit is None else f" / {self.limit:g}s"
        return f"[{status}] {self.id}. {self.name} ({self.seconds:.2f}s{limit}): {self.detail}"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _sigmas(quick: bool) -> float:
    return 5.0 if quick else 4.0


def _sessions(quick: bool) -> int:
    return QUICK_SESSIONS if quick else FULL_SESSIONS


def basis_correctness(quick: bool):
    kets = np.array([qstate.ghz_like_state(i).amplitudes for i in range(8)])
    gram_err = float(np.max(np.abs(kets.conj() @ kets.T - np.eye(8))))
    bells = np.array([qstate.bell_state(i).amplitudes for i in range(4)])
    bell_err = float(np.max(np.abs(bells.conj() @ bells.T - np.eye(4))))
    ok = gram_err <= TIGHT and bell_err <= TIGHT
    return ok, f"GHZ-like gram error {gram_err:.1e}, Bell gram error {bell_err:.1e}"


# Z outcome on any one register of |G_1> -> Bell state left on the other two
_PAIRING = {0: PSI_PLUS, 1: PHI_PLUS}


def bell_pairing(quick: bool):
    g1 = qstate.ghz_like_state(1)
    worst = 0.0
    for label in ("a", "b", "c"):
        others = [x for x in ("a", "b", "c") if x != label]
        for value, expected in _PAIRING.items():
            prob, post = qstate.project(g1, Basis.Z, [label], value)
            if post is None:
                return False, f"Z={value} on {label} has probability 0"
            dist = qstate.outcome_distribution(post, Basis.BELL, others)
            worst = max(worst, abs(prob - 0.5), abs(dist.get(expected, 0.0) - 1.0))
            worst = max([worst] + [p for k, p in dist.items() if k != expected])
    return worst <= TIGHT, f"max deviation from the pairing table {worst:.1e}"


def honest_protocol(quick: bool):
    bad = []
    for seed in range(100):
        r = protocol.run_session(protocol.SessionConfig(16, 2, seed=seed))
        if (
            r.aborted
            or any(r.inconsistent_counts.values())
            or not r.keys.agreement
            or not r.keys.secret_sharing_holds
            or len(r.keys.k_a) != 16
        ):
            bad.append(seed)
    return not bad, "100/100 sessions clean" if not bad else f"failing seeds {bad[:10]}"


def _per_case(report):
    return tuple(report.per_case_exact[c] for c in protocol.CASES)


def _match(values, expected):
    return all(abs(v - float(e)) <= TIGHT for v, e in zip(values, expected))


def _attack_criterion(quick, attacks, per_particle, per_case_b, seed):
    sessions = _sessions(quick)
    k = _sigmas(quick)
    target = analysis.cumulative_detection(float(per_particle), 1, 1)
    ok = True
    parts = []
    for attack, mc_run in attacks:
        rep = analysis.exact_detection(attack)
        expected = per_case_b if attack.target == "b" else (per_case_b[0], per_case_b[2], per_case_b[1], per_case_b[3])
        exact_ok = rep.per_particle_fraction == per_particle and _match(_per_case(rep), expected)
        ok &= exact_ok
        msg = f"{attack.target}: p={rep.per_particle_fraction} cases={[str(analysis.as_fraction(v)) for v in _per_case(rep)]}"
        if mc_run:
            mc = analysis.monte_carlo_detection(attack, 1, 1, sessions, root_seed=seed)
            within = mc.within(target, k)
            ok &= within
            z = (mc.estimate - target) / math.sqrt(target * (1 - target) / sessions)
            msg += f" mc={mc.estimate:.5f} vs {target:.5f} ({z:+.2f} sigma, {sessions} sessions)"
        parts.append(msg)
    return ok, "; ".join(parts)


def measure_resend(quick: bool):
    attacks = [(adversary.MeasureResend("b"), True), (adversary.MeasureResend("c"), True)]
    half = Fraction(1, 2)
    return _attack_criterion(quick, attacks, Fraction(3, 16), (0, 0, half, half), seed=4)


def intercept_resend(quick: bool):
    attacks = [(adversary.InterceptResend("b"), True), (adversary.InterceptResend("c"), False)]
    q = (Fraction(1, 2), Fraction(1, 2), Fraction(3, 4), Fraction(3, 4))
    return _attack_criterion(quick, attacks, Fraction(13, 32), q, seed=5)


def double_cnot(quick: bool):
    sessions = QUICK_SESSIONS // 4 if quick else 1_000
    k = _sigmas(quick)
    rng = np.random.default_rng(6)
    ok = True
    parts = []
    variants = [
        (adversary.DoubleCnotSingle("b"), ["E"]),
        (adversary.DoubleCnotSingle("c"), ["E"]),
        (adversary.DoubleCnotTwice(), ["E", "F"]),
    ]
    for v, (attack, labels) in enumerate(variants):
        ref = qstate.basis_state([0] * len(labels), labels)
        detections = 0
        worst = 0.0
        hits = total = 0
        for seed in analysis.session_seeds(60 + v, sessions):
            r = protocol.run_session(protocol.SessionConfig(1, 1, seed=seed, attack=attack))
            detections += r.detected
            for rec in r.records:
                worst = max(worst, abs(1.0 - qstate.fidelity(rec.eve.probe, ref)))
            if r.keys is not None:
                guesses = adversary.eve_guess(attack, r.records, r.keys, rng)
                hits += sum(g == b for g, b in zip(guesses["k_ab"], r.keys.k_ab))
                total += len(r.keys.k_ab)
        acc = hits / total if total else float("nan")
        acc_ok = total > 0 and abs(acc - 0.5) <= k * math.sqrt(0.25 / total)
        ok &= detections == 0 and worst <= 1e-10 and acc_ok
        parts.append(
            f"{attack.name}{'-' + attack.target if hasattr(attack, 'target') else ''}: "
            f"{detections} detections, max probe infidelity {worst:.1e}, K_AB guess accuracy {acc:.3f} over {total} bits"
        )
    return ok, "; ".join(parts)


def _haar_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def _haar_unitary(rng, d):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def violating_attacks(rng, count: int, d: int = 4):
    """Entangle-measure attacks breaking the no-error conditions in three ways."""
    out = []
    eye = np.eye(d)
    for i in range(count):
        kind = i % 3
        if kind == 0:
            # off-diagonal gamma: a probe-independent rotation of the transit qubit
            theta = rng.uniform(0.05, math.pi - 0.05)
            c, s = math.cos(theta), math.sin(theta)
            chi = _haar_state(rng, d)
            ue = adversary.build_ue((c, s, -s, c), (chi,) * 4)
            uf = np.eye(4 * d * d)
        elif kind == 1:
            # off-diagonal gamma with orthonormal marks
            theta = rng.uniform(0.05, math.pi / 2 - 0.05)
            c, s = math.cos(theta), math.sin(theta)
            basis = _haar_unitary(rng, d)
            ue = adversary.build_ue((c, s, s, c), [basis[:, j] for j in range(4)])
            uf = np.eye(4 * d * d)
        else:
            # diagonal gamma but chi_00 orthogonal to chi_11, probe scrambled afterwards
            basis = _haar_unitary(rng, d)
            ue = adversary.build_ue((1, 0, 0, 1), (basis[:, 0], eye[0], eye[1], basis[:, 1]))
            uf = np.kron(np.eye(4), _haar_unitary(rng, d * d))
        out.append(adversary.EntangleMeasure(ue, ue, uf, d))
    return out


def no_error_conditions(quick: bool):
    rng = np.random.default_rng(7)
    d = 4
    chi = _haar_state(rng, d)
    compliant = adversary.EntangleMeasure.identity(chi, d)
    exact = analysis.exact_detection(compliant).per_particle_exact
    reference = qstate.tensor(qstate.ket_from_vector(chi, qstate.Register("E1", d)),
                              qstate.ket_from_vector(chi, qstate.Register("E2", d)))
    sessions = 50 if quick else 200
    detections = 0
    worst = 0.0
    for seed in analysis.session_seeds(70, sessions):
        r = protocol.run_session(protocol.SessionConfig(1, 1, seed=seed, attack=compliant))
        detections += r.detected
        for rec in r.records:
            worst = max(worst, abs(1.0 - qstate.fidelity(rec.eve.probe, reference)))
    compliant_ok = exact <= TIGHT and detections == 0 and worst <= 1e-10

    count = 100 if quick else 120
    probs = [analysis.exact_detection(a).per_particle_exact for a in violating_attacks(rng, count, d)]
    low = min(probs)
    ok = compliant_ok and low > 1e-6 and len(probs) >= 100
    return ok, (
        f"compliant: exact {exact:.1e}, {detections}/{sessions} sessions detected, "
        f"max probe infidelity {worst:.1e}; {count} violating attacks, min oracle detection {low:.2e}"
    )


def efficiency_metric(quick: bool):
    bad = []
    for n in (1, 2, 3, 5, 16, 96, 1000):
        for tau in (1, 2, 4, 7, 100):
            rep = analysis.efficiency(n, tau)
            if rep.ce != Fraction(3 * n, 32 * (n + tau)) or rep.lq != 24 * (n + tau) + 8 * (n + tau) or rep.lc != 0:
                bad.append((n, tau))
            if rep.lq_prepared != 24 * (n + tau) or rep.lq_resent != 8 * (n + tau):
                bad.append((n, tau))
    limit = analysis.efficiency(10**6, 1).ce
    lim_ok = abs(float(limit) - 3 / 32) <= 1e-4
    point = analysis.efficiency(96, 4).ce
    ok = not bad and lim_ok and point == Fraction(9, 100)
    return ok, f"grid mismatches {bad[:5]}; ce(1e6, 1) = {float(limit):.6f}; ce(96, 4) = {point}"


def determinism(quick: bool):
    from . import cli

    argsets = [
        ["run", "--n", "4", "--tau", "1", "--seed", "7", "--attack", "measure-resend-b"],
        ["run", "--n", "2", "--tau", "1", "--seed", "11", "--attack", "double-cnot-both"],
        ["detect", "--attack", "intercept-resend-c", "--sessions", "50", "--seed", "3"],
        ["efficiency", "--n", "96", "--tau", "4"],
    ]
    for argv in argsets:
        first = cli.render(argv)
        second = cli.render(argv)
        if first != second:
            return False, f"reports differ for {' '.join(argv)}"
    return True, f"{len(argsets)} configurations reproduced byte for byte"


CRITERIA: list[tuple[int, str, float | None, Callable]] = [
    (1, "basis correctness", 1.0, basis_correctness),
    (2, "Bell pairing of |G_1>", 1.0, bell_pairing),
    (3, "honest protocol", 10.0, honest_protocol),
    (4, "measure-resend detection", 60.0, measure_resend),
    (5, "intercept-resend detection", 60.0, intercept_resend),
    (6, "double-CNOT invisibility and uselessness", 30.0, double_cnot),
    (7, "entangle-measure no-error conditions", 120.0, no_error_conditions),
    (8, "qubit efficiency", 1.0, efficiency_metric),
    (9, "determinism", None, determinism),
]


def run_criterion(cid: int, quick: bool = False) -> CriterionResult:
    for i, name, limit, fn in CRITERIA:
        if i == cid:
            start = time.perf_counter()
            try:
                ok, detail = fn(quick)
            except Exception as exc:  # a crash is a failed criterion, not a crashed checklist
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            seconds = time.perf_counter() - start
            if limit is not None and seconds >= limit:
                ok, detail = False, f"{detail} [over the {limit:g}s limit]"
            return CriterionResult(i, name, bool(ok), seconds, limit, detail)
    raise KeyError(f"no criterion {cid}")


def run_all(quick: bool = False, only=None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    results = []
    for cid, *_ in CRITERIA:
        if only is not None and cid not in only:
            continue
        res = run_criterion(cid, quick)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results

"""Detection oracles, Monte Carlo estimators and the efficiency metric.

The exact oracle walks the full outcome tree of one round (party modes,
every attack branch, every Born branch of the parties' and Alice's
measurements) without touching the sampling code in :mod:`ghzsq.protocol`,
so the two can cross-check each other.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import protocol, qstate
from .adversary import (
    Attack,
    DoubleCnotSingle,
    DoubleCnotTwice,
    InterceptResend,
    MeasureResend,
    NoAttack,
    probe_bit_guess,
)
from .protocol import CASES, MODES_OF_CASE, Mode, RoundRecord, SessionConfig
from .qstate import Basis

CASE_PROBABILITY = Fraction(1, 4)
# chance that a round of the given case ends up in the checked set
CHECK_PROBABILITY = {1: Fraction(1, 2), 2: Fraction(1, 2), 3: Fraction(1, 2), 4: Fraction(1)}

_PRUNE = 1e-15
_RATIONAL_TOL = 1e-12


def as_fraction(x: float, max_denominator: int = 1 << 20) -> Fraction | None:
    """Small rational equal to ``x`` within 1e-12, or None."""
    f = Fraction(x).limit_denominator(max_denominator)
    return f if abs(float(f) - x) <= _RATIONAL_TOL else None


def closed_form_per_particle(attack: Attack) -> Fraction | None:
    """Hand-derived per-particle detection for the simple attacks; None if there is none."""
    if isinstance(attack, (NoAttack, DoubleCnotSingle, DoubleCnotTwice)):
        return Fraction(0)
    if isinstance(attack, MeasureResend):
        return Fraction(3, 16)
    if isinstance(attack, InterceptResend):
        return Fraction(13, 32)
    return None


def cumulative_detection(per_particle: float, n: int, tau: int) -> float:
    """1 - (1 - p)^(8(n + tau)): chance at least one of the rounds gives Eve away."""
    if not 0.0 <= per_particle <= 1.0:
        raise ValueError(f"per-particle probability must lie in [0, 1], got {per_particle!r}")
    if int(n) != n or int(tau) != tau or n < 0 or tau < 0:
        raise ValueError(f"n and tau must be non-negative integers, got n={n!r}, tau={tau!r}")
    return float(1.0 - (1.0 - per_particle) ** (8 * (n + tau)))


def _check_sizes(n: int, tau: int):
    if int(n) != n or n < 1 or int(tau) != tau or tau < 1:
        raise ValueError(f"n and tau must be positive integers, got n={n!r}, tau={tau!r}")


# -- exact round tree -------------------------------------------------------


def _expand(leaves, step):
    out = []
    for weight, rec, state in leaves:
        for prob, new_rec, new_state in step(rec, state):
            if weight * prob > _PRUNE:
                out.append((weight * prob, new_rec, new_state))
    return out


def _attack_step(hook):
    def step(rec, state):
        return [(br.probability, rec, br.state) for br in hook(state)]
    return step


def _z_step(label, setter):
    def step(rec, state):
        out = []
        for value in (0, 1):
            prob, post = qstate.project(state, Basis.Z, [label], value)
            if post is not None:
                out.append((prob, setter(rec, value), post))
        return out
    return step


def _party_step(label, field_name):
    # measure-resend: record the Z result and send back a fresh |value>
    def step(rec, state):
        out = []
        for value in (0, 1):
            prob, post = qstate.project(state, Basis.Z, [label], value)
            if post is not None:
                out.append((prob, {**rec, field_name: value}, qstate.reset(post, label, value)))
        return out
    return step


def _multi_step(basis, labels, field_name):
    def step(rec, state):
        out = []
        for value, prob in qstate.outcome_distribution(state, basis, labels).items():
            _, post = qstate.project(state, basis, labels, value)
            if post is not None:
                out.append((prob, {**rec, field_name: value}, post))
        return out
    return step


def _alice_z(label):
    return _z_step(label, lambda rec, v: {**rec, "alice_z": {**rec["alice_z"], label: v}})


def _alice_steps(case: int):
    if case == 1:
        return [_alice_z("a"), _alice_z("b"), _alice_z("c")]
    if case in (2, 3):
        own, other = ("b", "c") if case == 2 else ("c", "b")
        return [_alice_z(own), _multi_step(Basis.BELL, ["a", other], "alice_bell")]
    return [_multi_step(Basis.GHZ_LIKE, ["a", "b", "c"], "alice_ghz")]


def case_leaves(attack: Attack, case: int) -> list[tuple[float, RoundRecord]]:
    """Every terminal branch of one round in ``case``, as (probability, record)."""
    bob_mode, charlie_mode = MODES_OF_CASE[case]
    steps = [
        _attack_step(lambda s: attack.outbound_branches(s, "b")),
        _attack_step(lambda s: attack.outbound_branches(s, "c")),
    ]
    if bob_mode is Mode.MEASURE_RESEND:
        steps.append(_party_step("b", "bob_z"))
    if charlie_mode is Mode.MEASURE_RESEND:
        steps.append(_party_step("c", "charlie_z"))
    steps += [
        _attack_step(lambda s: attack.inbound_branches(s, "b")),
        _attack_step(lambda s: attack.inbound_branches(s, "c")),
    ]
    steps += _alice_steps(case)

    leaves = [(1.0, {"alice_z": {}}, protocol.source_state())]
    for step in steps:
        leaves = _expand(leaves, step)
    return [
        (w, RoundRecord(index=0, bob_mode=bob_mode, charlie_mode=charlie_mode, case=case, **rec))
        for w, rec, _ in leaves
    ]


def conditional_detection(attack: Attack, case: int) -> float:
    """P(checked round of ``case`` fails the consistency check)."""
    leaves = case_leaves(attack, case)
    total = sum(w for w, _ in leaves)
    # looked up through the module so a patched check is seen here too
    bad = sum(w for w, rec in leaves if not protocol.consistency_check(rec))
    return min(max(bad / total, 0.0), 1.0)


# -- reports ----------------------------------------------------------------


@dataclass
class MonteCarloEstimate:
    estimate: float
    stderr: float
    sessions: int
    detections: int
    aborts: int

    def within(self, reference: float, k: float = 4.0) -> bool:
        """|estimate - reference| within k binomial standard errors of the reference.

        The error uses the reference probability so a run with zero observed
        variance (all or none detected) is still judged fairly; it never drops
        below one session's worth of resolution.
        """
        sigma = math.sqrt(reference * (1.0 - reference) / self.sessions)
        return abs(self.estimate - reference) <= k * max(sigma, 1.0 / self.sessions)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "sessions": self.sessions,
            "detections": self.detections,
            "aborts": self.aborts,
        }


@dataclass
class DetectionReport:
    attack: dict
    per_case_exact: dict
    per_particle_exact: float
    per_particle_closed_form: Fraction | None
    monte_carlo: MonteCarloEstimate | None = None
    samples: int = 0

    @property
    def per_case_fraction(self) -> dict:
        return {case: as_fraction(p) for case, p in self.per_case_exact.items()}

    @property
    def per_particle_fraction(self) -> Fraction | None:
        return as_fraction(self.per_particle_exact)

    def cumulative(self, n: int, tau: int) -> float:
        return cumulative_detection(self.per_particle_exact, n, tau)

    def to_dict(self, n: int | None = None, tau: int | None = None) -> dict:
        frac = self.per_particle_fraction
        closed = self.per_particle_closed_form
        out = {
            "attack": self.attack,
            "per_case_exact": {str(c): p for c, p in self.per_case_exact.items()},
            "per_particle_exact": self.per_particle_exact,
            "per_particle_rational": None if frac is None else str(frac),
            "per_particle_closed_form": None if closed is None else float(closed),
            "monte_carlo": None if self.monte_carlo is None else self.monte_carlo.to_dict(),
            "samples": self.samples,
        }
        if n is not None and tau is not None:
            out["cumulative"] = self.cumulative(n, tau)
        return out


def exact_detection(attack: Attack) -> DetectionReport:
    """Per-case and per-particle detection probability by full enumeration.

    per particle = sum over cases of P(case) * P(checked | case) * P(fail | case, checked)
    """
    per_case = {case: conditional_detection(attack, case) for case in CASES}
    total = sum(float(CASE_PROBABILITY * CHECK_PROBABILITY[c]) * per_case[c] for c in CASES)
    return DetectionReport(
        attack=attack.describe(),
        per_case_exact=per_case,
        per_particle_exact=min(total, 1.0),
        per_particle_closed_form=closed_form_per_particle(attack),
    )


def exact_session_detection(per_case: dict, n: int, tau: int, restart: bool = True) -> float:
    """Session detection probability under the floor(count/2) check rule.

    Averages over the multinomial split of the 8(n + tau) rounds into cases;
    a case with c rounds has floor(c/2) of them checked (all c for case 4).
    Rounds are independent given their case, so a checked round fails with
    its per-case probability. With ``restart`` an undetected attempt that
    leaves fewer than n unchecked rounds in some key case is rerun, as the
    session loop does (without an attempt cap).
    """
    _check_sizes(n, tau)
    rounds = 8 * (n + tau)
    ok = [1.0 - per_case[c] for c in CASES]
    log_quarter = rounds * math.log(0.25)
    lf = [math.lgamma(k + 1) for k in range(rounds + 1)]
    detected = kept = 0.0
    for c1 in range(rounds + 1):
        for c2 in range(rounds + 1 - c1):
            for c3 in range(rounds + 1 - c1 - c2):
                c4 = rounds - c1 - c2 - c3
                w = math.exp(lf[rounds] - lf[c1] - lf[c2] - lf[c3] - lf[c4] + log_quarter)
                miss = ok[0] ** (c1 // 2) * ok[1] ** (c2 // 2) * ok[2] ** (c3 // 2) * ok[3] ** c4
                detected += w * (1.0 - miss)
                if not restart or min(c - c // 2 for c in (c1, c2, c3)) >= n:
                    kept += w * miss
    if detected + kept == 0.0:
        return 0.0
    return min(max(detected / (detected + kept), 0.0), 1.0)


# -- Monte Carlo ------------------------------------------------------------


def session_seeds(root_seed: int, sessions: int) -> list[int]:
    """Independent per-session seeds derived from one root seed."""
    children = np.random.SeedSequence(root_seed).spawn(sessions)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def _count(args) -> tuple[int, int]:
    attack, n, tau, seeds = args
    detections = aborts = 0
    for seed in seeds:
        result = protocol.run_session(SessionConfig(n, tau, seed=seed, attack=attack), keep_probe=False)
        detections += result.detected
        aborts += result.aborted
    return detections, aborts


def monte_carlo_detection(
    attack: Attack, n: int, tau: int, sessions: int, root_seed: int = 0, workers: int = 1
) -> MonteCarloEstimate:
    """Fraction of sessions halted by the error-rate check, with its binomial error.

    Sessions halted only for having too few unchecked rounds are not detections.
    """
    if sessions < 1:
        raise ValueError("sessions must be at least 1")
    _check_sizes(n, tau)
    seeds = session_seeds(root_seed, sessions)
    if workers <= 1:
        detections, aborts = _count((attack, n, tau, seeds))
    else:
        chunks = [seeds[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count, [(attack, n, tau, ch) for ch in chunks if ch]))
        detections = sum(d for d, _ in parts)
        aborts = sum(a for _, a in parts)
    p = detections / sessions
    return MonteCarloEstimate(p, math.sqrt(p * (1 - p) / sessions), sessions, detections, aborts)


def detection_sweep(
    attack: Attack, sizes: Sequence[tuple[int, int]], sessions: int, root_seed: int = 0, workers: int = 1
) -> list[dict]:
    """Exact, closed-form and Monte Carlo detection at each (n, tau)."""
    report = exact_detection(attack)
    rows = []
    for i, (n, tau) in enumerate(sizes):
        mc = monte_carlo_detection(attack, n, tau, sessions, root_seed + i, workers) if sessions else None
        rows.append({
            "n": n,
            "tau": tau,
            "rounds": 8 * (n + tau),
            "cumulative": report.cumulative(n, tau),
            "floor_rule_exact": exact_session_detection(report.per_case_exact, n, tau),
            "monte_carlo": None if mc is None else mc.estimate,
            "stderr": None if mc is None else mc.stderr,
            "sessions": sessions,
        })
    return rows


# -- efficiency -------------------------------------------------------------


@dataclass
class EfficiencyReport:
    n: int
    tau: int
    lk: int
    lq: int
    lc: int
    lq_prepared: int
    lq_resent: int
    observed: dict | None = None

    @property
    def ce(self) -> Fraction:
        return Fraction(self.lk, self.lq + self.lc)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "tau": self.tau,
            "lk": self.lk,
            "lq": self.lq,
            "lc": self.lc,
            "lq_prepared": self.lq_prepared,
            "lq_resent": self.lq_resent,
            "ce": float(self.ce),
            "ce_rational": str(self.ce),
            "observed": self.observed,
        }


def efficiency(n: int, tau: int, session: protocol.SessionResult | None = None) -> EfficiencyReport:
    """Key bits per expended qubit; check announcements are not counted.

    Alice prepares 3 qubits in each of 8(n + tau) rounds; Bob and Charlie each
    re-prepare a qubit in half the rounds on average. With ``session`` the
    realized resend count of that run is reported alongside.
    """
    _check_sizes(n, tau)
    rounds = 8 * (n + tau)
    prepared = 3 * rounds
    resent = 2 * (rounds // 2)
    observed = None
    if session is not None:
        actual = sum(
            (r.bob_mode is Mode.MEASURE_RESEND) + (r.charlie_mode is Mode.MEASURE_RESEND) for r in session.records
        )
        lk = 3 * session.config.n if session.keys is not None else 0
        lq = prepared + actual
        observed = {
            "lq_resent": actual,
            "lq": lq,
            "lk": lk,
            "ce": lk / lq,
        }
    return EfficiencyReport(n, tau, 3 * n, prepared + resent, 0, prepared, resent, observed)


# -- probe information ------------------------------------------------------


@dataclass
class ProbeInformation:
    fidelity_min: float
    fidelity_mean: float
    rounds: int
    mutual_information: float
    pairs: int
    sessions: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def plugin_mutual_information(xs: Sequence[int], ys: Sequence[int]) -> float:
    """Plug-in mutual information, in bits, of two discrete samples."""
    if len(xs) != len(ys):
        raise ValueError("samples must have equal length")
    if not xs:
        return 0.0
    n = len(xs)
    joint: dict = {}
    for x, y in zip(xs, ys):
        joint[(x, y)] = joint.get((x, y), 0) + 1
    px: dict = {}
    py: dict = {}
    for (x, y), c in joint.items():
        px[x] = px.get(x, 0) + c
        py[y] = py.get(y, 0) + c
    mi = sum(c / n * math.log2(c * n / (px[x] * py[y])) for (x, y), c in joint.items())
    return max(mi, 0.0)


def probe_information(
    attack: Attack, sessions: int, seed: int = 0, n: int = 1, tau: int = 1, abort_threshold: float = 0.0
) -> ProbeInformation:
    """Probe drift and what a fixed probe readout says about the sifted keys.

    Fidelity of every round's final probe is taken against the first round's
    probe; the readout is a Z measurement on each channel's probe register,
    paired with the key bit carried by that channel. Raising
    ``abort_threshold`` lets detectable attacks reach key derivation too.
    """
    if not attack.leaves_probe:
        raise ValueError(f"attack {attack.name!r} leaves no probe")
    if sessions < 1:
        raise ValueError("sessions must be at least 1")
    rng = np.random.default_rng(seed)
    reference = None
    fids = []
    xs: list[int] = []
    ys: list[int] = []
    for s in session_seeds(seed, sessions):
        result = protocol.run_session(SessionConfig(n, tau, seed=s, attack=attack, abort_threshold=abort_threshold))
        for rec in result.records:
            if reference is None:
                reference = rec.eve.probe
            fids.append(qstate.fidelity(rec.eve.probe, reference))
        if result.keys is None:
            continue
        by_index = {r.index: r for r in result.records}
        for key, channel in (("k_ab", "b"), ("k_ac", "c")):
            label = attack.probe_channel.get(channel)
            if label is None:
                continue
            for idx, bit in zip(result.keys.positions[key], getattr(result.keys, key)):
                xs.append(probe_bit_guess(by_index[idx].eve.probe, label, rng))
                ys.append(bit)
    return ProbeInformation(
        fidelity_min=float(min(fids)),
        fidelity_mean=float(np.mean(fids)),
        rounds=len(fids),
        mutual_information=plugin_mutual_information(xs, ys),
        pairs=len(xs),
        sessions=sessions,
    )

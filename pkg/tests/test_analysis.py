import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzsq import analysis
from ghzsq.adversary import (
    DoubleCnotSingle,
    DoubleCnotTwice,
    EntangleMeasure,
    InterceptResend,
    MeasureResend,
    NoAttack,
    build_ue,
)
from ghzsq.analysis import (
    cumulative_detection,
    efficiency,
    exact_detection,
    exact_session_detection,
    monte_carlo_detection,
    plugin_mutual_information,
    probe_information,
)

# -- independent density-matrix oracle ------------------------------------
# qubits: a, b, c, E (Eve's kept qubit), B, C (Bob's and Charlie's records)
A, B_, C_, E, RB, RC = range(6)
N = 6
I2 = np.eye(2)
P = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
X = np.array([[0.0, 1.0], [1.0, 0.0]])
S = 1 / math.sqrt(2)
BELL = {"phi+": np.array([S, 0, 0, S]), "psi+": np.array([0, S, S, 0])}


def embed(op, targets):
    rest = [q for q in range(N) if q not in targets]
    big = np.kron(op, np.eye(2 ** len(rest)))
    idx = np.arange(2**N).reshape([2] * N).transpose(targets + rest).reshape(-1)
    full = np.zeros_like(big)
    full[np.ix_(idx, idx)] = big
    return full


def dephase(rho, q):
    return sum(embed(p, [q]) @ rho @ embed(p, [q]) for p in P)


def cnot(control, target):
    return embed(np.kron(P[0], I2) + np.kron(P[1], X), [control, target])


def swap(q1, q2):
    return cnot(q1, q2) @ cnot(q2, q1) @ cnot(q1, q2)


def initial():
    g1 = np.zeros(8)
    g1[[0b001, 0b010, 0b100, 0b111]] = 0.5
    rest = np.zeros(8)
    rest[0] = 1
    psi = np.kron(g1, rest)
    return np.outer(psi, psi)


def apply_attack(rho, kind, channel, fake=0):
    q = B_ if channel == "b" else C_
    if kind == "mr":
        return dephase(rho, q)
    if kind == "ir":
        u = swap(q, E)
        rho = u @ rho @ u.T
        if fake:
            x = embed(X, [q])
            rho = x @ rho @ x
        return rho
    return rho


def party(rho, q, record):
    u = cnot(q, record)
    return dephase(u @ rho @ u.T, record)


def consistent_projector(case):
    if case == 1:
        terms = []
        for b in (0, 1):
            for c in (0, 1):
                a = 1 - (b ^ c)
                terms.append(embed(np.kron(np.kron(np.kron(np.kron(P[a], P[b]), P[c]), P[b]), P[c]), [A, B_, C_, RB, RC]))
        return sum(terms)
    if case in (2, 3):
        own, other, rec = (B_, C_, RB) if case == 2 else (C_, B_, RC)
        out = 0
        for bit, name in ((0, "psi+"), (1, "phi+")):
            bell = np.outer(BELL[name], BELL[name])
            out = out + embed(np.kron(np.kron(P[bit], P[bit]), bell), [own, rec, A, other])
        return out
    g1 = np.zeros(8)
    g1[[0b001, 0b010, 0b100, 0b111]] = 0.5
    return embed(np.outer(g1, g1), [A, B_, C_])


def oracle_case_detection(kind, channel, case, fake=0):
    rho = apply_attack(initial(), kind, channel, fake)
    if case in (1, 2):
        rho = party(rho, B_, RB)
    if case in (1, 3):
        rho = party(rho, C_, RC)
    return 1 - float(np.trace(consistent_projector(case) @ rho).real)


ATTACKS = {
    ("mr", "b", 0): MeasureResend("b"),
    ("mr", "c", 0): MeasureResend("c"),
    ("ir", "b", 0): InterceptResend("b", 0),
    ("ir", "c", 0): InterceptResend("c", 0),
    ("ir", "b", 1): InterceptResend("b", 1),
    ("ir", "c", 1): InterceptResend("c", 1),
    ("none", "b", 0): NoAttack(),
}


@pytest.mark.parametrize("key", list(ATTACKS))
def test_per_case_values_match_density_matrix_oracle(key):
    rep = exact_detection(ATTACKS[key])
    for case in (1, 2, 3, 4):
        assert rep.per_case_exact[case] == pytest.approx(oracle_case_detection(*key[:2], case, key[2]), abs=1e-12)


# -- exact values ----------------------------------------------------------


def test_measure_resend_exact():
    rep = exact_detection(MeasureResend("b"))
    assert rep.per_particle_fraction == Fraction(3, 16)
    assert rep.per_particle_closed_form == Fraction(3, 16)
    assert rep.per_case_fraction == {1: 0, 2: 0, 3: Fraction(1, 2), 4: Fraction(1, 2)}


def test_intercept_resend_exact():
    rep = exact_detection(InterceptResend("b"))
    assert rep.per_particle_fraction == Fraction(13, 32)
    assert rep.per_case_fraction == {1: Fraction(1, 2), 2: Fraction(1, 2), 3: Fraction(3, 4), 4: Fraction(3, 4)}


@pytest.mark.parametrize("attack", [NoAttack(), DoubleCnotSingle("b"), DoubleCnotSingle("c"), DoubleCnotTwice(), EntangleMeasure.identity()])
def test_undetectable_attacks_are_zero(attack):
    rep = exact_detection(attack)
    assert rep.per_particle_exact <= 1e-12
    assert all(v <= 1e-12 for v in rep.per_case_exact.values())


@pytest.mark.parametrize("cls", [MeasureResend, InterceptResend])
def test_channel_symmetry(cls):
    b, c = exact_detection(cls("b")), exact_detection(cls("c"))
    assert b.per_particle_exact == pytest.approx(c.per_particle_exact, abs=1e-12)
    assert b.per_case_exact[2] == pytest.approx(c.per_case_exact[3], abs=1e-12)


@pytest.mark.parametrize("fake", [1, "random"])
def test_fake_bit_symmetry(fake):
    base = exact_detection(InterceptResend("b", 0)).per_particle_exact
    assert exact_detection(InterceptResend("b", fake)).per_particle_exact == pytest.approx(base, abs=1e-12)


def random_entangle_measure(seed, d=2):
    rng = np.random.default_rng(seed)

    def unitary(k):
        q, r = np.linalg.qr(rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)))
        return q * (np.diag(r) / np.abs(np.diag(r)))

    # a random isometry qubit -> qubit x probe, and a random joint unitary
    ue = unitary(2 * d)[:, :2]
    return EntangleMeasure(ue, unitary(2 * d)[:, :2], unitary(4 * d * d), d)


@given(st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_report_invariants_on_random_attacks(seed):
    rep = exact_detection(random_entangle_measure(seed))
    total = sum(float(analysis.CASE_PROBABILITY * analysis.CHECK_PROBABILITY[c]) * rep.per_case_exact[c] for c in (1, 2, 3, 4))
    assert rep.per_particle_exact == pytest.approx(total, abs=1e-14)
    assert 0 <= rep.per_particle_exact <= 1
    assert all(0 <= v <= 1 for v in rep.per_case_exact.values())
    assert rep.per_particle_closed_form is None


@given(st.floats(0.05, math.pi - 0.05))
@settings(max_examples=20, deadline=None)
def test_rotation_attacks_are_detected(theta):
    c, s = math.cos(theta), math.sin(theta)
    ue = build_ue((c, s, -s, c), (np.array([1, 0]),) * 4)
    assert exact_detection(EntangleMeasure(ue, ue, np.eye(16), 2)).per_particle_exact > 1e-6


def test_oracle_sees_patched_consistency_check(monkeypatch):
    from ghzsq import protocol

    monkeypatch.setattr(protocol, "consistency_check", lambda rec: True)
    assert exact_detection(MeasureResend("b")).per_particle_exact == 0


# -- closed forms ----------------------------------------------------------


def test_cumulative_examples():
    assert cumulative_detection(3 / 16, 1, 0) == pytest.approx(1 - (13 / 16) ** 8)
    assert cumulative_detection(3 / 16, 1, 0) == pytest.approx(0.8101, abs=1e-4)
    assert cumulative_detection(13 / 32, 16, 2) == pytest.approx(1 - (19 / 32) ** 144)
    assert cumulative_detection(0, 50, 7) == 0
    with pytest.raises(ValueError):
        cumulative_detection(1.5, 1, 1)


@given(st.floats(0, 1), st.integers(1, 20), st.integers(1, 20))
def test_cumulative_is_monotone_in_rounds(p, n, tau):
    assert cumulative_detection(p, n, tau) <= cumulative_detection(p, n + 1, tau) + 1e-15


def test_session_oracle_matches_independent_check_model_when_rounds_grow():
    per_case = exact_detection(MeasureResend("b")).per_case_exact
    # the floor rule checks slightly fewer rounds than a coin per round would
    single = exact_session_detection(per_case, 1, 1, restart=False)
    assert single == pytest.approx(cumulative_detection(3 / 16, 1, 1), abs=2e-3)
    assert exact_session_detection(per_case, 1, 1) >= single


def test_as_fraction():
    assert analysis.as_fraction(0.1875) == Fraction(3, 16)
    assert analysis.as_fraction(math.pi) is None


# -- Monte Carlo -----------------------------------------------------------


def test_monte_carlo_none_never_detects():
    mc = monte_carlo_detection(NoAttack(), 1, 1, 300, root_seed=1)
    assert mc.detections == 0 and mc.aborts == 0 and mc.estimate == 0


def test_monte_carlo_is_reproducible_and_seeded_per_session():
    a = monte_carlo_detection(MeasureResend("b"), 1, 1, 100, root_seed=5)
    b = monte_carlo_detection(MeasureResend("b"), 1, 1, 100, root_seed=5)
    assert a == b
    seeds = analysis.session_seeds(5, 100)
    assert len(set(seeds)) == 100


@pytest.mark.parametrize("attack", [MeasureResend("b"), InterceptResend("c")], ids=["mr-b", "ir-c"])
@pytest.mark.parametrize("n,tau", [(1, 1), (2, 2), (4, 4)])
def test_monte_carlo_agrees_with_closed_form(attack, n, tau):
    sessions = 1000
    p = exact_detection(attack).per_particle_exact
    mc = monte_carlo_detection(attack, n, tau, sessions, root_seed=n * 10 + tau)
    assert mc.within(cumulative_detection(p, n, tau), 4)


def test_monte_carlo_agrees_with_session_oracle_for_a_weak_attack():
    ue = build_ue((math.cos(0.3), math.sin(0.3), -math.sin(0.3), math.cos(0.3)), (np.array([1, 0]),) * 4)
    attack = EntangleMeasure(ue, ue, np.eye(16), 2)
    rep = exact_detection(attack)
    target = exact_session_detection(rep.per_case_exact, 1, 1)
    assert 0.2 < target < 0.9
    assert monte_carlo_detection(attack, 1, 1, 1000, root_seed=3).within(target, 4)


def test_monte_carlo_with_workers_matches_serial():
    serial = monte_carlo_detection(MeasureResend("c"), 1, 1, 60, root_seed=2)
    fanned = monte_carlo_detection(MeasureResend("c"), 1, 1, 60, root_seed=2, workers=2)
    assert serial == fanned


def test_monte_carlo_validation():
    with pytest.raises(ValueError):
        monte_carlo_detection(NoAttack(), 1, 1, 0)


# -- efficiency ------------------------------------------------------------


def test_efficiency_examples():
    rep = efficiency(96, 4)
    assert rep.ce == Fraction(9, 100) and float(rep.ce) == 0.09
    assert abs(float(efficiency(10**6, 1).ce) - 3 / 32) < 1e-4


@given(st.integers(1, 10**6), st.integers(1, 10**3))
def test_efficiency_identity(n, tau):
    rep = efficiency(n, tau)
    assert rep.lk == 3 * n and rep.lc == 0
    assert rep.lq == rep.lq_prepared + rep.lq_resent == 32 * (n + tau)
    assert rep.lq_prepared == 24 * (n + tau) and rep.lq_resent == 2 * 4 * (n + tau)
    assert rep.ce == Fraction(3 * n, 32 * (n + tau))


def test_efficiency_observed_counts():
    from ghzsq.protocol import SessionConfig, run_session

    session = run_session(SessionConfig(8, 2, seed=4))
    rep = efficiency(8, 2, session)
    resent = sum((r.bob_mode == "measure-resend") + (r.charlie_mode == "measure-resend") for r in session.records)
    assert rep.observed["lq_resent"] == resent
    assert rep.observed["lq"] == 24 * 10 + resent


# -- probe information -----------------------------------------------------


def test_double_cnot_probe_information():
    info = probe_information(DoubleCnotTwice(), 60, seed=1)
    assert info.fidelity_min == pytest.approx(1, abs=1e-10)
    assert info.mutual_information == 0 and info.pairs > 0


def test_compliant_probe_is_constant():
    chi = np.array([0.6, 0.8j, 0, 0])
    info = probe_information(EntangleMeasure.identity(chi, 4), 30, seed=2)
    assert info.fidelity_min == pytest.approx(1, abs=1e-10)


def test_marking_attack_leaks_and_drifts():
    e = np.eye(2)
    ue = build_ue((1, 0, 0, 1), (e[0], e[0], e[1], e[1]))
    info = probe_information(EntangleMeasure(ue, ue, np.eye(16), 2), 80, seed=3, abort_threshold=1.0)
    assert info.fidelity_min < 1 - 1e-6
    assert info.mutual_information > 0.5


def test_probe_information_needs_a_probe():
    with pytest.raises(ValueError, match="no probe"):
        probe_information(MeasureResend("b"), 5)


def test_plugin_mutual_information():
    assert plugin_mutual_information([0, 1] * 50, [0, 1] * 50) == pytest.approx(1)
    assert plugin_mutual_information([0] * 100, [0, 1] * 50) == 0
    assert plugin_mutual_information([], []) == 0
    with pytest.raises(ValueError):
        plugin_mutual_information([0], [])

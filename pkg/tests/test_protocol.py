import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from ghzsq import protocol
from ghzsq.adversary import MeasureResend, NoAttack
from ghzsq.protocol import (
    InsufficientRounds,
    Mode,
    ProtocolError,
    RoundRecord,
    SessionConfig,
    classify_case,
    consistency_check,
    derive_keys,
    run_round,
    run_session,
    select_check_positions,
)
from ghzsq.qstate import PHI_PLUS, PSI_PLUS

M, R = Mode.MEASURE_RESEND, Mode.REFLECT


@pytest.mark.parametrize("modes,case", [((M, M), 1), ((M, R), 2), ((R, M), 3), ((R, R), 4)])
def test_classify_case(modes, case):
    assert classify_case(*modes) == case
    assert classify_case(*(m.value for m in modes)) == case


def test_classify_case_rejects_unknown_mode():
    with pytest.raises(ValueError):
        classify_case("measure", "reflect")


def record(case, **fields):
    modes = protocol.MODES_OF_CASE[case]
    return RoundRecord(index=0, bob_mode=modes[0], charlie_mode=modes[1], case=case, **fields)


def test_consistency_examples():
    assert consistency_check(record(2, bob_z=1, alice_z={"b": 1}, alice_bell=PHI_PLUS))
    assert not consistency_check(record(2, bob_z=1, alice_z={"b": 1}, alice_bell=PSI_PLUS))
    assert not consistency_check(record(2, bob_z=0, alice_z={"b": 1}, alice_bell=PSI_PLUS))
    assert consistency_check(record(4, alice_ghz=1))
    assert not consistency_check(record(4, alice_ghz=0))
    assert not consistency_check(record(1, bob_z=0, charlie_z=0, alice_z={"a": 0, "b": 0, "c": 0}))
    assert consistency_check(record(1, bob_z=1, charlie_z=1, alice_z={"a": 1, "b": 1, "c": 1}))
    assert consistency_check(record(3, charlie_z=0, alice_z={"c": 0}, alice_bell=PSI_PLUS))


def test_consistency_missing_fields():
    with pytest.raises(ProtocolError, match="missing"):
        consistency_check(record(1, bob_z=0, alice_z={"a": 1}))
    with pytest.raises(ProtocolError):
        consistency_check(record(4))


def test_case1_truth_table():
    # only (a, b, c) with a = NOT(b XOR c) and matching returns pass
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                rec = record(1, bob_z=b, charlie_z=c, alice_z={"a": a, "b": b, "c": c})
                assert consistency_check(rec) == (a == 1 - (b ^ c))


@pytest.mark.parametrize("counts", [{1: 10, 2: 7, 3: 0, 4: 5}, {1: 1, 2: 2, 3: 3, 4: 0}])
def test_select_check_positions(counts):
    groups, start = {}, 0
    for case, c in counts.items():
        groups[case] = list(range(start, start + c))
        start += c
    chosen = select_check_positions(groups, np.random.default_rng(0))
    for case, positions in groups.items():
        picked = chosen & set(positions)
        assert len(picked) == (len(positions) if case == 4 else len(positions) // 2)


def test_round_examples_without_attack():
    rng = np.random.default_rng(3)
    src = protocol.source_state()
    for _ in range(50):
        r = run_round(src, M, M, NoAttack(), rng)
        assert r.alice_z["a"] == 1 - (r.bob_z ^ r.charlie_z)
        r = run_round(src, M, R, NoAttack(), rng)
        assert r.alice_bell == (PSI_PLUS if r.bob_z == 0 else PHI_PLUS)
        assert r.alice_z["b"] == r.bob_z
        r = run_round(src, R, R, NoAttack(), rng)
        assert r.alice_ghz == 1


@given(st.integers(0, 2**31), st.sampled_from([M, R]), st.sampled_from([M, R]))
@settings(max_examples=60)
def test_record_fields_follow_modes(seed, bob, charlie):
    r = run_round(protocol.source_state(), bob, charlie, NoAttack(), np.random.default_rng(seed))
    assert (r.bob_z is not None) == (bob is M)
    assert (r.charlie_z is not None) == (charlie is M)
    assert r.consistent is None and not r.checked
    assert consistency_check(r)


@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_honest_sessions_are_clean(seed, n, tau):
    res = run_session(SessionConfig(n, tau, seed=seed))
    assert not res.aborted
    assert all(v == 0 for v in res.inconsistent_counts.values())
    assert res.keys.agreement and res.keys.secret_sharing_holds
    assert all(len(getattr(res.keys, k)) == n for k in ("k_ab", "k_ac", "k_a", "k_b", "k_c"))
    for r in res.records:
        assert (r.consistent is not None) == r.checked


def test_honest_completeness_at_n64():
    res = run_session(SessionConfig(64, 4, seed=1))
    assert not res.aborted and not any(res.inconsistent_counts.values())


def test_keys_are_unchecked_and_ascending():
    res = run_session(SessionConfig(4, 2, seed=5))
    by_index = {r.index: r for r in res.records}
    for key, case in (("k_ab", 2), ("k_ac", 3), ("k_a", 1)):
        pos = res.keys.positions[key]
        assert pos == sorted(pos)
        assert all(by_index[i].case == case and not by_index[i].checked for i in pos)
        unchecked = sorted(r.index for r in res.records if r.case == case and not r.checked)
        assert pos == unchecked[:4]


def test_derive_keys_example_case1():
    rec = record(1, bob_z=1, charlie_z=1, alice_z={"a": 1, "b": 1, "c": 1})
    others = [
        RoundRecord(1, M, R, 2, bob_z=0, alice_z={"b": 0}, alice_bell=PSI_PLUS),
        RoundRecord(2, R, M, 3, charlie_z=1, alice_z={"c": 1}, alice_bell=PHI_PLUS),
    ]
    keys = derive_keys([rec] + others, 1)
    assert keys.k_a == [1] and keys.k_b == [1] and keys.k_c == [1]
    assert keys.k_ab == keys.k_ab_alice == [0]
    assert keys.k_ac == keys.k_ac_alice == [1]
    with pytest.raises(InsufficientRounds):
        derive_keys([rec], 1)


def test_shortfall_restarts_then_aborts_when_capped():
    # n=16, tau=2 leaves too few unchecked rounds for seed 0 on the first try
    capped = run_session(SessionConfig(16, 2, seed=0, max_attempts=1))
    assert capped.aborted and capped.abort_reason == "insufficient-sift"
    assert not capped.detected
    retried = run_session(SessionConfig(16, 2, seed=0))
    assert not retried.aborted and retried.attempts > 1
    assert "too few unchecked rounds: restarting" in retried.transcript


def test_measure_resend_session_detected():
    res = run_session(SessionConfig(16, 2, seed=0, attack=MeasureResend("b")))
    assert res.aborted and res.detected and res.keys is None


def test_abort_threshold_tolerates_errors():
    res = run_session(SessionConfig(16, 2, seed=0, attack=MeasureResend("b"), abort_threshold=1.0))
    assert res.abort_reason != "error-rate"


def test_transcript_announces_modes_after_receipt():
    t = run_session(SessionConfig(2, 1, seed=0)).transcript
    assert t.index("alice confirms receipt of all returned particles") < t.index(
        "bob and charlie announce measure-resend positions"
    )
    assert t[-1] == "keys derived"


@pytest.mark.parametrize("kwargs", [{"n": 0, "tau": 1}, {"n": 1, "tau": 0}, {"n": 1, "tau": 1, "abort_threshold": 2}, {"n": 1.5, "tau": 1}, {"n": 1, "tau": 1, "max_attempts": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SessionConfig(**kwargs)


def test_rounds_and_determinism():
    cfg = SessionConfig(3, 2, seed=42)
    assert cfg.rounds == 40
    a, b = run_session(cfg), run_session(cfg)
    assert [r.__dict__ for r in a.records] == [r.__dict__ for r in b.records]


def test_case_counts_are_uniform():
    totals = np.zeros(4)
    for seed in range(120):
        res = run_session(SessionConfig(2, 1, seed=seed, max_attempts=1))
        totals += [res.case_counts[c] for c in protocol.CASES]
    assert chisquare(totals).pvalue > 0.01


def test_round_exchangeability_under_fixed_modes():
    # every round starts from a fresh |G_1>: the outcome law does not depend on position
    rng = np.random.default_rng(9)
    early = [run_round(protocol.source_state(), M, R, NoAttack(), rng, index=0).bob_z for _ in range(400)]
    late = [run_round(protocol.source_state(), M, R, NoAttack(), rng, index=999).bob_z for _ in range(400)]
    assert abs(np.mean(early) - np.mean(late)) < 0.15

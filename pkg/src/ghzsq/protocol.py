"""Three-party round loop: Alice (quantum), Bob and Charlie (semiquantum).

Each round Alice prepares a fresh |G_1>_abc, keeps ``a`` and sends ``b`` to
Bob and ``c`` to Charlie. Each semiquantum party independently either
measures in Z and resends a fresh qubit in the observed state, or reflects
the qubit untouched. Alice's measurement on the returned qubits depends on
the realized case:

====  ==============  ==============  ===================================
case  Bob             Charlie         Alice measures
====  ==============  ==============  ===================================
1     measure-resend  measure-resend  Z on a, Z on b, Z on c
2     measure-resend  reflect         Z on b, Bell on (a, c)
3     reflect         measure-resend  Z on c, Bell on (a, b)
4     reflect         reflect         GHZ-like on (a, b, c)
====  ==============  ==============  ===================================

Cases 1-3 have half their rounds checked and the rest sifted into keys;
every case-4 round is checked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import qstate
from .adversary import Attack, EveRecord, NoAttack
from .qstate import PHI_PLUS, PSI_PLUS, Basis, Ket

GHZ_INDEX = 1
CASES = (1, 2, 3, 4)


class Mode(str, enum.Enum):
    MEASURE_RESEND = "measure-resend"
    REFLECT = "reflect"


_CASE_OF = {
    (Mode.MEASURE_RESEND, Mode.MEASURE_RESEND): 1,
    (Mode.MEASURE_RESEND, Mode.REFLECT): 2,
    (Mode.REFLECT, Mode.MEASURE_RESEND): 3,
    (Mode.REFLECT, Mode.REFLECT): 4,
}
MODES_OF_CASE = {case: modes for modes, case in _CASE_OF.items()}


def classify_case(bob_mode: Mode, charlie_mode: Mode) -> int:
    return _CASE_OF[(Mode(bob_mode), Mode(charlie_mode))]


_SOURCE = qstate.ghz_like_state(GHZ_INDEX, ("a", "b", "c"))


def source_state() -> Ket:
    # Kets are immutable, so every round can share one prepared |G_1>.
    return _SOURCE


@dataclass
class RoundRecord:
    index: int
    bob_mode: Mode
    charlie_mode: Mode
    case: int
    bob_z: int | None = None
    charlie_z: int | None = None
    # Alice's Z results keyed by register ("a", "b", "c"), plus Bell / GHZ-like indices.
    alice_z: dict = field(default_factory=dict)
    alice_bell: int | None = None
    alice_ghz: int | None = None
    checked: bool = False
    consistent: bool | None = None
    eve: EveRecord | None = None


class ProtocolError(ValueError):
    pass


def _measure_resend(state: Ket, label: str, rng) -> tuple[Ket, int]:
    # After a Z collapse the register is |value> in product with the rest,
    # which is exactly the freshly prepared qubit that gets sent back.
    out = qstate.measure(state, Basis.Z, [label], rng)
    return out.post_state, out.value


def alice_measure(state: Ket, case: int, rng) -> tuple[dict, int | None, int | None, Ket]:
    """Alice's case-dependent measurement. Returns (z results, bell, ghz, post-state)."""
    z: dict = {}
    bell = ghz = None
    if case == 1:
        for label in ("a", "b", "c"):
            out = qstate.measure(state, Basis.Z, [label], rng)
            z[label], state = out.value, out.post_state
    elif case in (2, 3):
        own, other = ("b", "c") if case == 2 else ("c", "b")
        out = qstate.measure(state, Basis.Z, [own], rng)
        z[own], state = out.value, out.post_state
        out = qstate.measure(state, Basis.BELL, ["a", other], rng)
        bell, state = out.value, out.post_state
    elif case == 4:
        out = qstate.measure(state, Basis.GHZ_LIKE, ["a", "b", "c"], rng)
        ghz, state = out.value, out.post_state
    else:
        raise ProtocolError(f"unknown case {case!r}")
    return z, bell, ghz, state


def run_round(
    source: Ket,
    bob_mode: Mode,
    charlie_mode: Mode,
    attack: Attack,
    rng: np.random.Generator,
    index: int = 0,
    keep_probe: bool = True,
) -> RoundRecord:
    case = _CASE_OF.get((bob_mode, charlie_mode)) or classify_case(bob_mode, charlie_mode)
    bob_mode, charlie_mode = Mode(bob_mode), Mode(charlie_mode)
    eve = EveRecord()
    state = attack.attack_outbound(source, "b", rng, eve)
    state = attack.attack_outbound(state, "c", rng, eve)

    bob_z = charlie_z = None
    if bob_mode is Mode.MEASURE_RESEND:
        state, bob_z = _measure_resend(state, "b", rng)
    if charlie_mode is Mode.MEASURE_RESEND:
        state, charlie_z = _measure_resend(state, "c", rng)

    state = attack.attack_inbound(state, "b", rng, eve)
    state = attack.attack_inbound(state, "c", rng, eve)

    alice_z, bell, ghz, post = alice_measure(state, case, rng)
    if keep_probe and attack.probe_labels:
        eve.probe = qstate.factor_out(post, list(attack.probe_labels))[0]
    return RoundRecord(
        index=index,
        bob_mode=bob_mode,
        charlie_mode=charlie_mode,
        case=case,
        bob_z=bob_z,
        charlie_z=charlie_z,
        alice_z=alice_z,
        alice_bell=bell,
        alice_ghz=ghz,
        eve=eve,
    )


def _require(record: RoundRecord, *values):
    if any(v is None for v in values):
        raise ProtocolError(f"round {record.index} (case {record.case}) is missing measurement fields")


def consistency_check(record: RoundRecord) -> bool:
    """Whether a checked round's announced and measured results fit |G_1>."""
    case = record.case
    z = record.alice_z
    if case == 1:
        _require(record, record.bob_z, record.charlie_z, z.get("a"), z.get("b"), z.get("c"))
        return (
            z["a"] == 1 - (record.bob_z ^ record.charlie_z)
            and z["b"] == record.bob_z
            and z["c"] == record.charlie_z
        )
    if case in (2, 3):
        own, bit = ("b", record.bob_z) if case == 2 else ("c", record.charlie_z)
        _require(record, bit, z.get(own), record.alice_bell)
        expected = PSI_PLUS if bit == 0 else PHI_PLUS
        return z[own] == bit and record.alice_bell == expected
    if case == 4:
        _require(record, record.alice_ghz)
        return record.alice_ghz == GHZ_INDEX
    raise ProtocolError(f"unknown case {case!r}")


def check_fraction(case: int) -> float:
    return 1.0 if case == 4 else 0.5


def select_check_positions(groups: dict, rng: np.random.Generator) -> set[int]:
    """floor(count/2) uniformly chosen positions per case 1-3; every case-4 position."""
    chosen: set[int] = set()
    for case in CASES:
        positions = sorted(groups.get(case, ()))
        if case == 4:
            chosen.update(positions)
        elif positions:
            k = len(positions) // 2
            chosen.update(int(p) for p in rng.choice(positions, size=k, replace=False))
    return chosen


@dataclass
class KeyMaterial:
    k_ab: list[int]
    k_ab_alice: list[int]
    k_ac: list[int]
    k_ac_alice: list[int]
    k_a: list[int]
    k_b: list[int]
    k_c: list[int]
    positions: dict = field(default_factory=dict)

    @property
    def agreement(self) -> bool:
        return self.k_ab == self.k_ab_alice and self.k_ac == self.k_ac_alice

    @property
    def secret_sharing_holds(self) -> bool:
        return all(a == 1 - (b ^ c) for a, b, c in zip(self.k_a, self.k_b, self.k_c))


class InsufficientRounds(ProtocolError):
    pass


def derive_keys(records, n: int) -> KeyMaterial:
    """Keys from the first n unchecked rounds (ascending index) of cases 1, 2, 3."""
    pools = {case: sorted((r for r in records if r.case == case and not r.checked), key=lambda r: r.index) for case in (1, 2, 3)}
    short = {case: len(p) for case, p in pools.items() if len(p) < n}
    if short:
        raise InsufficientRounds(f"need {n} unchecked rounds per case, have {short}")
    c1, c2, c3 = (pools[c][:n] for c in (1, 2, 3))
    return KeyMaterial(
        k_ab=[r.bob_z for r in c2],
        k_ab_alice=[r.alice_z["b"] for r in c2],
        k_ac=[r.charlie_z for r in c3],
        k_ac_alice=[r.alice_z["c"] for r in c3],
        k_a=[r.alice_z["a"] for r in c1],
        k_b=[r.bob_z for r in c1],
        k_c=[r.charlie_z for r in c1],
        positions={
            "k_ab": [r.index for r in c2],
            "k_ac": [r.index for r in c3],
            "k_a": [r.index for r in c1],
            "k_b": [r.index for r in c1],
            "k_c": [r.index for r in c1],
        },
    )


@dataclass(frozen=True)
class SessionConfig:
    n: int
    tau: int
    seed: int = 0
    attack: Attack = field(default_factory=NoAttack)
    abort_threshold: float = 0.0
    # attempts allowed when too few unchecked rounds remain for the keys
    max_attempts: int = 100

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError(f"tau must be a positive integer, got {self.tau!r}")
        if not 0.0 <= self.abort_threshold <= 1.0:
            raise ValueError(f"abort_threshold must lie in [0, 1], got {self.abort_threshold!r}")
        if int(self.max_attempts) != self.max_attempts or self.max_attempts < 1:
            raise ValueError(f"max_attempts must be a positive integer, got {self.max_attempts!r}")

    @property
    def rounds(self) -> int:
        return 8 * (self.n + self.tau)


@dataclass
class SessionResult:
    config: SessionConfig
    records: list[RoundRecord]
    keys: KeyMaterial | None
    aborted: bool
    abort_reason: str | None
    case_counts: dict
    checked_counts: dict
    inconsistent_counts: dict
    error_rates: dict
    transcript: list[str]
    # how many times Steps 1-4 ran; records and counts are from the last one
    attempts: int = 1

    @property
    def detected(self) -> bool:
        """Aborted because some checked round was inconsistent beyond the threshold."""
        return self.abort_reason == "error-rate"


def _attempt(config: SessionConfig, rng, keep_probe: bool, transcript: list[str]):
    attack = config.attack
    transcript.append(f"alice prepares {config.rounds} |G_1> states")
    records = []
    for t in range(config.rounds):
        bob_mode = Mode.MEASURE_RESEND if rng.random() < 0.5 else Mode.REFLECT
        charlie_mode = Mode.MEASURE_RESEND if rng.random() < 0.5 else Mode.REFLECT
        records.append(run_round(source_state(), bob_mode, charlie_mode, attack, rng, index=t, keep_probe=keep_probe))
    transcript.append("alice confirms receipt of all returned particles")
    transcript.append("bob and charlie announce measure-resend positions")

    groups = {case: [r.index for r in records if r.case == case] for case in CASES}
    checks = select_check_positions(groups, rng)
    transcript.append(f"alice selects {len(checks)} check positions")
    transcript.append("bob and charlie announce z results at selected positions")

    checked_counts = {case: 0 for case in CASES}
    inconsistent = {case: 0 for case in CASES}
    for r in records:
        if r.index in checks:
            r.checked = True
            r.consistent = consistency_check(r)
            checked_counts[r.case] += 1
            inconsistent[r.case] += not r.consistent
    error_rates = {case: inconsistent[case] / checked_counts[case] if checked_counts[case] else 0.0 for case in CASES}
    counts = {case: len(groups[case]) for case in CASES}
    return records, counts, checked_counts, inconsistent, error_rates


def run_session(config: SessionConfig, keep_probe: bool = True) -> SessionResult:
    """Steps 1-5 with the configured attack.

    Too high an error rate halts the session. Too few unchecked rounds for an
    n-bit key restarts it from preparation, up to ``max_attempts`` times.
    """
    rng = np.random.default_rng(config.seed)
    transcript: list[str] = []
    attempt = 0
    while True:
        attempt += 1
        records, counts, checked_counts, inconsistent, error_rates = _attempt(config, rng, keep_probe, transcript)
        keys = None
        reason = None
        if any(rate > config.abort_threshold for rate in error_rates.values()):
            reason = "error-rate"
            transcript.append("error rate too high: session halted")
            break
        try:
            keys = derive_keys(records, config.n)
            transcript.append("keys derived")
            break
        except InsufficientRounds:
            if attempt >= config.max_attempts:
                reason = "insufficient-sift"
                transcript.append("too few unchecked rounds: session halted")
                break
            transcript.append("too few unchecked rounds: restarting")

    return SessionResult(
        config=config,
        records=records,
        keys=keys,
        aborted=reason is not None,
        abort_reason=reason,
        case_counts=counts,
        checked_counts=checked_counts,
        inconsistent_counts=inconsistent,
        error_rates=error_rates,
        transcript=transcript,
        attempts=attempt,
    )

"""Channel attacks on the two-way quantum channels.

Every attack exposes its effect on a transit qubit as an exact list of
:class:`Branch` objects (probability, resulting state, what Eve learned).
The session simulator samples one branch per hook; the exact detection
oracle walks all of them.

Hook order inside a round is fixed: outbound ``b``, outbound ``c``, then the
semiquantum parties act, then inbound ``b``, inbound ``c``. Attacks that need
both returning qubits (the joint U_F of the entangle-measure attack) act on
the inbound ``c`` hook.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, NamedTuple, Sequence

import numpy as np

from . import qstate
from .qstate import Basis, Ket, Register

CHANNELS = ("b", "c")


class Branch(NamedTuple):
    probability: float
    state: Ket
    info: dict


def sample_branch(branches: Sequence[Branch], rng: np.random.Generator) -> Branch:
    if len(branches) == 1:
        return branches[0]
    cdf = np.cumsum([br.probability for br in branches])
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return branches[min(i, len(branches) - 1)]


def _check_channel(channel: str):
    if channel not in CHANNELS:
        raise ValueError(f"channel must be 'b' or 'c', got {channel!r}")


@dataclass
class EveRecord:
    """What Eve holds at the end of one round."""

    intercepted: dict = field(default_factory=dict)  # channel -> Z bit she measured
    fake: dict = field(default_factory=dict)  # channel -> bit of the fake qubit she sent
    probe: Ket | None = None

    def absorb(self, info: dict):
        for key in ("intercepted", "fake"):
            if key in info:
                getattr(self, key).update(info[key])


class Attack:
    """Base class: a pass-through at every hook."""

    name: ClassVar[str] = "none"
    # Eve's probe registers, and which probe register was attached to each channel.
    probe_labels: tuple[str, ...] = ()
    probe_channel: dict = {}

    def outbound_branches(self, state: Ket, channel: str) -> list[Branch]:
        _check_channel(channel)
        return [Branch(1.0, state, {})]

    def inbound_branches(self, state: Ket, channel: str) -> list[Branch]:
        _check_channel(channel)
        return [Branch(1.0, state, {})]

    def attack_outbound(self, state: Ket, channel: str, rng: np.random.Generator, record: EveRecord | None = None) -> Ket:
        br = sample_branch(self.outbound_branches(state, channel), rng)
        if record is not None:
            record.absorb(br.info)
        return br.state

    def attack_inbound(self, state: Ket, channel: str, rng: np.random.Generator, record: EveRecord | None = None) -> Ket:
        br = sample_branch(self.inbound_branches(state, channel), rng)
        if record is not None:
            record.absorb(br.info)
        return br.state

    @property
    def leaves_probe(self) -> bool:
        return bool(self.probe_labels)

    def describe(self) -> dict:
        return {"variant": self.name}


@dataclass(frozen=True)
class NoAttack(Attack):
    name: ClassVar[str] = "none"


@dataclass(frozen=True)
class MeasureResend(Attack):
    """Z-measure the outbound qubit and forward a fresh qubit in the observed state."""

    target: str = "b"
    name: ClassVar[str] = "measure-resend"

    def __post_init__(self):
        _check_channel(self.target)

    def outbound_branches(self, state, channel):
        _check_channel(channel)
        if channel != self.target:
            return [Branch(1.0, state, {})]
        branches = []
        for bit in qstate.outcome_distribution(state, Basis.Z, [channel]):
            prob, post = qstate.project(state, Basis.Z, [channel], bit)
            branches.append(Branch(prob, qstate.reset(post, channel, bit), {"intercepted": {channel: bit}}))
        return branches

    def attack_outbound(self, state, channel, rng, record=None):
        _check_channel(channel)
        if channel != self.target:
            return state
        out = qstate.measure(state, Basis.Z, [channel], rng)
        if record is not None:
            record.intercepted[channel] = out.value
        # the collapsed qubit already is the fresh |value> Eve would resend
        return out.post_state

    def describe(self):
        return {"variant": self.name, "target": self.target}


@dataclass(frozen=True)
class InterceptResend(Attack):
    """Keep the genuine qubit and forward a fake Z-basis qubit instead.

    ``fake_bit`` is 0, 1, or ``"random"`` (fresh fair coin each round). The
    genuine particle stays in Eve's register ``E<target>``.
    """

    target: str = "b"
    fake_bit: int | str = 0
    name: ClassVar[str] = "intercept-resend"

    def __post_init__(self):
        _check_channel(self.target)
        if self.fake_bit not in (0, 1, "random"):
            raise ValueError(f"fake_bit must be 0, 1 or 'random', got {self.fake_bit!r}")

    @property
    def kept_label(self) -> str:
        return "E" + self.target

    def outbound_branches(self, state, channel):
        _check_channel(channel)
        if channel != self.target:
            return [Branch(1.0, state, {})]
        kept = qstate.rename(state, {channel: self.kept_label})
        bits = (0, 1) if self.fake_bit == "random" else (self.fake_bit,)
        prob = 1.0 / len(bits)
        return [
            Branch(prob, qstate.tensor(kept, qstate.basis_state(bit, channel)), {"fake": {channel: bit}})
            for bit in bits
        ]

    def describe(self):
        return {"variant": self.name, "target": self.target, "fake_bit": self.fake_bit}


_CNOT_PROBE = {"b": "E", "c": "F"}


@dataclass(frozen=True)
class DoubleCnotSingle(Attack):
    """CNOT onto a fresh |0>_E on the way out, and again on the way back."""

    target: str = "b"
    name: ClassVar[str] = "double-cnot-single"

    def __post_init__(self):
        _check_channel(self.target)

    @property
    def probe_labels(self):
        return ("E",)

    @property
    def probe_channel(self):
        return {self.target: "E"}

    def outbound_branches(self, state, channel):
        _check_channel(channel)
        if channel != self.target:
            return [Branch(1.0, state, {})]
        joined = qstate.tensor(state, qstate.basis_state(0, "E"))
        return [Branch(1.0, qstate.apply_cnot(joined, channel, "E"), {})]

    def inbound_branches(self, state, channel):
        _check_channel(channel)
        if channel != self.target:
            return [Branch(1.0, state, {})]
        return [Branch(1.0, qstate.apply_cnot(state, channel, "E"), {})]

    def describe(self):
        return {"variant": self.name, "target": self.target}


@dataclass(frozen=True)
class DoubleCnotTwice(Attack):
    """Double CNOT on both channels: b with probe E, c with probe F."""

    name: ClassVar[str] = "double-cnot-twice"
    probe_labels: ClassVar[tuple] = ("E", "F")
    probe_channel: ClassVar[dict] = _CNOT_PROBE

    def outbound_branches(self, state, channel):
        _check_channel(channel)
        probe = _CNOT_PROBE[channel]
        joined = qstate.tensor(state, qstate.basis_state(0, probe))
        return [Branch(1.0, qstate.apply_cnot(joined, channel, probe), {})]

    def inbound_branches(self, state, channel):
        _check_channel(channel)
        return [Branch(1.0, qstate.apply_cnot(state, channel, _CNOT_PROBE[channel]), {})]


def build_ue(gamma: Sequence[complex], chi: Sequence) -> np.ndarray:
    """Isometry |i> -> gamma_i0 |0>|chi_i0> + gamma_i1 |1>|chi_i1>.

    ``gamma`` is (g00, g01, g10, g11); ``chi`` is four probe vectors
    (chi00, chi01, chi10, chi11) of a common dimension d. Rows of the
    returned (2d, 2) matrix are ordered (qubit, probe).
    """
    g = np.asarray(gamma, dtype=complex).reshape(2, 2)
    vecs = [np.asarray(v, dtype=complex).reshape(-1) for v in chi]
    if len(vecs) != 4 or len({v.size for v in vecs}) != 1:
        raise ValueError("chi must be four probe vectors of equal dimension")
    for row in range(2):
        if abs(np.sum(np.abs(g[row]) ** 2) - 1.0) > qstate.NORM_TOL:
            raise ValueError(f"gamma row {row} is not normalized: {g[row]}")
    for v in vecs:
        if abs(np.vdot(v, v).real - 1.0) > qstate.NORM_TOL:
            raise ValueError("probe vectors must be normalized")
    d = vecs[0].size
    m = np.zeros((2 * d, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            m[j * d:(j + 1) * d, i] += g[i, j] * vecs[2 * i + j]
    if not qstate.is_isometry(m):
        raise ValueError("resulting columns are not orthonormal; choose compatible probe states")
    return m


def attach_probe(probe_state, dim: int | None = None) -> np.ndarray:
    """U_E that leaves the qubit alone and attaches a fixed probe state."""
    chi = np.asarray(probe_state, dtype=complex).reshape(-1)
    if dim is not None and chi.size != dim:
        raise ValueError("probe state dimension mismatch")
    return build_ue((1, 0, 0, 1), (chi, chi, chi, chi))


@dataclass(frozen=True, eq=False)
class EntangleMeasure(Attack):
    """General entangle-measure attack.

    ``ue_b`` and ``ue_c`` are (2d, 2) isometries attaching probes E1 and E2 to
    the outbound qubits; ``uf`` is a (4d^2, 4d^2) unitary on
    (b, c, E1, E2) applied once both qubits are on their way back.
    """

    ue_b: np.ndarray
    ue_c: np.ndarray
    uf: np.ndarray
    probe_dim: int = 4
    name: ClassVar[str] = "entangle-measure"
    probe_labels: ClassVar[tuple] = ("E1", "E2")
    probe_channel: ClassVar[dict] = {"b": "E1", "c": "E2"}

    def __post_init__(self):
        d = self.probe_dim
        for label in ("ue_b", "ue_c", "uf"):
            object.__setattr__(self, label, np.array(getattr(self, label), dtype=complex))
        if int(d) != d or d < 1:
            raise ValueError(f"probe_dim must be a positive integer, got {d!r}")
        for label in ("ue_b", "ue_c"):
            m = getattr(self, label)
            if m.shape != (2 * d, 2):
                raise ValueError(f"{label} must have shape {(2 * d, 2)}, got {m.shape}")
            if not qstate.is_isometry(m):
                raise ValueError(f"{label} is not an isometry within tolerance")
        dim = 4 * d * d
        if self.uf.shape != (dim, dim) or not qstate.is_isometry(self.uf):
            raise ValueError(f"uf must be a {dim}x{dim} unitary")
        for label in ("ue_b", "ue_c", "uf"):
            getattr(self, label).flags.writeable = False

    @classmethod
    def identity(cls, probe_state=None, probe_dim: int = 4) -> "EntangleMeasure":
        chi = np.zeros(probe_dim, dtype=complex)
        chi[0] = 1.0
        if probe_state is not None:
            chi = np.asarray(probe_state, dtype=complex)
        ue = attach_probe(chi, probe_dim)
        return cls(ue, ue, np.eye(4 * probe_dim * probe_dim), probe_dim)

    def outbound_branches(self, state, channel):
        _check_channel(channel)
        probe = Register(self.probe_channel[channel], self.probe_dim)
        ue = self.ue_b if channel == "b" else self.ue_c
        return [Branch(1.0, qstate.apply_isometry(state, channel, [channel, probe], ue, check=False), {})]

    def inbound_branches(self, state, channel):
        _check_channel(channel)
        if channel != "c":
            return [Branch(1.0, state, {})]
        return [Branch(1.0, qstate.apply_unitary(state, ["b", "c", "E1", "E2"], self.uf, check=False), {})]

    def describe(self):
        return {
            "variant": self.name,
            "probe_dim": self.probe_dim,
            "ue_b": _complex_rows(self.ue_b),
            "ue_c": _complex_rows(self.ue_c),
            "uf": _complex_rows(self.uf),
        }


def _complex_rows(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


PRESETS = {
    "none": lambda: NoAttack(),
    "measure-resend-b": lambda: MeasureResend("b"),
    "measure-resend-c": lambda: MeasureResend("c"),
    "intercept-resend-b": lambda: InterceptResend("b"),
    "intercept-resend-c": lambda: InterceptResend("c"),
    "double-cnot-b": lambda: DoubleCnotSingle("b"),
    "double-cnot-c": lambda: DoubleCnotSingle("c"),
    "double-cnot-both": lambda: DoubleCnotTwice(),
}


def preset(name: str) -> Attack:
    """Look up a named attack; ``entangle-measure:<path>`` loads a matrix file."""
    if name.startswith("entangle-measure:"):
        from .matrixfile import load_entangle_measure

        return load_entangle_measure(name.split(":", 1)[1])
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown attack preset {name!r}; choose from {sorted(PRESETS)} or entangle-measure:<file>") from None


def probe_bit_guess(probe: Ket, label: str, rng: np.random.Generator) -> int:
    """Eve's fixed readout: Z-measure one probe register, keep the parity of its index."""
    rho = qstate.reduced_density(probe, [label])
    probs = np.clip(np.real(np.diag(rho)), 0, None)
    outcome = int(rng.choice(probs.size, p=probs / probs.sum()))
    return outcome & 1


def eve_guess(attack: Attack, records, keys, rng: np.random.Generator) -> dict[str, list[int]]:
    """Eve's best guess of each key bit from what she kept.

    ``records`` are the session's round records (indexable by round index)
    and ``keys`` the derived :class:`~ghzsq.protocol.KeyMaterial`.
    For probe-based attacks she reads her probe in a fixed basis (see
    :func:`probe_bit_guess`); with no usable information she flips a coin.
    """
    by_index = {r.index: r for r in records}

    def channel_guess(rec, channel):
        eve = rec.eve
        if eve is None:
            return None
        if channel in eve.intercepted:
            return eve.intercepted[channel]
        if channel in eve.fake:
            return eve.fake[channel]
        label = attack.probe_channel.get(channel)
        if label is not None and eve.probe is not None:
            return probe_bit_guess(eve.probe, label, rng)
        return None

    def coin():
        return int(rng.integers(2))

    guesses = {}
    for key, channel in (("k_ab", "b"), ("k_ac", "c"), ("k_b", "b"), ("k_c", "c")):
        out = []
        for idx in keys.positions[key]:
            g = channel_guess(by_index[idx], channel)
            out.append(coin() if g is None else g)
        guesses[key] = out
    out = []
    for idx in keys.positions["k_a"]:
        gb, gc = channel_guess(by_index[idx], "b"), channel_guess(by_index[idx], "c")
        out.append(coin() if gb is None or gc is None else 1 - (gb ^ gc))
    guesses["k_a"] = out
    return guesses

"""Exact pure-state simulation over labeled registers.

A :class:`Ket` is an immutable amplitude vector together with an ordered tuple
of :class:`Register` labels. Operations address registers by name, so callers
never have to track wire order by hand.

Measurement bases and their outcome encodings:

* ``Z``: one qubit, value 0 or 1.
* ``BELL``: two qubits, 0 = phi+, 1 = phi-, 2 = psi+, 3 = psi-.
* ``GHZ_LIKE``: three qubits, value i is the GHZ-like state G_i.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

NORM_TOL = 1e-10
MATRIX_TOL = 1e-8
_ZERO_PROB = 1e-15

_SQRT1_2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class Register:
    name: str
    dim: int = 2

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValueError(f"register name must be a non-empty string, got {self.name!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"register dimension must be a positive integer, got {self.dim!r}")


RegisterLike = Union[str, Register]


def _as_register(r: RegisterLike) -> Register:
    return r if isinstance(r, Register) else Register(r)


def _name(r: RegisterLike) -> str:
    return r.name if isinstance(r, Register) else r


def _names(labels) -> list[str]:
    if isinstance(labels, (str, Register)):
        return [_name(labels)]
    return [_name(r) for r in labels]


class Ket:
    """Normalized pure state over an ordered tuple of registers."""

    __slots__ = ("registers", "amplitudes", "labels", "dims", "_index")

    def __init__(self, registers: Iterable[RegisterLike], amplitudes, *, check: bool = True):
        regs = tuple(_as_register(r) for r in registers)
        names = [r.name for r in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate register labels: {names}")
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        expected = math.prod(r.dim for r in regs)
        if amps.size != expected:
            raise ValueError(f"amplitude length {amps.size} does not match register dims (expected {expected})")
        if check:
            norm = np.vdot(amps, amps).real
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        self._fill(regs, amps)

    def _fill(self, regs: tuple, amps: np.ndarray):
        amps.flags.writeable = False
        self.registers = regs
        self.amplitudes = amps
        self.labels = tuple(r.name for r in regs)
        self.dims = tuple(r.dim for r in regs)
        self._index = {n: i for i, n in enumerate(self.labels)}

    @classmethod
    def _like(cls, other: "Ket", amplitudes: np.ndarray) -> "Ket":
        # Same registers as ``other``; skips rebuilding the label metadata.
        self = cls.__new__(cls)
        amplitudes.flags.writeable = False
        self.registers, self.labels, self.dims, self._index = other.registers, other.labels, other.dims, other._index
        self.amplitudes = amplitudes
        return self

    @classmethod
    def _raw(cls, registers: tuple, amplitudes: np.ndarray) -> "Ket":
        # Internal constructor for results of norm-preserving operations.
        self = cls.__new__(cls)
        self._fill(registers, amplitudes.reshape(-1))
        return self

    def axis(self, label: RegisterLike) -> int:
        try:
            return self._index[_name(label)]
        except KeyError:
            raise KeyError(f"unknown register {_name(label)!r}; state has {self.labels}") from None

    def register(self, label: RegisterLike) -> Register:
        return self.registers[self.axis(label)]

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def __contains__(self, label) -> bool:
        return _name(label) in self._index

    def __repr__(self):
        terms = []
        for idx in np.flatnonzero(np.abs(self.amplitudes) > 1e-12):
            digits = np.unravel_index(idx, self.dims)
            amp = self.amplitudes[idx]
            terms.append(f"({amp.real:+.4f}{amp.imag:+.4f}j)|{''.join(map(str, digits))}>")
        return f"Ket[{','.join(self.labels)}]({' '.join(terms)})"


def _from_tensor(registers: Sequence[Register], tensor: np.ndarray) -> Ket:
    return Ket._raw(tuple(registers), np.ascontiguousarray(tensor, dtype=complex))


class Basis(str, enum.Enum):
    Z = "Z"
    BELL = "BELL"
    GHZ_LIKE = "GHZ_LIKE"

    @property
    def arity(self) -> int:
        return _ARITY[self]


_ARITY = {Basis.Z: 1, Basis.BELL: 2, Basis.GHZ_LIKE: 3}

# Bell index order: phi+, phi-, psi+, psi-
PHI_PLUS, PHI_MINUS, PSI_PLUS, PSI_MINUS = range(4)
BELL_NAMES = ("phi+", "phi-", "psi+", "psi-")

_BELL = np.array(
    [
        [1, 0, 0, 1],
        [1, 0, 0, -1],
        [0, 1, 1, 0],
        [0, 1, -1, 0],
    ],
    dtype=complex,
) * _SQRT1_2

# Rows are G_0..G_7 over |abc> with a the most significant bit.
_GHZ_LIKE = 0.5 * np.array(
    [
        [1, 0, 0, 1, 0, 1, 1, 0],
        [0, 1, 1, 0, 1, 0, 0, 1],
        [1, 0, 0, -1, 0, -1, 1, 0],
        [0, 1, -1, 0, -1, 0, 0, 1],
        [1, 0, 0, -1, 0, 1, -1, 0],
        [0, 1, -1, 0, 1, 0, 0, -1],
        [1, 0, 0, 1, 0, -1, -1, 0],
        [0, 1, 1, 0, -1, 0, 0, -1],
    ],
    dtype=complex,
)

# Columns are the basis kets, indexed by outcome value.
_BASIS_MATRIX = {
    Basis.Z: np.eye(2, dtype=complex),
    Basis.BELL: _BELL.T.copy(),
    Basis.GHZ_LIKE: _GHZ_LIKE.T.copy(),
}
# Rows are the bras, so bras @ m gives per-outcome components.
_BASIS_BRAS = {b: m.conj().T.copy() for b, m in _BASIS_MATRIX.items()}
for _m in (*_BASIS_MATRIX.values(), *_BASIS_BRAS.values()):
    _m.flags.writeable = False


def _basis(basis) -> Basis:
    return basis if basis.__class__ is Basis else Basis(basis)


def basis_matrix(basis: Basis) -> np.ndarray:
    return _BASIS_MATRIX[_basis(basis)]


def _distinct_qubits(labels: Sequence[RegisterLike], count: int) -> tuple[Register, ...]:
    regs = tuple(_as_register(r) for r in labels)
    if len(regs) != count:
        raise ValueError(f"expected {count} labels, got {len(regs)}")
    if len({r.name for r in regs}) != count:
        raise ValueError(f"labels must be distinct: {[r.name for r in regs]}")
    for r in regs:
        if r.dim != 2:
            raise ValueError(f"register {r.name!r} is not a qubit (dim={r.dim})")
    return regs


def ghz_like_state(index: int, labels: Sequence[RegisterLike] = ("a", "b", "c")) -> Ket:
    if int(index) != index or not 0 <= index <= 7:
        raise ValueError(f"GHZ-like index must be in 0..7, got {index!r}")
    return Ket(_distinct_qubits(labels, 3), _GHZ_LIKE[int(index)])


def bell_state(index: int, labels: Sequence[RegisterLike] = ("a", "b")) -> Ket:
    if int(index) != index or not 0 <= index <= 3:
        raise ValueError(f"Bell index must be in 0..3, got {index!r}")
    return Ket(_distinct_qubits(labels, 2), _BELL[int(index)])


_QUBIT_KETS: dict = {}


def basis_state(values: Union[int, Sequence[int]], labels: Union[RegisterLike, Sequence[RegisterLike]]) -> Ket:
    """Computational basis ket, e.g. ``basis_state([0, 1], ["b", "E"])`` is |01>_bE."""
    if isinstance(labels, str) and values in (0, 1):
        key = (labels, int(values))
        if key not in _QUBIT_KETS:
            _QUBIT_KETS[key] = Ket([labels], [1.0 - key[1], key[1]])
        return _QUBIT_KETS[key]
    if isinstance(labels, (str, Register)):
        labels = [labels]
        values = [values] if np.isscalar(values) else values
    regs = tuple(_as_register(r) for r in labels)
    values = list(values)
    if len(values) != len(regs):
        raise ValueError("one value per register is required")
    for v, r in zip(values, regs):
        if not 0 <= v < r.dim:
            raise ValueError(f"value {v} out of range for register {r.name!r} (dim {r.dim})")
    amps = np.zeros(tuple(r.dim for r in regs), dtype=complex)
    amps[tuple(values)] = 1.0
    return _from_tensor(regs, amps)


def ket_from_vector(vector, label: RegisterLike) -> Ket:
    vec = np.asarray(vector, dtype=complex).reshape(-1)
    return Ket([Register(_name(label), vec.size)], vec)


def tensor(left: Ket, right: Ket) -> Ket:
    if not left._index.keys().isdisjoint(right._index):
        overlap = sorted(set(left.labels) & set(right.labels))
        raise ValueError(f"overlapping register labels: {overlap}")
    return Ket._raw(left.registers + right.registers, np.outer(left.amplitudes, right.amplitudes))


def reorder(state: Ket, labels: Sequence[RegisterLike]) -> Ket:
    names = _names(labels)
    if tuple(names) == state.labels:
        return state
    if sorted(names) != sorted(state.labels):
        raise ValueError(f"reorder needs a permutation of {state.labels}, got {names}")
    perm = [state._index[n] for n in names]
    return _from_tensor([state.registers[i] for i in perm], np.transpose(state.tensor(), perm))


def rename(state: Ket, mapping: dict) -> Ket:
    regs = tuple(Register(mapping.get(r.name, r.name), r.dim) for r in state.registers)
    if len({r.name for r in regs}) != len(regs):
        raise ValueError(f"renaming {mapping} creates duplicate labels")
    return Ket._raw(regs, state.amplitudes)


def inner(left: Ket, right: Ket) -> complex:
    """<left|right>, aligning register order by label."""
    if set(left.labels) != set(right.labels):
        raise ValueError(f"register mismatch: {left.labels} vs {right.labels}")
    right = reorder(right, left.labels)
    return complex(np.vdot(left.amplitudes, right.amplitudes))


@functools.lru_cache(maxsize=512)
def _gather(dims: tuple, axes: tuple) -> np.ndarray:
    # flat amplitude positions laid out as (named registers) x (rest)
    rest = tuple(i for i in range(len(dims)) if i not in axes)
    rows = math.prod(dims[i] for i in axes)
    g = np.transpose(np.arange(math.prod(dims)).reshape(dims), axes + rest).reshape(rows, -1)
    g.flags.writeable = False
    return g


def _split(state: Ket, names: Sequence[str]):
    """Matrix view with the named registers as rows, the rest as columns.

    Returns (matrix, gather index, remaining registers).
    """
    index = state._index
    # state.axis raises a readable KeyError for unknown labels
    axes = tuple(index[n] if n in index else state.axis(n) for n in names)
    g = _gather(state.dims, axes)
    rest = [r for i, r in enumerate(state.registers) if i not in axes]
    return state.amplitudes[g], g, rest


def _unsplit(state: Ket, gather: np.ndarray, m: np.ndarray) -> Ket:
    """Inverse of :func:`_split` for a matrix of the same shape."""
    out = np.empty(state.amplitudes.size, dtype=complex)
    out[gather] = m
    return Ket._like(state, out)


def _check_targets(state: Ket, basis: Basis, targets) -> list[str]:
    names = _names(targets)
    arity = _ARITY[basis]
    if len(names) != arity:
        raise ValueError(f"{basis.value} measurement takes {arity} target(s), got {len(names)}")
    if len(set(names)) != arity:
        raise ValueError(f"duplicate measurement targets: {names}")
    dims, index = state.dims, state._index
    for n in names:
        if dims[index[n] if n in index else state.axis(n)] != 2:
            raise ValueError(f"register {n!r} is not a qubit")
    return names


def _components(state: Ket, basis: Basis, targets):
    """Row k is the unnormalized rest-of-system vector paired with outcome k."""
    names = _check_targets(state, basis, targets)
    m, order, _ = _split(state, names)
    coeffs = m if basis is Basis.Z else _BASIS_BRAS[basis] @ m
    return coeffs, order


def _row_weights(m: np.ndarray) -> np.ndarray:
    v = np.ascontiguousarray(m).view(np.float64)
    return (v * v).sum(axis=1)


def _collapse(state: Ket, basis: Basis, gather, value: int, row: np.ndarray, prob: float) -> Ket:
    scaled = row / math.sqrt(prob)
    if basis is Basis.Z:
        out = np.zeros(state.amplitudes.size, dtype=complex)
        out[gather[value]] = scaled
        return Ket._like(state, out)
    return _unsplit(state, gather, np.outer(_BASIS_MATRIX[basis][:, value], scaled))


def outcome_probabilities(state: Ket, basis: Basis, targets) -> np.ndarray:
    """Born probabilities for every outcome value, as a dense array."""
    coeffs, _ = _components(state, _basis(basis), targets)
    return _row_weights(coeffs)


def outcome_distribution(state: Ket, basis: Basis, targets) -> dict[int, float]:
    probs = outcome_probabilities(state, basis, targets)
    return {v: p for v, p in enumerate(probs.tolist()) if p > 1e-14}


def project(state: Ket, basis: Basis, targets, value: int) -> tuple[float, Ket | None]:
    """Project onto one outcome. Returns (probability, renormalized post-state or None)."""
    basis = _basis(basis)
    coeffs, order = _components(state, basis, targets)
    if not 0 <= value < coeffs.shape[0]:
        raise ValueError(f"outcome {value} out of range for {basis.value}")
    row = coeffs[value]
    prob = float(np.vdot(row, row).real)
    if prob <= _ZERO_PROB:
        return prob, None
    return prob, _collapse(state, basis, order, value, row, prob)


class MeasurementOutcome(NamedTuple):
    basis: Basis
    value: int
    probability: float
    post_state: Ket


def measure(state: Ket, basis: Basis, targets, rng: np.random.Generator) -> MeasurementOutcome:
    basis = _basis(basis)
    coeffs, order = _components(state, basis, targets)
    probs = _row_weights(coeffs).tolist()
    u = rng.random() * sum(probs)
    value, acc = 0, 0.0
    for value, p in enumerate(probs):
        acc += p
        if u < acc and p > _ZERO_PROB:
            break
    else:
        value = max(v for v, p in enumerate(probs) if p > _ZERO_PROB)
    prob = probs[value]
    return MeasurementOutcome(basis, value, prob, _collapse(state, basis, order, value, coeffs[value], prob))


def is_isometry(matrix: np.ndarray, tol: float = MATRIX_TOL) -> bool:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        return False
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1])))) <= tol


def apply_isometry(
    state: Ket,
    inputs: Union[RegisterLike, Sequence[RegisterLike]],
    outputs: Sequence[RegisterLike],
    matrix,
    *,
    check: bool = True,
) -> Ket:
    """Apply ``matrix`` (columns indexed by inputs, rows by outputs) to the named registers.

    The output registers take the place of the first input register; an output
    may reuse an input's label (``"b" -> ("b", "E1")``).
    """
    in_names = _names(inputs)
    out_regs = [_as_register(r) for r in outputs]
    m = np.asarray(matrix, dtype=complex)
    in_dim = math.prod(state.register(n).dim for n in in_names)
    out_dim = math.prod(r.dim for r in out_regs)
    if m.shape != (out_dim, in_dim):
        raise ValueError(f"matrix shape {m.shape} does not match (outputs {out_dim}, inputs {in_dim})")
    if check and not is_isometry(m):
        raise ValueError("matrix is not an isometry within tolerance")
    first = min(state.axis(n) for n in in_names)
    block, _, rest = _split(state, in_names)
    remaining = {r.name for r in rest}
    clash = [r.name for r in out_regs if r.name in remaining]
    if clash or len({r.name for r in out_regs}) != len(out_regs):
        raise ValueError(f"output labels collide: {[r.name for r in out_regs]}")
    pos = sum(1 for r in state.registers[:first] if r.name not in in_names)
    out = (m @ block).reshape([r.dim for r in out_regs] + [r.dim for r in rest])
    k = len(out_regs)
    if pos:
        out = np.moveaxis(out, list(range(k)), list(range(pos, pos + k)))
    return _from_tensor(rest[:pos] + out_regs + rest[pos:], out)


def apply_unitary(state: Ket, targets: Sequence[RegisterLike], matrix, *, check: bool = True) -> Ket:
    """Unitary on the named registers, row-major over ``targets`` in the order given."""
    names = _names(targets)
    m = np.asarray(matrix, dtype=complex)
    if check and (m.ndim != 2 or m.shape[0] != m.shape[1] or not is_isometry(m)):
        raise ValueError("matrix is not unitary within tolerance")
    block, order, _ = _split(state, names)
    if m.shape[1] != block.shape[0]:
        raise ValueError(f"matrix shape {m.shape} does not match target dimension {block.shape[0]}")
    return _unsplit(state, order, m @ block)


def apply_cnot(state: Ket, control: RegisterLike, target: RegisterLike) -> Ket:
    c, t = state.axis(control), state.axis(target)
    if c == t:
        raise ValueError("control and target must differ")
    for ax in (c, t):
        if state.dims[ax] != 2:
            raise ValueError(f"register {state.labels[ax]!r} is not a qubit")
    g = _gather(state.dims, (c, t))
    # rows are (control, target) = 00, 01, 10, 11; CNOT swaps the last two
    out = np.empty(state.amplitudes.size, dtype=complex)
    out[g] = state.amplitudes[g[[0, 1, 3, 2]]]
    return Ket._like(state, out)


def factor_out(state: Ket, labels: Sequence[RegisterLike], tol: float = 1e-8) -> tuple[Ket, Ket]:
    """Split a product state into (part on ``labels``, rest).

    Raises ValueError if the named registers are entangled with the rest.
    """
    names = _names(labels)
    m, _, rest = _split(state, names)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if s.size > 1 and s[1] > tol:
        raise ValueError(f"registers {names} are entangled with the rest (schmidt coefficients {s[:2]})")
    part_regs = [state.register(n) for n in names]
    if not rest:
        return _from_tensor(part_regs, m[:, 0]), Ket([], [1.0])
    return _from_tensor(part_regs, u[:, 0]), _from_tensor(rest, s[0] * vh[0])


def _unentangled_rest(state: Ket, name: str):
    m, order, rest = _split(state, [name])
    weights = _row_weights(m).tolist()
    occupied = [i for i, w in enumerate(weights) if w > _ZERO_PROB]
    if len(occupied) == 1:
        # computational-basis register: slice it off directly
        k = occupied[0]
        return m, order, rest, m[k] / math.sqrt(weights[k])
    return m, order, rest, factor_out(state, [name])[1].amplitudes


def drop(state: Ket, label: RegisterLike) -> Ket:
    """Discard a register that is unentangled with the rest of the state."""
    _, _, rest, vec = _unentangled_rest(state, _name(label))
    return _from_tensor(rest, vec)


def reset(state: Ket, label: RegisterLike, value: int) -> Ket:
    """Discard an unentangled register and prepare a fresh |value> in its place."""
    name = _name(label)
    m, gather, _, vec = _unentangled_rest(state, name)
    if not 0 <= value < m.shape[0]:
        raise ValueError(f"value {value} out of range for register {name!r}")
    out = np.zeros(state.amplitudes.size, dtype=complex)
    out[gather[value]] = vec
    return Ket._like(state, out)


def reduced_density(state: Ket, labels: Sequence[RegisterLike]) -> np.ndarray:
    m, _, _ = _split(state, _names(labels))
    return m @ m.conj().T


def fidelity(state: Ket | np.ndarray, reference: Ket | np.ndarray) -> float:
    """Fidelity between two states given as kets or density matrices.

    Kets are aligned by label; density matrices must share one register order.
    """
    if isinstance(state, Ket) and isinstance(reference, Ket):
        return abs(inner(reference, state)) ** 2
    rho = state.amplitudes if isinstance(state, Ket) else np.asarray(state)
    sigma = reference.amplitudes if isinstance(reference, Ket) else np.asarray(reference)
    if rho.ndim == 1:
        rho, sigma = sigma, rho
    if sigma.ndim == 1:
        return float(np.real(np.vdot(sigma, rho @ sigma)))
    from scipy.linalg import sqrtm

    root = sqrtm(rho)
    return float(np.real(np.trace(sqrtm(root @ sigma @ root))) ** 2)

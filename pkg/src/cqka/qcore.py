"""Dense statevector engine for the small registers the key-agreement rounds need.

Amplitudes are stored in Kronecker order: ``labels[0]`` is the most significant
qubit, so ``amps.reshape((2,) * n)`` has one axis per label in label order.
All public functions address qubits by label, never by position.

States are immutable values; every operation returns a new :class:`StateVector`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

MAX_QUBITS = 8
NORM_ATOL = 1e-12
AMP_ATOL = 1e-10

_SQ = 1.0 / np.sqrt(2.0)

QubitLabel = Hashable


class QCoreError(ValueError):
    """Raised for malformed registers, unknown labels and invalid operators."""


class BasisChoice(enum.Enum):
    Z = "Z"
    X = "X"

    @property
    def vectors(self) -> np.ndarray:
        """Rows are the eigenvectors for bit 0 and bit 1."""
        return _BASIS_VECTORS[self]


_BASIS_VECTORS = {
    BasisChoice.Z: np.array([[1, 0], [0, 1]], dtype=complex),
    BasisChoice.X: np.array([[_SQ, _SQ], [_SQ, -_SQ]], dtype=complex),
}
for _v in _BASIS_VECTORS.values():
    _v.setflags(write=False)


class BellState(enum.Enum):
    """The four Bell states, valued by their two-bit code (hi, lo)."""

    PHI_PLUS = (0, 0)
    PHI_MINUS = (0, 1)
    PSI_PLUS = (1, 0)
    PSI_MINUS = (1, 1)

    @property
    def vector(self) -> np.ndarray:
        return BELL_MATRIX[self.index]

    @property
    def index(self) -> int:
        hi, lo = self.value
        return 2 * hi + lo

    @property
    def symbol(self) -> str:
        return _BELL_SYMBOLS[self]

    @classmethod
    def from_index(cls, index: int) -> "BellState":
        return _BELL_BY_INDEX[index]

    def __str__(self) -> str:
        return self.symbol


_BELL_BY_INDEX = (BellState.PHI_PLUS, BellState.PHI_MINUS, BellState.PSI_PLUS, BellState.PSI_MINUS)
_BELL_SYMBOLS = {
    BellState.PHI_PLUS: "phi+",
    BellState.PHI_MINUS: "phi-",
    BellState.PSI_PLUS: "psi+",
    BellState.PSI_MINUS: "psi-",
}

#: Row ``i`` is the Bell vector with two-bit code ``i`` (phi+, phi-, psi+, psi-).
BELL_MATRIX = np.array(
    [
        [_SQ, 0, 0, _SQ],
        [_SQ, 0, 0, -_SQ],
        [0, _SQ, _SQ, 0],
        [0, _SQ, -_SQ, 0],
    ],
    dtype=complex,
)
BELL_MATRIX.setflags(write=False)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([_SQ, _SQ], dtype=complex)
KET_MINUS = np.array([_SQ, -_SQ], dtype=complex)


def ket(bit: int, basis: BasisChoice = BasisChoice.Z) -> np.ndarray:
    """Eigenvector of ``basis`` carrying classical value ``bit``."""
    return basis.vectors[bit]


@dataclass(frozen=True, eq=False)
class StateVector:
    labels: tuple
    amps: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if not 1 <= n <= MAX_QUBITS:
            raise QCoreError(f"register size {n} outside 1..{MAX_QUBITS}")
        if len(set(self.labels)) != n:
            raise QCoreError(f"duplicate labels in {self.labels!r}")
        if self.amps.shape != (2**n,):
            raise QCoreError(f"amplitude vector shape {self.amps.shape} does not match {n} qubits")

    @property
    def num_qubits(self) -> int:
        return len(self.labels)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def tensor(self) -> np.ndarray:
        return self.amps.reshape((2,) * self.num_qubits)

    def axis(self, label: QubitLabel) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise QCoreError(f"unknown qubit label {label!r}") from None

    def __contains__(self, label) -> bool:
        return label in self.labels

    def __repr__(self) -> str:
        return f"StateVector(labels={self.labels!r}, amps={np.round(self.amps, 6)!r})"


def _new(labels, amps) -> StateVector:
    # trusted constructor for results of valid operations; skips re-validation
    amps = np.ascontiguousarray(amps, dtype=complex).reshape(-1)
    amps.setflags(write=False)
    out = object.__new__(StateVector)
    object.__setattr__(out, "labels", tuple(labels))
    object.__setattr__(out, "amps", amps)
    return out


def _unit(vec, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    if not np.isfinite(vec).all():
        raise QCoreError(f"{what} has non-finite entries")
    norm = np.sqrt(np.vdot(vec, vec).real)
    if abs(norm - 1.0) > NORM_ATOL:
        raise QCoreError(f"{what} is not a unit vector (norm {norm:.15f})")
    return vec


def _factor(labels, factor) -> tuple[tuple, np.ndarray]:
    labels = tuple(labels) if isinstance(labels, (tuple, list)) else (labels,)
    if isinstance(factor, BellState):
        vec = factor.vector
    elif isinstance(factor, StateVector):
        vec = factor.amps
    else:
        vec = factor
    vec = _unit(vec, f"factor for {labels!r}")
    if vec.shape != (2 ** len(labels),):
        raise QCoreError(f"factor for {labels!r} has dimension {vec.shape[0]}, expected {2 ** len(labels)}")
    return labels, vec


def make_state(spec: Sequence[tuple]) -> StateVector:
    """Tensor product of ``(label(s), factor)`` entries.

    A factor is a unit vector, a :class:`BellState` (for a pair of labels) or
    any state-shaped array. For example ``[(1, KET0), ((2, 3), BellState.PHI_PLUS)]``.
    """
    labels: list = []
    amps = np.ones(1, dtype=complex)
    for lab, factor in spec:
        lab, vec = _factor(lab, factor)
        labels.extend(lab)
        amps = np.multiply.outer(amps, vec).ravel()
    if not labels:
        raise QCoreError("empty state description")
    _check_size(len(labels))
    if len(set(labels)) != len(labels):
        raise QCoreError(f"duplicate labels in {tuple(labels)!r}")
    return _new(labels, amps)


def _check_size(n: int) -> None:
    if n > MAX_QUBITS:
        raise QCoreError(f"register size {n} exceeds {MAX_QUBITS}")


def extend(state: StateVector, spec: Sequence[tuple]) -> StateVector:
    """Append fresh factors to ``state`` (``state ⊗ factors``)."""
    extra = make_state(spec)
    clash = set(extra.labels) & set(state.labels)
    if clash:
        raise QCoreError(f"labels already present: {sorted(map(repr, clash))}")
    _check_size(state.num_qubits + extra.num_qubits)
    return _new(state.labels + extra.labels, np.multiply.outer(state.amps, extra.amps).ravel())


@lru_cache(maxsize=None)
def _cnot_perm(n: int, c: int, t: int) -> np.ndarray:
    i = np.arange(2**n)
    return i ^ (((i >> (n - 1 - c)) & 1) << (n - 1 - t))


def apply_cnot(state: StateVector, control: QubitLabel, target: QubitLabel) -> StateVector:
    if control == target:
        raise QCoreError("control and target must differ")
    perm = _cnot_perm(state.num_qubits, state.axis(control), state.axis(target))
    return _new(state.labels, state.amps[perm])


def apply_isometry(
    state: StateVector,
    target: QubitLabel,
    ancilla_labels: Sequence[QubitLabel],
    columns: Sequence[np.ndarray],
) -> StateVector:
    """Entangle ``target`` with a fresh ancilla register.

    ``columns[b]`` is the image of ``|b>_target |init>_ancilla`` written in the
    joint ``target ⊗ ancilla`` space (target most significant). The ancilla
    labels are appended to the register.
    """
    ancilla_labels = tuple(ancilla_labels)
    if not ancilla_labels:
        raise QCoreError("isometry needs at least one ancilla label")
    if set(ancilla_labels) & set(state.labels) or len(set(ancilla_labels)) != len(ancilla_labels):
        raise QCoreError(f"ancilla labels {ancilla_labels!r} are not fresh")
    m = len(ancilla_labels)
    _check_size(state.num_qubits + m)
    dim = 2 ** (m + 1)
    if len(columns) != 2:
        raise QCoreError("isometry needs exactly two columns")
    c0 = _unit(columns[0], "isometry column 0")
    c1 = _unit(columns[1], "isometry column 1")
    if c0.shape != (dim,) or c1.shape != (dim,):
        raise QCoreError(f"isometry columns must have dimension {dim}")
    if abs(np.vdot(c0, c1)) > AMP_ATOL:
        raise QCoreError(f"isometry columns overlap by {abs(np.vdot(c0, c1)):.3e}; not an isometry")
    ax = state.axis(target)
    n = state.num_qubits
    t = np.moveaxis(state.tensor(), ax, -1)  # (..., 2)
    cols = np.stack([c0, c1])  # (2, dim)
    t = (t @ cols).reshape(t.shape[:-1] + (2,) + (2,) * m)
    t = np.moveaxis(t, n - 1, ax)
    return _new(state.labels + ancilla_labels, t)


@lru_cache(maxsize=None)
def _group_index(n: int, axes: tuple) -> np.ndarray:
    """Flat indices arranged as (measured-qubit values, remaining-qubit values)."""
    k = len(axes)
    grid = np.arange(2**n).reshape((2,) * n)
    return np.ascontiguousarray(np.moveaxis(grid, axes, range(k)).reshape(2**k, -1))


def _split(state: StateVector, labels: Sequence[QubitLabel]) -> tuple[np.ndarray, np.ndarray]:
    axes = tuple(state.axis(lab) for lab in labels)
    if len(set(axes)) != len(axes):
        raise QCoreError(f"repeated labels in {tuple(labels)!r}")
    idx = _group_index(state.num_qubits, axes)
    return state.amps[idx], idx


def outcome_probabilities(state: StateVector, labels: Sequence[QubitLabel], basis: np.ndarray) -> np.ndarray:
    """Born probabilities of a projective measurement with orthonormal ``basis`` rows."""
    m, _ = _split(state, labels)
    coeffs = np.asarray(basis).conj() @ m
    return np.einsum("ij,ij->i", coeffs.real, coeffs.real) + np.einsum("ij,ij->i", coeffs.imag, coeffs.imag)


_BRANCH_CACHE: dict = {}
_BRANCH_CACHE_LIMIT = 4096


def _branches(state: StateVector, labels: tuple, basis: np.ndarray) -> tuple[list, list]:
    """Outcome probabilities and collapsed states, memoised on the state value."""
    key = (state.labels, state.amps.tobytes(), labels, basis.tobytes())
    hit = _BRANCH_CACHE.get(key)
    if hit is not None:
        return hit
    m, idx = _split(state, labels)
    coeffs = basis.conj() @ m
    probs = (coeffs.real**2 + coeffs.imag**2).sum(axis=1)
    posts = []
    for i, p in enumerate(probs):
        if p <= 0.0:
            posts.append(None)
            continue
        post = np.empty(2**state.num_qubits, dtype=complex)
        post[idx] = np.multiply.outer(basis[i], coeffs[i] / np.sqrt(p))
        posts.append(_new(state.labels, post))
    if len(_BRANCH_CACHE) >= _BRANCH_CACHE_LIMIT:
        _BRANCH_CACHE.clear()
    hit = _BRANCH_CACHE[key] = (probs.tolist(), posts)
    return hit


def measure_projective(
    state: StateVector,
    labels: Sequence[QubitLabel],
    basis: np.ndarray,
    rng: np.random.Generator,
) -> tuple[int, StateVector]:
    """Measure ``labels`` in the orthonormal basis given by the rows of ``basis``.

    The measured qubits stay in the register, collapsed onto the observed basis
    vector.
    """
    labels = tuple(labels)
    basis = np.asarray(basis, dtype=complex)
    if basis.shape != (2 ** len(labels), 2 ** len(labels)):
        raise QCoreError("measurement basis must be square and match the measured qubits")
    probs, posts = _branches(state, labels, basis)
    u = rng.random() * sum(probs)
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc and posts[i] is not None:
            return i, posts[i]
    i = max(k for k, post in enumerate(posts) if post is not None)
    return i, posts[i]


def bell_probabilities(state: StateVector, q1: QubitLabel, q2: QubitLabel) -> np.ndarray:
    """Probabilities of phi+, phi-, psi+, psi- on the pair ``(q1, q2)``."""
    if q1 == q2:
        raise QCoreError("Bell measurement needs two distinct qubits")
    return outcome_probabilities(state, (q1, q2), BELL_MATRIX)


def measure_bell(
    state: StateVector, q1: QubitLabel, q2: QubitLabel, rng: np.random.Generator
) -> tuple[BellState, StateVector]:
    if q1 == q2:
        raise QCoreError("Bell measurement needs two distinct qubits")
    i, post = measure_projective(state, (q1, q2), BELL_MATRIX, rng)
    return BellState.from_index(i), post


def measure_single(
    state: StateVector, q: QubitLabel, basis: BasisChoice, rng: np.random.Generator
) -> tuple[int, StateVector]:
    return measure_projective(state, (q,), basis.vectors, rng)


def _assignment_vector(key, value) -> tuple[tuple, np.ndarray]:
    labels = tuple(key) if isinstance(key, tuple) else (key,)
    if isinstance(value, BellState):
        if len(labels) != 2:
            raise QCoreError("a Bell state must be assigned to a pair of labels")
        return labels, value.vector
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        if len(labels) != 1 or value not in (0, 1):
            raise QCoreError(f"bit assignment {value!r} for {labels!r} is invalid")
        return labels, ket(int(value))
    vec = np.asarray(value, dtype=complex).reshape(-1)
    if vec.shape != (2 ** len(labels),):
        raise QCoreError(f"assignment vector for {labels!r} has wrong dimension")
    return labels, vec


def project(state: StateVector, assignment: Mapping) -> tuple[tuple, np.ndarray]:
    """Partial inner product of ``state`` with the assigned factors.

    Returns the remaining labels and the (unnormalised) amplitude array over
    them. Keys are single labels or tuples of labels; values are bits,
    :class:`BellState` members or explicit vectors.
    """
    t = state.tensor()
    labels = list(state.labels)
    for key, value in assignment.items():
        labs, vec = _assignment_vector(key, value)
        axes = []
        for lab in labs:
            if lab not in labels:
                raise QCoreError(f"unknown or doubly assigned label {lab!r}")
            axes.append(labels.index(lab))
        bra = vec.conj().reshape((2,) * len(labs))
        t = np.tensordot(bra, t, axes=(list(range(len(labs))), axes))
        for lab in labs:
            labels.remove(lab)
    return tuple(labels), t.reshape(-1)


def amplitude_of(state: StateVector, assignment: Mapping) -> complex:
    """Exact amplitude ``<assignment|state>``; the assignment must cover every label."""
    rest, amp = project(state, assignment)
    if rest:
        raise QCoreError(f"assignment leaves labels {rest!r} unassigned")
    return complex(amp[0])


def joint_probabilities(state: StateVector, groups: Iterable[tuple[Sequence[QubitLabel], np.ndarray]]) -> np.ndarray:
    """Joint Born law of several commuting projective measurements.

    ``groups`` is a sequence of ``(labels, basis)`` pairs over disjoint qubits.
    The result has one axis per group; unmeasured qubits are traced out.
    """
    t = state.tensor()
    qubits = list(state.labels)
    g = 0
    for labs, basis in groups:
        labs = tuple(labs)
        for lab in labs:
            if lab not in qubits:
                raise QCoreError(f"unknown or repeated label {lab!r}")
        k = len(labs)
        bra = np.asarray(basis, dtype=complex).conj().reshape((-1,) + (2,) * k)
        axes = [g + qubits.index(lab) for lab in labs]
        # new outcome axis lands in front of the earlier ones
        t = np.tensordot(bra, t, axes=(list(range(1, k + 1)), axes))
        qubits = [q for q in qubits if q not in labs]
        g += 1
    p = np.abs(t) ** 2
    p = p.reshape(p.shape[:g] + (-1,)).sum(axis=-1)
    return np.transpose(p, list(range(g - 1, -1, -1)))

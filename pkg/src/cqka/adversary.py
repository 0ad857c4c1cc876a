"""Eavesdropper models: source impersonation, collective ancilla attacks, intercept-resend.

The collective attack entangles each travelling qubit with a private two-qubit
probe through the isometry

    |0>|E> -> A|0>|z00> + B|1>|z01>
    |1>|E> -> B|0>|z10> + A|1>|z11>

with ``<z00|z11> = cos(alpha)`` and ``<z01|z10> = cos(beta)`` and every other
pair of probe states orthogonal. The probe is realised on qubits
``("z0", "z1")`` for the channel to Alice and ``("h0", "h1")`` for the
channel to Bob.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import qcore
from .qcore import BasisChoice, StateVector

ZETA_LABELS = ("z0", "z1")
ETA_LABELS = ("h0", "h1")
NORM_ATOL = 1e-12


class AttackParameterError(ValueError):
    pass


def _check_norm(what: str, *amps: float) -> None:
    total = sum(abs(a) ** 2 for a in amps)
    if abs(total - 1.0) > NORM_ATOL:
        raise AttackParameterError(f"{what} squared magnitudes sum to {total!r}, not 1")


@dataclass(frozen=True)
class ImpersonationParams:
    """Amplitudes of the forged source state a|00> + b|01> + c|10> + d|11>."""

    a: complex = 1.0
    b: complex = 0.0
    c: complex = 0.0
    d: complex = 0.0

    def __post_init__(self):
        _check_norm("impersonation amplitudes", self.a, self.b, self.c, self.d)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=complex)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "ImpersonationParams":
        z = rng.normal(size=4) + 1j * rng.normal(size=4)
        z /= np.linalg.norm(z)
        # renormalise in float arithmetic so the validation tolerance is met
        return cls(*(complex(x) for x in z / math.sqrt(sum(abs(x) ** 2 for x in z))))


@dataclass(frozen=True)
class CollectiveParams:
    A_zeta: float = 1.0
    B_zeta: float = 0.0
    A_eta: float = 1.0
    B_eta: float = 0.0
    alpha_zeta: float = math.pi / 2
    beta_zeta: float = math.pi / 2
    alpha_eta: float = math.pi / 2
    beta_eta: float = math.pi / 2
    e: float = 0.5

    def __post_init__(self):
        _check_norm("zeta amplitudes", self.A_zeta, self.B_zeta)
        _check_norm("eta amplitudes", self.A_eta, self.B_eta)
        if not 0.0 <= self.e <= 1.0:
            raise AttackParameterError(f"bias e must lie in [0, 1], got {self.e!r}")
        for name in ("alpha_zeta", "beta_zeta", "alpha_eta", "beta_eta"):
            if not math.isfinite(getattr(self, name)):
                raise AttackParameterError(f"{name} must be finite")

    @classmethod
    def symmetric(cls, alpha: float, e: float = 0.5, A: float = 1.0, beta: float = math.pi / 2):
        """Same probe on both channels; ``B`` follows from ``A``."""
        B = math.sqrt(max(0.0, 1.0 - A * A))
        return cls(A, B, A, B, alpha, beta, alpha, beta, e)

    def channel(self, which: str) -> tuple[float, float, float, float]:
        if which == "zeta":
            return self.A_zeta, self.B_zeta, self.alpha_zeta, self.beta_zeta
        if which == "eta":
            return self.A_eta, self.B_eta, self.alpha_eta, self.beta_eta
        raise ValueError(f"unknown channel {which!r}")


def build_ancilla_vectors(alpha: float, beta: float) -> tuple[np.ndarray, ...]:
    """Probe states ``(z00, z01, z10, z11)`` as 4-vectors on two probe qubits."""
    e = np.eye(4, dtype=complex)
    z00 = e[0]
    z01 = e[1]
    z10 = math.cos(beta) * e[1] + math.sin(beta) * e[2]
    z11 = math.cos(alpha) * e[0] + math.sin(alpha) * e[3]
    return z00, z01, z10, z11


def isometry_columns(A: float, B: float, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Images of ``|0>`` and ``|1>`` on (travelling qubit, probe qubits)."""
    z00, z01, z10, z11 = build_ancilla_vectors(alpha, beta)
    k0, k1 = qcore.KET0, qcore.KET1
    col0 = A * np.kron(k0, z00) + B * np.kron(k1, z01)
    col1 = B * np.kron(k0, z10) + A * np.kron(k1, z11)
    return col0, col1


def helstrom_basis(alpha: float, beta: float) -> np.ndarray:
    """Rows are Eve's measurement vectors for results 00, 01, 10, 11.

    Within span{z00, z11} and within span{z01, z10} the pair is the symmetric
    minimum-error measurement for two equiprobable pure states.
    """
    e = np.eye(4, dtype=complex)
    rows = np.empty((4, 4), dtype=complex)
    lo, hi = alpha / 2 - math.pi / 4, alpha / 2 + math.pi / 4
    rows[0] = math.cos(lo) * e[0] + math.sin(lo) * e[3]
    rows[3] = math.cos(hi) * e[0] + math.sin(hi) * e[3]
    lo, hi = beta / 2 - math.pi / 4, beta / 2 + math.pi / 4
    rows[1] = math.cos(lo) * e[1] + math.sin(lo) * e[2]
    rows[2] = math.cos(hi) * e[1] + math.sin(hi) * e[2]
    return rows


def collective_tap(params: CollectiveParams) -> tuple["ProbeTap", "ProbeTap"]:
    """Taps for the channel to Alice (zeta probe) and the channel to Bob (eta probe)."""
    return ProbeTap(*params.channel("zeta"), ZETA_LABELS), ProbeTap(*params.channel("eta"), ETA_LABELS)


class ProbeTap:
    """Channel tap attaching a fresh probe to each passing qubit."""

    def __init__(self, A: float, B: float, alpha: float, beta: float, labels: tuple):
        self.labels = tuple(labels)
        self.columns = isometry_columns(A, B, alpha, beta)

    def __call__(self, state: StateVector, label) -> StateVector:
        return qcore.apply_isometry(state, label, self.labels, self.columns)


class InterceptResendTap:
    """Measures each passing qubit in a random (or fixed) basis and forwards the collapsed qubit."""

    def __init__(self, rng: np.random.Generator, basis: Optional[BasisChoice] = None):
        self.rng = rng
        self.basis = basis
        self.results: list[tuple[BasisChoice, int]] = []

    def __call__(self, state: StateVector, label) -> StateVector:
        basis = self.basis or (BasisChoice.X if self.rng.integers(2) else BasisChoice.Z)
        bit, state = qcore.measure_single(state, label, basis, self.rng)
        self.results.append((basis, bit))
        return state


def intercept_resend_tap(rng: np.random.Generator, basis: Optional[BasisChoice] = None) -> InterceptResendTap:
    return InterceptResendTap(rng, basis)


def impersonate_source(params: ImpersonationParams):
    """Source override: Eve's forged pair plus a uniformly random announced bit."""
    vec = params.vector

    def source(rng: np.random.Generator):
        return vec, int(rng.integers(2))

    return source


def eve_key_guess(zeta_result, eta_result, k_C, coin):
    """Eve's key-bit guess from her probe results.

    The high bit of each result is her inferred input bit on that channel. A
    source pair always has even Z-parity, so an odd inferred parity flags a
    probe error; Eve folds that flag and the announced source bit into the
    output of her bias coin (``coin`` is 0 with probability ``e``). Works
    elementwise on integer arrays.
    """
    flag = (np.asarray(zeta_result) >> 1) ^ (np.asarray(eta_result) >> 1)
    out = np.asarray(coin) ^ flag ^ np.asarray(k_C)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EveRecord:
    zeta_result: int
    eta_result: int
    guess: int

    @property
    def parity_flag(self) -> int:
        return (self.zeta_result >> 1) ^ (self.eta_result >> 1)


def eve_measure_and_guess(
    state: StateVector, k_C: int, params: CollectiveParams, rng: np.random.Generator
) -> EveRecord:
    """Helstrom-measure both probes left in ``state`` after the session and guess the key bit."""
    for lab in ZETA_LABELS + ETA_LABELS:
        if lab not in state:
            raise AttackParameterError(f"register carries no probe qubit {lab!r}")
    probs = qcore.joint_probabilities(
        state,
        [(ZETA_LABELS, helstrom_basis(params.alpha_zeta, params.beta_zeta)),
         (ETA_LABELS, helstrom_basis(params.alpha_eta, params.beta_eta))],
    ).ravel()
    k = int(rng.choice(16, p=probs / probs.sum()))
    zr, er = divmod(k, 4)
    coin = 0 if rng.random() < params.e else 1
    return EveRecord(zr, er, eve_key_guess(zr, er, k_C, coin))


@dataclass(frozen=True)
class NoAttack:
    pass


@dataclass(frozen=True)
class Impersonation:
    params: ImpersonationParams


@dataclass(frozen=True)
class Collective:
    params: CollectiveParams


@dataclass(frozen=True)
class InterceptResend:
    basis: Optional[BasisChoice] = None


AttackStrategy = Union[NoAttack, Impersonation, Collective, InterceptResend]

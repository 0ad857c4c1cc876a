"""Parties, announcements and key reconciliation for the two key-agreement protocols.

Protocol 1 is controlled: Charlie distributes Bell pairs (phi+ or phi-) whose
halves travel to Alice and Bob over separate channels padded with decoy
qubits. Each participant CNOTs the received half onto a fresh Z-basis qubit,
Bell-measures, and after Charlie's announcement the three public bits plus a
private two-bit outcome fix the counterpart's outcome. Protocol 2 drops
Charlie: Alice prepares the pair herself with the source bit equal to her own
bit.

Qubit labels follow the usual particle numbering: ``1`` Alice's own qubit,
``2``/``3`` the two halves of the source pair, ``4`` Bob's own qubit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import qcore
from .qcore import BasisChoice, BellState, StateVector

ALICE, BOB, CHARLIE = "alice", "bob", "charlie"
ALICE_QUBIT, CA_QUBIT, CB_QUBIT, BOB_QUBIT = 1, 2, 3, 4
DECOY_QUBIT = "decoy"

DEFAULT_TOLERANCE = 0.10
DEFAULT_CHECK_FRACTION = 0.2

ABORT_DECOY = "decoy check failed"
ABORT_KEY = "key check failed"
ABORT_INCONSISTENT = "inconsistent announcement"

#: A channel tap receives the in-flight register and the label of the
#: travelling qubit and returns the (possibly modified) register.
ChannelTap = Callable[[StateVector, object], StateVector]

#: Source override for Protocol 1: returns a two-qubit state for labels (2, 3)
#: and the bit that will be announced in place of Charlie's.
SourceOverride = Callable[[np.random.Generator], "tuple[np.ndarray, int]"]


class ProtocolError(RuntimeError):
    """Out-of-order announcement or other misuse of the session interface."""


class ReconciliationError(ValueError):
    """Announced bits and a private outcome match no reconciliation-table row."""


class TwoBit(NamedTuple):
    hi: int
    lo: int

    def __xor__(self, other: "TwoBit") -> "TwoBit":
        return TwoBit(self.hi ^ other.hi, self.lo ^ other.lo)

    def __str__(self) -> str:
        return f"{self.hi}{self.lo}"

    @classmethod
    def parse(cls, text: str) -> "TwoBit":
        return cls(int(text[0]), int(text[1]))

    @classmethod
    def of(cls, outcome: BellState) -> "TwoBit":
        """Private two-bit record of a Bell outcome (phi+ 00, phi- 01, psi+ 10, psi- 11)."""
        return cls(*outcome.value)

    def bell(self) -> BellState:
        return BellState((self.hi, self.lo))


@dataclass(frozen=True)
class DecoySpec:
    position: int
    basis: BasisChoice
    bit: int


@dataclass(frozen=True)
class Announcement:
    who: str
    bits: tuple
    round: int


class AnnouncementLog:
    """Public classical channel with the ordering rule enforced.

    In Protocol 1 Charlie must announce before Alice or Bob may; in Protocol 2
    Charlie takes no part.
    """

    def __init__(self, protocol: int):
        if protocol not in (1, 2):
            raise ValueError(f"unknown protocol {protocol!r}")
        self.protocol = protocol
        self._entries: list[Announcement] = []

    def announce(self, who: str, bits: Sequence[int]) -> Announcement:
        spoken = {a.who for a in self._entries}
        if who not in (ALICE, BOB, CHARLIE):
            raise ProtocolError(f"unknown party {who!r}")
        if who in spoken:
            raise ProtocolError(f"{who} has already announced")
        if self.protocol == 1 and who != CHARLIE and CHARLIE not in spoken:
            raise ProtocolError(f"{who} may not announce before charlie")
        if self.protocol == 2 and who == CHARLIE:
            raise ProtocolError("protocol 2 has no controller")
        entry = Announcement(who, tuple(int(b) for b in bits), len(self._entries))
        self._entries.append(entry)
        return entry

    def bits(self, who: str) -> tuple:
        for a in self._entries:
            if a.who == who:
                return a.bits
        raise ProtocolError(f"{who} has not announced")

    @property
    def entries(self) -> tuple:
        return tuple(self._entries)


# (k_C, k_A, k_B, r_A, r_B, K) for Protocol 1, and (k_A, k_B, r_A, r_B, K) for Protocol 2.
_T1 = """
0 0 0 00 00 0
0 0 1 01 01 0
0 0 1 00 10 1
0 0 0 01 11 1
0 1 0 10 00 1
0 1 1 11 01 1
0 1 1 10 10 0
0 1 0 11 11 0
1 0 1 00 01 1
1 0 0 01 00 1
1 0 0 00 11 0
1 0 1 01 10 0
1 1 1 10 01 0
1 1 0 11 00 0
1 1 0 10 11 1
1 1 1 11 10 1
"""
_T2 = """
0 0 00 00 0
0 1 01 01 0
0 1 00 10 1
0 0 01 11 1
1 1 10 01 0
1 0 11 00 0
1 0 10 11 1
1 1 11 10 1
"""


def _rows(text: str) -> tuple:
    out = []
    for line in text.strip().splitlines():
        *bits, ra, rb, k = line.split()
        out.append((*map(int, bits), TwoBit.parse(ra), TwoBit.parse(rb), int(k)))
    return tuple(out)


RECONCILIATION_TABLE_1 = _rows(_T1)
RECONCILIATION_TABLE_2 = _rows(_T2)


def charlie_prepare(n: int, rng: np.random.Generator) -> tuple[list[BellState], list[int]]:
    """Draw ``n`` source pairs; bit 0 stands for phi+ and bit 1 for phi-."""
    if n < 1:
        raise ValueError("n must be at least 1")
    bits = rng.integers(0, 2, n).tolist()
    return [source_state(b) for b in bits], bits


def source_state(bit: int) -> BellState:
    return BellState.PHI_MINUS if bit else BellState.PHI_PLUS


def insert_decoys(seq_len: int, p: int, rng: np.random.Generator) -> list[DecoySpec]:
    """Choose ``p`` decoy slots in an enlarged sequence of ``seq_len + p`` qubits."""
    if p < 0 or seq_len < 0:
        raise ValueError("sequence length and decoy count must be non-negative")
    if p == 0:
        return []
    positions = np.sort(rng.choice(seq_len + p, size=p, replace=False)).tolist()
    bases = rng.integers(0, 2, p).tolist()
    bits = rng.integers(0, 2, p).tolist()
    return [
        DecoySpec(pos, BasisChoice.X if b else BasisChoice.Z, v) for pos, b, v in zip(positions, bases, bits)
    ]


_DECOY_STATES = {
    (basis, bit): qcore.make_state([(DECOY_QUBIT, qcore.ket(bit, basis))])
    for basis in BasisChoice
    for bit in (0, 1)
}


def decoy_state(spec: DecoySpec) -> StateVector:
    return _DECOY_STATES[spec.basis, spec.bit]


def verify_decoys(measured: Sequence[tuple], specs: Sequence[DecoySpec], tolerance: float) -> tuple[float, bool]:
    """Compare receiver results ``(position, basis, bit)`` against the announced decoys."""
    if len(measured) != len(specs):
        raise ValueError(f"{len(measured)} measured decoys for {len(specs)} announced")
    if not specs:
        return 0.0, True
    errors = 0
    for (pos, basis, bit), spec in zip(measured, specs):
        if pos != spec.position:
            raise ValueError(f"decoy position mismatch: measured {pos}, announced {spec.position}")
        if basis != spec.basis:
            raise ValueError(f"decoy at {pos} measured in {basis.value}, announced {spec.basis.value}")
        errors += bit != spec.bit
    rate = errors / len(specs)
    return rate, rate <= tolerance


def participant_encode_measure(
    state: StateVector,
    received: object,
    own_bit: int,
    rng: np.random.Generator,
    *,
    fresh: object,
    fresh_first: bool,
) -> tuple[TwoBit, BellState, StateVector]:
    """Attach ``|own_bit>`` as ``fresh``, CNOT received->fresh, Bell-measure the pair.

    ``fresh_first`` selects the pair order of the Bell measurement (Alice
    measures (1, 2), Bob measures (3, 4)).
    """
    state = qcore.extend(state, [(fresh, qcore.ket(own_bit))])
    state = qcore.apply_cnot(state, received, fresh)
    pair = (fresh, received) if fresh_first else (received, fresh)
    outcome, state = qcore.measure_bell(state, *pair, rng)
    return TwoBit.of(outcome), outcome, state


def bob_announce_bit(outcome: BellState) -> int:
    """Public bit for Bob's outcome: 0 for phi+ or psi-, 1 for phi- or psi+."""
    hi, lo = outcome.value
    return hi ^ lo


def _lookup(rows, public: tuple, own: TwoBit, role: str) -> TwoBit:
    if role == ALICE:
        hits = {r[-2] for r in rows if r[: len(public)] == public and r[-3] == own}
    elif role == BOB:
        hits = {r[-3] for r in rows if r[: len(public)] == public and r[-2] == own}
    else:
        raise ValueError(f"role must be {ALICE!r} or {BOB!r}")
    if len(hits) != 1:
        raise ReconciliationError(f"announcements {public} with own outcome {own} match {len(hits)} rows")
    return hits.pop()


def infer_counterpart(k_C: int, k_A: int, k_B: int, own: TwoBit, role: str) -> TwoBit:
    """Counterpart's private outcome in Protocol 1 from the public bits and ``own``."""
    return _lookup(RECONCILIATION_TABLE_1, (k_C, k_A, k_B), TwoBit(*own), role)


def infer_counterpart_p2(k_A: int, k_B: int, own: TwoBit, role: str) -> TwoBit:
    return _lookup(RECONCILIATION_TABLE_2, (k_A, k_B), TwoBit(*own), role)


def final_key_bit(r_A: TwoBit, r_B: TwoBit) -> int:
    x = TwoBit(*r_A) ^ TwoBit(*r_B)
    return x.hi ^ x.lo


@dataclass(frozen=True)
class PartyChoices:
    """Fixed choices for parties that refuse to randomise (``None`` means honest)."""

    alice_bit: Optional[int] = None
    bob_bit: Optional[int] = None
    source_bit: Optional[int] = None


def _choices(fixed: Optional[int], n: int, rng: np.random.Generator) -> list[int]:
    if fixed is None:
        return rng.integers(0, 2, n).tolist()
    if fixed not in (0, 1):
        raise ValueError(f"forced bit must be 0 or 1, got {fixed!r}")
    return [fixed] * n


@dataclass
class SessionTranscript:
    protocol: int
    n: int
    p: int
    k_C: list = field(default_factory=list)
    source_states: list = field(default_factory=list)
    k_A: list = field(default_factory=list)
    bob_bits: list = field(default_factory=list)
    r_A: list = field(default_factory=list)
    r_B: list = field(default_factory=list)
    k_B: list = field(default_factory=list)
    announcements: tuple = ()
    decoys: int = 0
    decoy_error_rate: float = 0.0
    aborted: bool = False
    abort_reason: str = ""
    final_key_alice: list = field(default_factory=list)
    final_key_bob: list = field(default_factory=list)
    check_positions: list = field(default_factory=list)
    key_mismatch_rate: float = 0.0
    # per-round registers after all measurements; kept for adversary post-processing
    registers: list = field(default_factory=list, repr=False)

    @property
    def keys_agree(self) -> bool:
        return not self.aborted and self.final_key_alice == self.final_key_bob

    def retained_key(self, who: str = ALICE) -> list:
        """Key bits left after removing the publicly compared positions."""
        key = self.final_key_alice if who == ALICE else self.final_key_bob
        drop = set(self.check_positions)
        return [b for i, b in enumerate(key) if i not in drop]

    def to_dict(self) -> dict:
        bits = lambda xs: "".join(str(int(x)) for x in xs)  # noqa: E731
        return {
            "protocol": self.protocol,
            "n": self.n,
            "p": self.p,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "decoys": self.decoys,
            "decoy_error_rate": self.decoy_error_rate,
            "source_states": [str(s) for s in self.source_states],
            "k_A": bits(self.k_A),
            "bob_bits": bits(self.bob_bits),
            "r_A": [str(r) for r in self.r_A],
            "r_B": [str(r) for r in self.r_B],
            "announcements": [{"who": a.who, "round": a.round, "bits": bits(a.bits)} for a in self.announcements],
            "final_key_alice": bits(self.final_key_alice),
            "final_key_bob": bits(self.final_key_bob),
            "check_positions": list(self.check_positions),
            "key_mismatch_rate": self.key_mismatch_rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _transmit(registers, label, decoys, n, tap, rng):
    """Send the enlarged sequence through ``tap`` and measure the decoys on arrival."""
    by_pos = {d.position: d for d in decoys}
    measured = []
    i = 0
    for pos in range(n + len(decoys)):
        spec = by_pos.get(pos)
        if spec is None:
            if tap is not None:
                registers[i] = tap(registers[i], label)
            i += 1
            continue
        reg = decoy_state(spec)
        if tap is not None:
            reg = tap(reg, DECOY_QUBIT)
        bit, _ = qcore.measure_single(reg, DECOY_QUBIT, spec.basis, rng)
        measured.append((pos, spec.basis, bit))
    return measured


def _spot_check(t: SessionTranscript, check_fraction: float, tolerance: float, rng) -> None:
    if check_fraction <= 0:
        return
    m = max(1, int(round(check_fraction * t.n)))
    pos = np.sort(rng.choice(t.n, size=min(m, t.n), replace=False)).tolist()
    t.check_positions = pos
    diff = sum(t.final_key_alice[i] != t.final_key_bob[i] for i in pos)
    t.key_mismatch_rate = diff / len(pos)
    if t.key_mismatch_rate > tolerance:
        t.aborted, t.abort_reason = True, ABORT_KEY


def _measure_and_reconcile(t, registers, log, infer, rng, choices, with_charlie):
    for i, reg in enumerate(registers):
        r_a, _, reg = participant_encode_measure(
            reg, CA_QUBIT, t.k_A[i], rng, fresh=ALICE_QUBIT, fresh_first=True
        )
        r_b, out_b, reg = participant_encode_measure(
            reg, CB_QUBIT, t.bob_bits[i], rng, fresh=BOB_QUBIT, fresh_first=False
        )
        registers[i] = reg
        t.r_A.append(r_a)
        t.r_B.append(r_b)
        t.k_B.append(bob_announce_bit(out_b))

    if with_charlie:
        log.announce(CHARLIE, t.k_C)
    log.announce(ALICE, t.k_A)
    log.announce(BOB, t.k_B)
    t.announcements = log.entries

    try:
        guessed_b = [infer(i, t.r_A[i], ALICE) for i in range(t.n)]
        guessed_a = [infer(i, t.r_B[i], BOB) for i in range(t.n)]
    except ReconciliationError as exc:
        t.aborted, t.abort_reason = True, f"{ABORT_INCONSISTENT}: {exc}"
        return
    t.final_key_alice = [final_key_bit(a, b) for a, b in zip(t.r_A, guessed_b)]
    t.final_key_bob = [final_key_bit(a, b) for a, b in zip(guessed_a, t.r_B)]


def run_protocol1(
    n: int,
    p: Optional[int] = None,
    tap_ca: Optional[ChannelTap] = None,
    tap_cb: Optional[ChannelTap] = None,
    impersonator: Optional[SourceOverride] = None,
    tolerance: float = DEFAULT_TOLERANCE,
    rng: Optional[np.random.Generator] = None,
    *,
    check_fraction: float = DEFAULT_CHECK_FRACTION,
    choices: PartyChoices = PartyChoices(),
) -> SessionTranscript:
    """One full session of the controlled protocol. ``p`` defaults to ``n`` decoys per channel."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if rng is None:
        raise ValueError("an explicit random source is required")
    p = n if p is None else p
    t = SessionTranscript(protocol=1, n=n, p=p)

    # Charlie (or an impersonator) fills the source sequence
    if impersonator is None:
        t.k_C = _choices(choices.source_bit, n, rng)
        t.source_states = [source_state(b) for b in t.k_C]
        registers = [_PAIR_STATES[b] for b in t.k_C]
    else:
        registers = []
        for _ in range(n):
            vec, announced = impersonator(rng)
            registers.append(qcore.make_state([((CA_QUBIT, CB_QUBIT), vec)]))
            t.k_C.append(int(announced))
            t.source_states.append("forged")

    decoys_a = insert_decoys(n, p, rng)
    decoys_b = insert_decoys(n, p, rng)
    measured = _transmit(registers, CA_QUBIT, decoys_a, n, tap_ca, rng)
    measured += _transmit(registers, CB_QUBIT, decoys_b, n, tap_cb, rng)
    t.decoys = len(decoys_a) + len(decoys_b)
    t.decoy_error_rate, ok = verify_decoys(measured, decoys_a + decoys_b, tolerance)
    if not ok:
        t.aborted, t.abort_reason = True, ABORT_DECOY
        t.registers = registers
        return t

    t.k_A = _choices(choices.alice_bit, n, rng)
    t.bob_bits = _choices(choices.bob_bit, n, rng)
    log = AnnouncementLog(1)

    def infer(i, own, role):
        return infer_counterpart(t.k_C[i], t.k_A[i], t.k_B[i], own, role)

    _measure_and_reconcile(t, registers, log, infer, rng, choices, with_charlie=True)
    t.registers = registers
    if not t.aborted:
        _spot_check(t, check_fraction, tolerance, rng)
    return t


def run_protocol2(
    n: int,
    tap_ab: Optional[ChannelTap] = None,
    rng: Optional[np.random.Generator] = None,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    check_fraction: float = DEFAULT_CHECK_FRACTION,
    choices: PartyChoices = PartyChoices(),
) -> SessionTranscript:
    """Two-party session: Alice is her own source, with source bit equal to her bit."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if rng is None:
        raise ValueError("an explicit random source is required")
    if choices.source_bit is not None:
        raise ValueError("protocol 2 has no independent source choice")
    t = SessionTranscript(protocol=2, n=n, p=0)
    t.k_A = _choices(choices.alice_bit, n, rng)
    t.k_C = list(t.k_A)
    t.source_states = [source_state(b) for b in t.k_A]
    registers = [_PAIR_STATES[b] for b in t.k_A]
    if tap_ab is not None:
        registers = [tap_ab(reg, CB_QUBIT) for reg in registers]
    t.bob_bits = _choices(choices.bob_bit, n, rng)
    log = AnnouncementLog(2)

    def infer(i, own, role):
        return infer_counterpart_p2(t.k_A[i], t.k_B[i], own, role)

    _measure_and_reconcile(t, registers, log, infer, rng, choices, with_charlie=False)
    t.registers = registers
    if not t.aborted:
        _spot_check(t, check_fraction, tolerance, rng)
    return t


_PAIR_STATES = {b: qcore.make_state([((CA_QUBIT, CB_QUBIT), source_state(b))]) for b in (0, 1)}

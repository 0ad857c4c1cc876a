"""Independent reference computations for cross-checking the package.

Everything here uses full 2^n x 2^n matrices built with np.kron on a fixed
qubit order and shares no code with cqka.
"""
import itertools

import numpy as np

S = 1 / np.sqrt(2)
I2 = np.eye(2)
P0 = np.diag([1.0, 0.0])
P1 = np.diag([0.0, 1.0])
X = np.array([[0.0, 1.0], [1.0, 0.0]])

# rows phi+, phi-, psi+, psi-
BELL = np.array([[S, 0, 0, S], [S, 0, 0, -S], [0, S, S, 0], [0, S, -S, 0]], dtype=complex)


def kron(*ops):
    out = np.ones((1, 1))
    for op in ops:
        out = np.kron(out, op)
    return out


def cnot_matrix(n, control, target):
    """CNOT on n qubits, positions counted from the most significant qubit."""
    a = [I2] * n
    b = [I2] * n
    a[control] = P0
    b[control] = P1
    b[target] = X
    return kron(*a) + kron(*b)


def honest_round(kc, ka, b):
    """Post-CNOT state on qubits (1, 2, 3, 4) in that order."""
    pair = BELL[kc]  # phi+ for 0, phi- for 1
    psi = kron(np.eye(2)[ka][:, None], pair[:, None], np.eye(2)[b][:, None]).ravel()
    # qubit order 1,2,3,4 -> positions 0..3
    psi = cnot_matrix(4, 1, 0) @ psi
    return cnot_matrix(4, 2, 3) @ psi


def bell_pair_amplitudes(psi):
    """4x4 table <Bell_i (1,2) Bell_j (3,4) | psi> for a state ordered (1,2,3,4)."""
    out = np.zeros((4, 4), dtype=complex)
    for i, j in itertools.product(range(4), repeat=2):
        out[i, j] = np.vdot(np.kron(BELL[i], BELL[j]), psi)
    return out


def collective_detection(A, B, alpha, beta, A2, B2, alpha2, beta2, kc, ka, b):
    """Brute-force detection probability for one preparation under the probe attack.

    Qubit order: 1, 2, 3, 4, then zeta probe (4-dim) and eta probe (4-dim).
    """
    e = np.eye(4)

    def probe(A, B, al, be):
        z00, z01 = e[0], e[1]
        z10 = np.cos(be) * e[1] + np.sin(be) * e[2]
        z11 = np.cos(al) * e[0] + np.sin(al) * e[3]
        return {0: [(A, 0, z00), (B, 1, z01)], 1: [(B, 0, z10), (A, 1, z11)]}

    pz = probe(A, B, alpha, beta)
    ph = probe(A2, B2, alpha2, beta2)
    pair = BELL[kc]
    state = np.zeros(16 * 16, dtype=complex)
    for q2, q3 in itertools.product(range(2), repeat=2):
        amp = pair[2 * q2 + q3]
        if amp == 0:
            continue
        for az, o2, vz in pz[q2]:
            for ah, o3, vh in ph[q3]:
                q1 = ka ^ o2
                q4 = b ^ o3
                basis = np.zeros(16)
                basis[8 * q1 + 4 * o2 + 2 * o3 + q4] = 1
                state += amp * az * ah * np.kron(basis, np.kron(vz, vh))
    honest = bell_pair_amplitudes(honest_round(kc, ka, b))
    allowed = np.abs(honest) > 1e-9
    psi = state.reshape(16, 16)
    undetected = 0.0
    for i, j in itertools.product(range(4), repeat=2):
        if allowed[i, j]:
            bra = np.kron(BELL[i], BELL[j]).conj()
            undetected += np.linalg.norm(bra @ psi) ** 2
    return 1 - undetected

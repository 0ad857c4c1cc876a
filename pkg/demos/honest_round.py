"""
One key round, start to finish
==============================

Charlie prepares a Bell pair, Alice and Bob each CNOT their half onto a
fresh qubit and Bell-measure, and three public bits let each of them work
out the other's private outcome.
"""

import numpy as np

from cqka import protocol, qcore
from cqka.qcore import BellState

rng = np.random.default_rng(7)

# Charlie's phi+ pair on qubits 2 and 3, Alice's |0> on 1, Bob's |1> on 4
state = qcore.make_state([(1, qcore.KET0), ((2, 3), BellState.PHI_PLUS), (4, qcore.KET1)])
state = qcore.apply_cnot(state, 2, 1)
state = qcore.apply_cnot(state, 3, 4)

# Expand in the Bell basis of pairs (1, 2) and (3, 4): only two terms survive
for a in BellState:
    for b in BellState:
        amp = qcore.amplitude_of(state, {(1, 2): a, (3, 4): b})
        if abs(amp) > 1e-12:
            print(f"{a.symbol:5s} {b.symbol:5s} {amp.real:+.4f}")

# Measure both pairs and reconcile from the public bits
alice, state = qcore.measure_bell(state, 1, 2, rng)
bob, state = qcore.measure_bell(state, 3, 4, rng)
r_a, r_b = protocol.TwoBit.of(alice), protocol.TwoBit.of(bob)
k_b = protocol.bob_announce_bit(bob)
print("outcomes", r_a, r_b, "announced (k_C, k_A, k_B) =", (0, 0, k_b))

guess_b = protocol.infer_counterpart(0, 0, k_b, r_a, protocol.ALICE)
guess_a = protocol.infer_counterpart(0, 0, k_b, r_b, protocol.BOB)
print("Alice's key bit", protocol.final_key_bit(r_a, guess_b))
print("Bob's key bit  ", protocol.final_key_bit(guess_a, r_b))

# A full session with decoys, spot check and announcement ordering
t = protocol.run_protocol1(16, rng=rng)
print("session keys agree:", t.keys_agree, "".join(map(str, t.final_key_alice)))
print("checked positions:", t.check_positions)

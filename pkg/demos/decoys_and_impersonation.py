"""
Decoys and a forged source
==========================

Two cheap attacks and what catches them: measuring the channel qubits, and
replacing Charlie's Bell pairs with a state of Eve's choosing.
"""

import math

import numpy as np

from cqka import adversary, analysis, protocol

rng = np.random.default_rng(3)

# Intercept-resend on both channels: a quarter of the decoys come back wrong
taps = adversary.intercept_resend_tap(rng), adversary.intercept_resend_tap(rng)
t = protocol.run_protocol1(4, p=2_000, tap_ca=taps[0], tap_cb=taps[1], rng=rng)
print(f"decoy error {t.decoy_error_rate:.4f} over {t.decoys} decoys; aborted: {t.aborted} ({t.abort_reason})")
print(f"per-decoy error from the Born rule: {analysis.decoy_error_oracle():.4f}")

# How many decoys are enough? Abort probability at tolerance 0.10
for p in (1, 4, 16, 64):
    print(f"p={p:3d}: abort probability {analysis.abort_probability(p, 0.10):.4f}")

# A forged source cannot track Charlie's announced bit
for label, params in [
    ("|00>", adversary.ImpersonationParams(1, 0, 0, 0)),
    ("phi+", adversary.ImpersonationParams(1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2))),
    ("random", adversary.ImpersonationParams.random(rng)),
]:
    per_prep = analysis.detection_by_preparation(adversary.Impersonation(params))
    print(f"{label:7s} detection per preparation {np.round(per_prep, 3)}  mean {per_prep.mean():.3f}")

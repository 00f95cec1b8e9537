# Perfect completeness by quantum rewinding
# ==========================================
#
# Step 1: flag-qubit normalization. A fresh qubit is routed through prover 1
# and folded into acceptance; the honest prover rotates it so that the best
# achievable acceptance becomes exactly one half, attained at the
# eigen-optimal shared state. Step 2: the verifier runs the protocol forward,
# banks the accepting component, runs it backward, flips the phase of the
# all-zero start configuration, and runs forward again - guarded by a
# fifty-fifty invertibility test. On a perfectly rewindable input the output
# accepts honest provers with probability exactly 1.

from qmip import fixtures, optimal_shared_state, run
from qmip.transforms import (make_perfectly_rewindable,
                             rewind_to_perfect_completeness)

base = fixtures.good()          # honest optimum 3/4
print(f"input honest value: {run(base).acceptance:.6f}")

step1 = make_perfectly_rewindable(base)
flagged = step1.instance
p, state = optimal_shared_state(flagged.verifier, flagged.provers)
print(f"after flag normalization: best achievable value = {p:.12f}")
print(f"  (m, k) unchanged: m = {flagged.m}, k = {flagged.k}, "
      f"registers {step1.report.qubits_before} -> {step1.report.qubits_after}")

step2 = rewind_to_perfect_completeness(flagged)
rewound = step2.instance
print(f"rewound protocol: m = {rewound.m} (three times the input)")
print(f"honest acceptance: {step2.report.output_honest:.12f}")

# The report exposes the three acceptance routes: accepting on the first
# forward pass (p1), accepting after rewinding (p2), and passing the
# invertibility test (p3). Honest provers give p1 = p2 = 1/2 and p3 = 1, so
# each of the two fifty-fifty tests accepts with certainty.
ex = step2.report.extras
print(f"p1 = {ex['p1']:.6f}, p2 = {ex['p2']:.6f}, p3 = {ex['p3']:.6f}")

# The same machine works when the best shared state is a nontrivial
# eigenvector (here a Bloch pi/4 state), not just for flat games.
ent = make_perfectly_rewindable(fixtures.ent()).instance
print("nontrivial shared state:",
      [f"{a:.6f}" for a in ent.shared.amplitudes])
print(f"rewound honest value: "
      f"{rewind_to_perfect_completeness(ent).report.output_honest:.12f}")

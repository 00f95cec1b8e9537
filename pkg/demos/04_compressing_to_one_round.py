# Compressing a protocol to a single round
# =========================================
#
# The full chain: (already perfectly complete) five-turn protocol
#   -> three turns        (snapshot + fifty-fifty forward/backward check)
#   -> three-turn public coin  (workspace travels as a message, 1-bit coin)
#   -> two turns, one extra prover (the new prover supplies the original
#      first messages without being asked; exactness is preserved).
#
# Honest value stays exactly 1.0 through every stage; the soundness claims
# compose as (1+sqrt(s))/2 per halving/public-coin stage, then transfer
# exactly to the one-round system.

import math

from qmip import SeesawConfig, fixtures, run, seesaw
from qmip.transforms import run_pipeline

yes = fixtures.five_turn_yes()
print(f"input: k = {yes.k}, m = {yes.m}, honest = {run(yes).acceptance:.6f}, "
      f"claims (c, s) = ({yes.meta.claimed_completeness}, "
      f"{yes.meta.claimed_soundness})")

result = run_pipeline(yes)
for stage in result.stages:
    r = stage.report
    print(f"  {r.name:12s} (k, m): {r.input_shape} -> {r.output_shape}   "
          f"honest: {r.output_honest:.12f}   "
          f"claimed s: {stage.instance.meta.claimed_soundness:.6f}")
final = result.instance
print(f"final system: {final.k} provers, {final.m} turns, "
      f"{final.verifier.layout.total_qubits} qubits")
print(f"composed soundness claim: {result.final_soundness_claim:.6f} "
      f"(= 1 - 1/p' with p' = {result.inverse_gap:.4f})")

# The paired no-instance goes through the same verifier construction; an
# audit of the final one-round system stays below the composed claim.
no = run_pipeline(fixtures.five_turn_no())
audit = seesaw(no.instance.verifier,
               SeesawConfig(prover_dims=(2, 2), restarts=4, seed=5,
                            convergence_tol=1e-6))
bound = 1 - 1 / no.inverse_gap
print(f"\nno-instance chain: audited value {audit.value:.6f} vs "
      f"composed claim {bound:.6f} -> "
      f"{'consistent' if audit.value <= bound + 1e-6 else 'EXCEEDS'}")
print("(lower bound at fixed prover dimension; consistency, not certification)")

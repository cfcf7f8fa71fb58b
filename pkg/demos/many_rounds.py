"""Power allocation with many retransmissions.

With M = 20 rounds the random search is slow to converge, so a closed-form
allocation built from the large-M recursion on Z_m = (e^R - 1) / S_m is
attractive.  This script compares three answers for RTD at epsilon = 1e-3:
the geometric-recursion allocation, the same shooting scheme with the exact
stationarity conditions, and the random search.
"""
import numpy as np

from harqpower import FadingSpec, Objective, OptimizerConfig, db, geometric_allocation, optimize
from harqpower.optimizer import geometric_z_sequence, ratio_variation

M, EPSILON = 20, 1e-3
block = FadingSpec.block()
objective = Objective.rtd(rate=1.0, max_retx=M, epsilon=EPSILON)

for recursion in ("geometric", "exact"):
    z = geometric_z_sequence(M, EPSILON, block, recursion)
    policy = geometric_allocation(objective.spec, EPSILON, block, recursion)
    print(f"{recursion:>9} recursion: average power {db(objective.evaluate(policy.powers)):6.3f} dB, "
          f"last-five Z ratio spread {100 * ratio_variation(z):.1f}%")

result = optimize(objective, OptimizerConfig(restarts=3))
print(f"random search      : average power {db(result.objective_value):6.3f} dB "
      f"({result.iterations} iterations, converged={result.converged})")

ratios = np.diff(np.log(geometric_z_sequence(M, EPSILON, block)))
print("\nlog Z ratios of the geometric recursion:", np.array2string(ratios, precision=3))
print("They shrink like 1/(m+1) rather than settling on a constant, which is why the")
print("geometric allocation sits several dB above the searched optimum at M = 20.")

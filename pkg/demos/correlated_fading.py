"""Correlated fading and ACK/NACK-driven power adaptation.

The channel follows a first-order Gauss-Markov process with correlation beta
per codeword.  Stronger correlation means a retransmission sees a channel
similar to the one that just failed, so time diversity shrinks and the power
needed for a given outage grows.  Under strong correlation the ACK/NACK
history predicts the channel, which a multiplicative power adapter can use.
"""
from harqpower import FadingSpec, Model, Objective, OptimizerConfig, PowerPolicy, RtdSpec, SimConfig, db, optimize
from harqpower.simulator import (
    REINFORCEMENT_PATH,
    default_p_initial_grid,
    matched_uniform_power,
    tune_reinforcement,
)

print("optimal average power at epsilon = 1e-3 (RTD, one retransmission, continuous model)")
for beta in (0.0, 0.5, 0.9, 1.0):
    fading = FadingSpec.block() if beta == 1.0 else FadingSpec.correlated(beta)
    r = optimize(Objective.rtd(1.0, 1, 1e-3, Model.CONTINUOUS, fading), OptimizerConfig(restarts=3))
    print(f"  beta = {beta:3.1f}: {db(r.objective_value):6.2f} dB (uniform {db(r.baseline_power):6.2f} dB)")

beta, eps, n = 0.9, 1e-2, 10**5
fading = FadingSpec.correlated(beta)
spec = RtdSpec(1.0, 1)
base = SimConfig(spec, PowerPolicy.uniform(1.0, 2), fading, Model.CONTINUOUS, n,
                 packets_per_block=REINFORCEMENT_PATH, seed=3)
p_uniform = matched_uniform_power(base, eps)
print(f"\nbeta = {beta}, epsilon = {eps}: simulated uniform power {db(p_uniform):.2f} dB")
tuned = tune_reinforcement(spec, fading, eps, default_p_initial_grid(p_uniform), n_packets=n, seed=3)
q = tuned.policy
print(f"tuned adapter: {db(tuned.metrics.avg_power):.2f} dB at outage {tuned.metrics.outage:.4f} "
      f"with d = ({q.d1}, {q.d2}, {q.d3}, {q.d4}), {tuned.n_evaluated} grid points")
print("At this sample size any gain over the static power is within simulation noise.")

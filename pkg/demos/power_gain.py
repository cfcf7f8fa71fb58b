"""How much average power does per-round power control save?

Rayleigh block fading, one retransmission, rate 1 nat/channel use and an
outage target of 1e-3.  For each protocol and communication model we compare
the uniform (short-term) power with the optimised per-round powers, then
replay the optimised policy through the packet simulator.
"""
from harqpower import Model, Objective, SimConfig, db, optimize, simulate

EPSILON = 1e-3

print(f"{'scheme':<18}{'uniform':>10}{'optimised':>11}{'gain':>8}   P1 / P2 (dB)       simulated")
for protocol in ("rtd", "inr"):
    for model in (Model.CONTINUOUS, Model.BURSTING):
        objective = getattr(Objective, protocol)(rate=1.0, max_retx=1, epsilon=EPSILON, model=model)
        result = optimize(objective)
        p1, p2 = db(result.best_policy.powers)
        sim = simulate(SimConfig(objective.spec, result.best_policy, model=model, n_packets=10**6, seed=1))
        print(
            f"{protocol + '/' + model.value:<18}{db(result.baseline_power):>9.2f} {db(result.objective_value):>10.2f}"
            f"{result.gain_db:>8.2f}   {p1:6.2f} / {p2:6.2f}     {db(sim.avg_power):.2f} dB, outage {sim.outage:.2e}"
        )

print(
    "\nThe optimum spends little in the first round and keeps a large reserve for the"
    "\nrare retransmission, so the long-term average drops by roughly 8 to 11 dB."
)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize as sopt

from harqpower import (
    ConfigError,
    DomainError,
    FadingSpec,
    InrRateSchedule,
    Model,
    Objective,
    OptimizerConfig,
    PowerPolicy,
    RtdSpec,
    UnsupportedConfigurationError,
    db,
    geometric_allocation,
    optimize,
    power_efficiency,
    relative_throughput_loss,
    solve_last_round_power,
)
from harqpower.fading import gain_inv_cdf
from harqpower.optimizer import (
    geometric_z_sequence,
    min_outage_at_power,
    monotonicity_report,
    ratio_variation,
    recursion_residuals,
)
from harqpower.rtd import rtd_bursting_metrics

BLOCK = FadingSpec.block(1.0)
FAST = OptimizerConfig(restarts=2)


def _grid_oracle(ob, n=4001):
    """Best average power over a dense log grid of P_1 with P_2 set by the constraint."""
    target = ob.baseline_power() * ob.n_rounds
    p1 = np.geomspace(1e-2, target, n)
    p2 = np.array([solve_last_round_power(ob, [x]) for x in p1])
    vals = ob.evaluate(np.stack([p1, p2], axis=1))
    k = int(np.argmin(vals))
    lo, hi = p1[max(k - 1, 0)], p1[min(k + 1, n - 1)]
    res = sopt.minimize_scalar(lambda x: float(ob.evaluate([x, solve_last_round_power(ob, [x])])),
                               bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    return min(res.fun, vals[k])


def test_objective_validation():
    with pytest.raises(DomainError):
        Objective.rtd(epsilon=1.0)
    with pytest.raises(ConfigError):
        Objective("rtd", "continuous", InrRateSchedule([1.0]), BLOCK, 0.1)
    with pytest.raises(UnsupportedConfigurationError):
        Objective.rtd(max_retx=2, fading=FadingSpec.correlated(0.5))


def test_config_validation():
    with pytest.raises(ConfigError):
        OptimizerConfig(population=5, elite_neighbours=5)
    with pytest.raises(ConfigError):
        OptimizerConfig(restarts=0)
    with pytest.raises(ConfigError):
        OptimizerConfig(convergence_tol=0.0)
    with pytest.raises(ConfigError):
        OptimizerConfig(init_power_range=(5.0, 1.0))


def test_last_round_examples():
    ob = Objective.rtd(1.0, 1, 1e-3)
    total = np.expm1(1.0) / gain_inv_cdf(BLOCK, 1e-3)
    assert solve_last_round_power(ob, [38.4]) == pytest.approx(total - 38.4, rel=1e-12)
    assert solve_last_round_power(ob, [38.4]) == pytest.approx(1679.3, rel=2e-4)
    assert solve_last_round_power(ob, [2000.0]) == 0.0
    assert solve_last_round_power(ob, [2000.0], clamp=False) is None
    single = Objective.rtd(1.0, 0, 1e-3)
    assert solve_last_round_power(single, []) == pytest.approx(total, rel=1e-12)
    with pytest.raises(DomainError):
        solve_last_round_power(ob, [1.0, 2.0])


@settings(max_examples=60)
@given(st.floats(1e-4, 0.3), st.lists(st.floats(0.01, 50.0), min_size=1, max_size=3), st.floats(0.2, 2.5))
def test_last_round_makes_constraint_bind(eps, partial, rate):
    for ob in (Objective.rtd(rate, len(partial), eps), Objective.inr(rate, len(partial), eps)):
        last = solve_last_round_power(ob, partial, clamp=False)
        if last is None:
            assert ob.outage(np.append(partial, 0.0)) <= eps
            continue
        assert ob.outage(np.append(partial, last)) == pytest.approx(eps, rel=1e-7)


def test_variable_length_inr_last_round():
    ob = Objective.inr(epsilon=1e-2, rates=[1.2, 0.8, 0.5])
    last = solve_last_round_power(ob, [2.0, 5.0])
    assert ob.outage([2.0, 5.0, last]) == pytest.approx(1e-2, rel=1e-8)


def test_correlated_last_round_matches_outage():
    ob = Objective.rtd(1.0, 1, 1e-2, fading=FadingSpec.correlated(0.5))
    last = solve_last_round_power(ob, [4.0])
    assert ob.outage([4.0, last]) == pytest.approx(1e-2, rel=1e-8)


@pytest.mark.parametrize(
    "protocol, model, gain, optimum_db",
    [
        ("rtd", Model.CONTINUOUS, 11.0, 18.709),
        ("rtd", Model.BURSTING, 9.0, 20.120),
        ("inr", Model.CONTINUOUS, 9.0, 18.628),
        ("inr", Model.BURSTING, 8.0, 20.009),
    ],
)
def test_headline_gains_against_grid_oracle(protocol, model, gain, optimum_db):
    ob = getattr(Objective, protocol)(1.0, 1, 1e-3, model)
    r = optimize(ob, FAST)
    oracle = _grid_oracle(ob)
    assert r.objective_value == pytest.approx(oracle, rel=1e-4)
    assert db(r.objective_value) == pytest.approx(optimum_db, abs=0.01)
    assert r.gain_db == pytest.approx(gain, abs=1.0)
    assert r.achieved.outage == pytest.approx(1e-3, rel=1e-6)


def test_single_round_is_closed_form():
    ob = Objective.rtd(1.0, 0, 1e-3)
    r = optimize(ob)
    assert r.best_policy.powers[0] == pytest.approx(ob.baseline_power(), rel=1e-12)
    assert r.gain_db == 0.0
    assert power_efficiency(ob) == 0.0
    assert relative_throughput_loss(ob) == pytest.approx(0.0, abs=1e-12)


def test_result_invariants_and_determinism():
    ob = Objective.rtd(1.0, 2, 1e-2, Model.BURSTING)
    a = optimize(ob, FAST)
    b = optimize(ob, FAST)
    assert a.best_policy == b.best_policy and a.objective_value == b.objective_value
    np.testing.assert_array_equal(a.trace, b.trace)
    assert np.all(np.diff(a.trace) <= 0)
    assert a.achieved.outage <= 1e-2 + 1e-9
    assert a.objective_value <= a.baseline_power


def test_other_seed_reaches_same_optimum():
    ob = Objective.inr(1.0, 2, 1e-3)
    a = optimize(ob, OptimizerConfig(restarts=3, seed=0))
    b = optimize(ob, OptimizerConfig(restarts=3, seed=7))
    assert a.objective_value == pytest.approx(b.objective_value, rel=1e-3)


def test_relaxed_constraint_gain_is_small():
    assert power_efficiency(Objective.rtd(1.0, 1, 0.9), FAST) < 1.0


def test_throughput_loss_sign_and_limits():
    loss = {eps: relative_throughput_loss(Objective.rtd(1.0, 1, eps), FAST) for eps in (1e-6, 1e-2, 0.5, 0.99)}
    assert loss[1e-2] > 0
    # the loss peaks at moderate outage and fades at both extremes
    assert loss[1e-6] < 0.05 and loss[0.99] < 1.0
    assert max(loss[1e-6], loss[0.99]) < 0.1 * loss[0.5]


def test_monotonicity_report_flags_decreasing_policy():
    ob = Objective.rtd(1.0, 1, 1e-3)
    rep = monotonicity_report(ob, PowerPolicy([1679.3, 38.4]))
    assert not rep["powers_nondecreasing"]
    assert rep["swap_deltas"][0] < 0


@settings(max_examples=100)
@given(st.floats(0.01, 100.0), st.floats(0.0, 100.0), st.floats(0.1, 3.0))
def test_bursting_swap_inequality(p, delta, rate):
    spec = RtdSpec(rate, 1)
    up = rtd_bursting_metrics(spec, PowerPolicy([p, p + delta]), BLOCK).avg_power
    down = rtd_bursting_metrics(spec, PowerPolicy([p + delta, p]), BLOCK).avg_power
    assert up <= down * (1 + 1e-12)


def test_correlated_optimum_is_feasible():
    ob = Objective.rtd(1.0, 1, 1e-2, fading=FadingSpec.correlated(0.5))
    r = optimize(ob, FAST)
    assert r.achieved.outage == pytest.approx(1e-2, rel=1e-6)
    assert r.objective_value < r.baseline_power


@pytest.mark.parametrize("spec", [RtdSpec(1.0, 20), InrRateSchedule.fixed_length(1.0, 20)])
def test_geometric_sequence_properties(spec):
    z = geometric_z_sequence(20, 1e-3, BLOCK)
    assert np.all(recursion_residuals(z) < 1e-8)
    assert np.all(np.diff(z) < 0)
    assert z[-1] == pytest.approx(gain_inv_cdf(BLOCK, 1e-3), rel=1e-9)
    pol = geometric_allocation(spec, 1e-3, BLOCK)
    assert np.all(pol.powers >= 0)
    assert pol.n_rounds == 21


def test_geometric_rtd_meets_outage_exactly():
    ob = Objective.rtd(1.0, 20, 1e-3)
    pol = geometric_allocation(ob.spec, 1e-3, BLOCK)
    assert ob.outage(pol.powers) == pytest.approx(1e-3, rel=1e-8)


def test_exact_recursion_improves_average_power():
    ob = Objective.rtd(1.0, 20, 1e-3)
    geo = ob.evaluate(geometric_allocation(ob.spec, 1e-3, BLOCK).powers)
    exact = ob.evaluate(geometric_allocation(ob.spec, 1e-3, BLOCK, recursion="exact").powers)
    assert exact < geo


def test_geometric_ratio_spread_reported():
    z = geometric_z_sequence(20, 1e-3, BLOCK)
    r = z[1:] / z[:-1]
    assert ratio_variation(z) == pytest.approx(np.ptp(r[-5:]) / r[-5:].mean(), rel=1e-12)


def test_geometric_rejects_bad_input():
    with pytest.raises(UnsupportedConfigurationError):
        geometric_allocation(InrRateSchedule([1.0, 0.7]), 1e-3, BLOCK)
    with pytest.raises(DomainError):
        geometric_z_sequence(0, 1e-3, BLOCK)
    with pytest.raises(ConfigError):
        geometric_z_sequence(5, 1e-3, BLOCK, recursion="other")


def test_min_outage_at_power_beats_uniform():
    ob = Objective.rtd(1.0, 1, 0.5)
    p = 10.0
    best, pol = min_outage_at_power(ob, p)
    assert ob.evaluate(pol.powers) == pytest.approx(p, rel=1e-9)
    assert best < ob.outage([p, p])
    with pytest.raises(UnsupportedConfigurationError):
        min_outage_at_power(Objective.rtd(1.0, 2, 0.5), p)

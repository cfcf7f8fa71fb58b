import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from harqpower import (
    DegeneratePolicyError,
    DomainError,
    EnergySchedule,
    FadingSpec,
    InrRateSchedule,
    Model,
    PowerPolicy,
    RtdSpec,
    UnsupportedConfigurationError,
    db,
    decode_thresholds,
    inr_short_term_power,
)
from harqpower.inr import (
    accumulated_information,
    inr_avg_power_continuous,
    inr_bursting_metrics,
    inr_continuous_metrics,
    inr_decode_profile,
    inr_equivalent_powers,
    inr_expected_energy,
    inr_fast_fading_outage,
    inr_metrics,
    inr_outage,
    inr_outage_threshold,
    inr_throughput_continuous,
)
from harqpower.rtd import rtd_decode_profile, rtd_outage, rtd_short_term_power

BLOCK = FadingSpec.block(1.0)
FIXED = InrRateSchedule.fixed_length(1.0, 1)


@st.composite
def schedules(draw, max_rounds=4):
    k = draw(st.integers(1, max_rounds))
    steps = draw(st.lists(st.floats(0.2, 2.0), min_size=k, max_size=k))
    rate = draw(st.floats(0.1, 3.0))
    return InrRateSchedule(rate / np.cumsum(steps))


@st.composite
def schedule_and_policy(draw, max_rounds=4):
    s = draw(schedules(max_rounds))
    p = draw(st.lists(st.floats(0.01, 300.0), min_size=s.n_rounds, max_size=s.n_rounds))
    return s, PowerPolicy(p)


def test_schedule_validation():
    with pytest.raises(DomainError):
        InrRateSchedule([1.0, 1.0])
    with pytest.raises(DomainError):
        InrRateSchedule([0.5, 1.0])
    with pytest.raises(DomainError):
        InrRateSchedule([1.0, -0.5])


@given(schedules())
def test_lengths_follow_rates(s):
    assert np.all(s.coefficients > 0)
    assert s.lengths[0] == pytest.approx(1.0)
    for m in range(1, s.n_rounds + 1):
        frac = s.length_fractions(m)
        np.testing.assert_allclose(frac, s.lengths[:m] / s.lengths[:m].sum(), rtol=1e-12)
    # the info carried is constant: R^(m) l^(m) = R^(1) l_1
    np.testing.assert_allclose(s.rates * s.cumulative_lengths, s.info_nats, rtol=1e-12)


def test_fixed_length_constructor():
    s = InrRateSchedule.fixed_length(2.0, 3)
    np.testing.assert_allclose(s.rates, [2.0, 1.0, 2 / 3, 0.5])
    np.testing.assert_allclose(s.lengths, 1.0)
    assert s.is_fixed_length
    assert not InrRateSchedule([2.0, 1.5]).is_fixed_length


def test_decode_profile_examples():
    prof = inr_decode_profile(FIXED, PowerPolicy([10.0, 10.0]), BLOCK)
    # the tabulated 0.06284 is off in the fourth digit; 1 - exp(-0.0648721) = 0.0628127
    assert prof.p_outage == pytest.approx(0.06284, abs=5e-5)
    assert prof.p_outage == pytest.approx(1 - np.exp(-np.expm1(0.5) / 10), rel=1e-10)
    assert prof.p_success[0] == pytest.approx(0.84212, abs=5e-6)


@given(st.floats(0.1, 3.0), st.floats(0.01, 500.0))
def test_single_round_matches_rtd(rate, p):
    inr = inr_decode_profile(InrRateSchedule([rate]), PowerPolicy([p]), BLOCK)
    rtd = rtd_decode_profile(RtdSpec(rate, 0), PowerPolicy([p]), BLOCK)
    # threshold error 1e-12 is amplified by lambda * g inside exp(-lambda g)
    np.testing.assert_allclose(inr.p_success, rtd.p_success, rtol=1e-8)
    assert inr.p_outage == pytest.approx(rtd.p_outage, rel=1e-8)


@given(st.floats(0.1, 3.0), st.lists(st.floats(0.01, 300.0), min_size=2, max_size=4))
def test_first_round_coincides_with_rtd(rate, powers):
    m = len(powers) - 1
    inr = inr_decode_profile(InrRateSchedule.fixed_length(rate, m), PowerPolicy(powers), BLOCK)
    rtd = rtd_decode_profile(RtdSpec(rate, m), PowerPolicy(powers), BLOCK)
    assert inr.p_success[0] == pytest.approx(rtd.p_success[0], rel=1e-10)


def test_all_zero_is_degenerate():
    with pytest.raises(DegeneratePolicyError):
        inr_decode_profile(FIXED, PowerPolicy([0.0, 0.0]), BLOCK)
    assert inr_outage(FIXED, PowerPolicy([0.0, 0.0]), BLOCK) == 1.0


def test_outage_threshold_examples():
    assert inr_outage_threshold(FIXED, PowerPolicy([4.0, 4.0])) == pytest.approx(np.expm1(0.5) / 4, rel=1e-11)
    assert inr_outage_threshold(InrRateSchedule([1.3]), PowerPolicy([6.0])) == pytest.approx(np.expm1(1.3) / 6, rel=1e-11)
    g = inr_outage_threshold(FIXED, PowerPolicy([5.0, 20.0]))
    # (1 + 5g)(1 + 20g) = e, solved independently
    root = (-25 + np.sqrt(625 + 400 * (np.e - 1))) / 200
    assert g == pytest.approx(root, rel=1e-11)
    assert g == pytest.approx(0.0561293, abs=1e-7)


@settings(max_examples=150)
@given(schedule_and_policy())
def test_thresholds_solve_their_equations(sp):
    s, pol = sp
    g = decode_thresholds(s.coefficients, pol.powers)
    info = np.array([accumulated_information(s, pol.powers, gm)[m] for m, gm in enumerate(g)])
    np.testing.assert_allclose(info, 1.0, rtol=1e-10)
    # more rounds never hurt: thresholds are nonincreasing
    assert np.all(np.diff(g) <= g[:-1] * 1e-11)
    ref = optimize.brentq(lambda x: accumulated_information(s, pol.powers, x)[-1] - 1, 0, g[0] * 2 + 1, xtol=1e-300, rtol=1e-14)
    assert g[-1] == pytest.approx(ref, rel=1e-10)


@settings(max_examples=150)
@given(schedule_and_policy())
def test_profile_sums_to_one(sp):
    s, pol = sp
    prof = inr_decode_profile(s, pol, BLOCK)
    assert prof.total == pytest.approx(1.0, abs=1e-12)
    assert np.all(prof.p_success >= -1e-15)


@given(schedule_and_policy())
def test_equivalent_powers_match_energy_schedule(sp):
    s, pol = sp
    e = EnergySchedule.from_policy(s, pol)
    np.testing.assert_allclose(inr_equivalent_powers(s, pol), e.equivalent_powers, rtol=1e-12)
    assert np.all(np.diff(e.cumulative) >= 0)


@given(schedules(), st.floats(0.01, 1e4))
def test_uniform_policy_collapses(s, p):
    pol = PowerPolicy.uniform(p, s.n_rounds)
    assert inr_avg_power_continuous(s, pol, BLOCK) == pytest.approx(p, rel=1e-12)
    assert inr_bursting_metrics(s, pol, BLOCK).avg_power == pytest.approx(p, rel=1e-12)


def _per_gain_oracle(s, powers, fn):
    """Integrate ``fn(round_used, decoded)`` over the Rayleigh gain with brentq thresholds."""
    g = [optimize.brentq(lambda x, m=m: accumulated_information(s, powers, x)[m] - 1, 0, 1e6, xtol=1e-15)
         for m in range(s.n_rounds)]

    def integrand(x):
        info = accumulated_information(s, powers, x)
        hit = np.nonzero(info >= 1)[0]
        return (fn(hit[0] + 1, True) if hit.size else fn(s.n_rounds, False)) * np.exp(-x)

    edges = [0.0, *sorted(g), max(g) * 50 + 50]
    total = sum(integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12)[0] for a, b in zip(edges[:-1], edges[1:]))
    return total + integrate.quad(integrand, edges[-1], np.inf)[0]


def test_average_power_against_quadrature():
    pol = PowerPolicy([30.0, 1000.0])
    eq = inr_equivalent_powers(FIXED, pol)
    oracle = _per_gain_oracle(FIXED, pol.powers, lambda m, _: eq[m - 1])
    assert inr_avg_power_continuous(FIXED, pol, BLOCK) == pytest.approx(oracle, rel=1e-8)
    s = InrRateSchedule([1.5, 0.9, 0.4])
    pol = PowerPolicy([3.0, 7.0, 40.0])
    xi = EnergySchedule.from_policy(s, pol).cumulative
    oracle = _per_gain_oracle(s, pol.powers, lambda m, _: xi[m - 1])
    assert inr_expected_energy(s, pol, BLOCK) == pytest.approx(oracle, rel=1e-8)


def test_throughput_examples():
    # 0.88964 was computed from rounded probabilities; unrounded gives 0.889656
    assert inr_throughput_continuous(FIXED, PowerPolicy([10.0, 10.0]), BLOCK) == pytest.approx(0.88964, abs=2e-5)
    exact = np.exp(-np.expm1(1.0) / 10) + 0.5 * (np.exp(-np.expm1(0.5) / 10) - np.exp(-np.expm1(1.0) / 10))
    assert inr_throughput_continuous(FIXED, PowerPolicy([10.0, 10.0]), BLOCK) == pytest.approx(exact, rel=1e-10)
    assert inr_throughput_continuous(FIXED, PowerPolicy([0.0, 0.0]), BLOCK) == 0.0
    assert inr_throughput_continuous(InrRateSchedule([1.0]), PowerPolicy([1e14]), BLOCK) == pytest.approx(1.0, abs=1e-9)


def test_bursting_example():
    m = inr_bursting_metrics(FIXED, PowerPolicy([10.0, 10.0]), BLOCK)
    # direct evaluation: (1 - outage) / (1 + Pr{round 2 needed})
    expected = np.exp(-np.expm1(0.5) / 10) / (1 + (1 - np.exp(-np.expm1(1.0) / 10)))
    assert m.throughput == pytest.approx(expected, rel=1e-12)
    assert m.throughput == pytest.approx(0.80937, abs=5e-5)
    assert m.avg_power == pytest.approx(10.0, rel=1e-14)
    big = inr_bursting_metrics(FIXED, PowerPolicy([1e14, 1.0]), BLOCK)
    assert big.throughput == pytest.approx(1.0, abs=1e-9) and big.outage < 1e-12


@settings(max_examples=80)
@given(schedule_and_policy())
def test_bursting_closed_form_matches_generic_ratio(sp):
    s, pol = sp
    prof = inr_decode_profile(s, pol, BLOCK)
    stop = np.append(prof.p_success[:-1], prof.p_success[-1] + prof.p_outage)
    energy = np.dot(stop, EnergySchedule.from_policy(s, pol).cumulative)
    uses = np.dot(stop, s.cumulative_lengths)
    m = inr_bursting_metrics(s, pol, BLOCK)
    assert m.avg_power == pytest.approx(energy / uses, rel=1e-10)
    assert m.throughput == pytest.approx(s.info_nats * (1 - prof.p_outage) / uses, rel=1e-10)


def test_metrics_dispatch():
    pol = PowerPolicy([3.0, 9.0])
    assert inr_metrics(FIXED, pol, BLOCK, Model.CONTINUOUS) == inr_continuous_metrics(FIXED, pol, BLOCK)
    assert inr_metrics(FIXED, pol, BLOCK, Model.BURSTING) == inr_bursting_metrics(FIXED, pol, BLOCK)


def test_short_term_power_examples():
    p = inr_short_term_power(FIXED, 1e-3, BLOCK)
    # (e^0.5 - 1) / 1.0005e-3 = 648.40; the quoted 648.6 is approximate
    assert p == pytest.approx(648.6, rel=5e-4)
    assert db(p) == pytest.approx(28.12, abs=0.01)
    assert db(rtd_short_term_power(RtdSpec(1.0, 1), 1e-3, BLOCK)) - db(p) == pytest.approx(1.22, abs=0.01)
    assert inr_short_term_power(InrRateSchedule([1.0]), 1e-3, BLOCK) == pytest.approx(
        rtd_short_term_power(RtdSpec(1.0, 0), 1e-3, BLOCK), rel=1e-14)
    assert inr_short_term_power(FIXED, 0.5, BLOCK) == pytest.approx(0.9360, abs=2e-4)
    assert inr_short_term_power(FIXED, 0.5, BLOCK) == pytest.approx(np.expm1(0.5) / np.log(2), rel=1e-14)
    with pytest.raises(DomainError):
        inr_short_term_power(FIXED, 1.0, BLOCK)


@given(schedules(), st.floats(1e-6, 0.9))
def test_short_term_power_hits_target(s, eps):
    p = inr_short_term_power(s, eps, BLOCK)
    assert inr_outage(s, PowerPolicy.uniform(p, s.n_rounds), BLOCK) == pytest.approx(eps, rel=1e-9)


@given(st.floats(0.01, 100.0), st.floats(0.01, 100.0), st.floats(1e-3, 10.0), st.floats(0.1, 3.0))
def test_log_sum_superadditivity(p1, p2, g, rate):
    s = InrRateSchedule.fixed_length(rate, 1)
    inr_info = accumulated_information(s, [p1, p2], g)[-1] * rate
    rtd_info = np.log1p(g * (p1 + p2))
    assert inr_info >= rtd_info - 1e-12
    pol = PowerPolicy([p1, p2])
    assert inr_outage(s, pol, BLOCK) <= rtd_outage(RtdSpec(rate, 1), pol, BLOCK) * (1 + 1e-9)


def test_fast_fading_against_quadrature():
    n = 10**7
    est = inr_fast_fading_outage(FIXED, PowerPolicy([10.0, 10.0]), FadingSpec.fast(), mc_budget=n, seed=3)
    # Pr{(1 + 10 g1)(1 + 10 g2) < e}
    inner = lambda g1: np.exp(-g1) * -np.expm1(-max(np.e / (1 + 10 * g1) - 1, 0.0) / 10)  # noqa: E731
    exact = integrate.quad(inner, 0, (np.e - 1) / 10, epsabs=1e-14)[0]
    assert abs(est - exact) < 4 * np.sqrt(exact * (1 - exact) / n)


def test_fast_fading_degenerate_cases():
    one = InrRateSchedule([1.0])
    pol = PowerPolicy([8.0])
    assert inr_fast_fading_outage(one, pol, FadingSpec.fast(), seed=1) == pytest.approx(inr_outage(one, pol, BLOCK))
    pol2 = PowerPolicy([6.0, 12.0])
    exact = inr_outage(FIXED, pol2, BLOCK)
    n = 10**6
    est = inr_fast_fading_outage(FIXED, pol2, FadingSpec.correlated(1.0), mc_budget=n, seed=1)
    assert abs(est - exact) <= 4 * np.sqrt(exact * (1 - exact) / n)
    with pytest.raises(UnsupportedConfigurationError):
        inr_fast_fading_outage(InrRateSchedule([1.0, 0.8]), pol2, FadingSpec.fast())


def test_fast_fading_quadrature_profile_matches_mc():
    fast = FadingSpec.correlated(0.5)
    pol = PowerPolicy([6.0, 15.0])
    analytic = inr_outage(FIXED, pol, fast)
    n = 10**6
    est = inr_fast_fading_outage(FIXED, pol, fast, mc_budget=n, seed=4)
    assert abs(est - analytic) < 4 * np.sqrt(analytic * (1 - analytic) / n)

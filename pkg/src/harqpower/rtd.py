"""Repetition time diversity (RTD) HARQ: closed-form performance model.

The receiver maximum-ratio combines every copy of the codeword, so after
round ``m`` the packet is decodable iff ``log(1 + g * S_m) >= R`` with
``S_m = P_1 + ... + P_m``.  Under block fading this gives closed forms for the
decode profile, the outage probability, and the long-term power and
throughput of both communication models.

All powers are linear and noise-normalised; rates are in nats per channel
use.  The codeword length ``L`` cancels everywhere and is taken as 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._longterm import Model, long_term
from .errors import DomainError, UnsupportedConfigurationError
from .fading import FadingSpec, gain_cdf, gain_inv_cdf, mean_gain
from .policy import DecodeProfile, Metrics, PowerPolicy
from .temporal import mc_event_probability, two_round_outage

__all__ = [
    "RtdSpec",
    "rtd_probabilities",
    "rtd_decode_profile",
    "rtd_avg_power_continuous",
    "rtd_outage",
    "rtd_short_term_power",
    "rtd_throughput_continuous",
    "rtd_continuous_metrics",
    "rtd_bursting_metrics",
    "rtd_metrics",
    "rtd_fast_fading_outage",
    "rtd_avg_power_lower_bound",
    "hypoexponential_cdf",
]

# relative gap below which two powers count as equal for the hypoexponential form
_DISTINCT_RTOL = 1e-9


@dataclass(frozen=True)
class RtdSpec:
    """Initial rate ``rate`` (nats/channel use) and ``max_retx`` retransmissions."""

    rate: float
    max_retx: int

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("rate must be positive")
        if int(self.max_retx) != self.max_retx or self.max_retx < 0:
            raise DomainError("max_retx must be a nonnegative integer")

    @property
    def n_rounds(self) -> int:
        return self.max_retx + 1

    @property
    def snr_threshold(self) -> float:
        """Combined SNR ``e^R - 1`` needed to decode."""
        return float(np.expm1(self.rate))


def _check(spec: RtdSpec, policy: PowerPolicy):
    if policy.n_rounds != spec.n_rounds:
        raise DomainError(f"policy has {policy.n_rounds} rounds, spec needs {spec.n_rounds}")
    policy.require_nondegenerate()


def _gain_thresholds(rate, cums):
    a = np.expm1(rate)
    with np.errstate(divide="ignore"):
        return np.where(cums > 0, a / np.where(cums > 0, cums, 1.0), np.inf)


def rtd_probabilities(rate: float, powers, fading: FadingSpec):
    """Vectorised decode profile for power arrays of shape ``(..., K)``.

    Block fading (any K) is closed form.  Other temporal models are exact for
    ``K <= 2`` through quadrature over the Gauss-Markov transition; larger K
    needs :func:`rtd_fast_fading_outage` or the simulator.
    """
    powers = np.asarray(powers, dtype=float)
    k = powers.shape[-1]
    lam = fading.lam
    if fading.is_block or k == 1:
        t = _gain_thresholds(rate, np.cumsum(powers, axis=-1))
        decoded_by = np.exp(-lam * t)
        p_success = np.diff(decoded_by, axis=-1, prepend=0.0)
        p_outage = -np.expm1(-lam * t[..., -1])
        return p_success, p_outage
    if k != 2:
        raise UnsupportedConfigurationError(
            "closed-form RTD probabilities under non-block fading are limited to M <= 1"
        )
    a = np.expm1(rate)
    p1, p2 = powers[..., 0], powers[..., 1]
    t1 = _gain_thresholds(rate, p1)

    def second(g1):
        rest = a - g1 * p1[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            y = rest / p2[..., None]
        return np.where(p2[..., None] > 0, y, np.inf)

    p_outage = two_round_outage(fading, t1, second)
    first = np.exp(-lam * t1)
    p_success = np.stack([first, 1.0 - first - p_outage], axis=-1)
    return p_success, p_outage


def rtd_decode_profile(spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec) -> DecodeProfile:
    """``Pr{S_m}`` for every round and the outage ``Pr{not decoded after M+1}``.

    The round-one term uses an empty previous sum, i.e.
    ``Pr{S_1} = 1 - F_G((e^R - 1)/P_1)``.
    """
    _check(spec, policy)
    p, p_out = rtd_probabilities(spec.rate, policy.powers, fading)
    return DecodeProfile(p_success=p, p_outage=float(p_out))


def rtd_avg_power_continuous(spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec) -> float:
    """Long-term average power of the continuous model.

    ``P_bar = sum_m P^(m) Pr{S_m} + P^(M+1) Pr{outage}`` with the running
    mean power ``P^(m) = S_m / m``.
    """
    prof = rtd_decode_profile(spec, policy, fading)
    running_mean = policy.cumulative / np.arange(1, spec.n_rounds + 1)
    return float(np.dot(running_mean, prof.p_success) + running_mean[-1] * prof.p_outage)


def rtd_outage(spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec) -> float:
    """Block-fading outage ``F_G((e^R - 1) / sum P)``; an all-zero policy gives 1."""
    if policy.n_rounds != spec.n_rounds:
        raise DomainError(f"policy has {policy.n_rounds} rounds, spec needs {spec.n_rounds}")
    total = policy.total
    if total <= 0:
        return 1.0
    if not fading.is_block and spec.n_rounds > 1:
        return float(rtd_probabilities(spec.rate, policy.powers, fading)[1])
    return float(gain_cdf(fading, spec.snr_threshold / total))


def rtd_short_term_power(spec: RtdSpec, epsilon: float, fading: FadingSpec) -> float:
    """Smallest uniform power meeting ``Pr{outage} = epsilon`` under block fading."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    return float(spec.snr_threshold / (spec.n_rounds * gain_inv_cdf(fading, epsilon)))


def rtd_throughput_continuous(spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec) -> float:
    """``eta = sum_m (R/m) Pr{S_m}``; zero for an all-zero policy."""
    if policy.total <= 0:
        return 0.0
    prof = rtd_decode_profile(spec, policy, fading)
    return float(np.sum(spec.rate / np.arange(1, spec.n_rounds + 1) * prof.p_success))


def _generic_metrics(spec, policy, fading, model):
    p, p_out = rtd_probabilities(spec.rate, policy.powers, fading)
    rounds = np.arange(1, spec.n_rounds + 1)
    power, eta, energy, uses, e_rounds = long_term(p, p_out, policy.cumulative, rounds, spec.rate, model)
    return Metrics(
        outage=float(p_out),
        avg_power=float(power),
        throughput=float(eta),
        expected_rounds=float(e_rounds),
        expected_energy=float(energy),
        expected_channel_uses=float(uses),
    )


def rtd_continuous_metrics(spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec) -> Metrics:
    _check(spec, policy)
    m = _generic_metrics(spec, policy, fading, Model.CONTINUOUS)
    return m


def rtd_bursting_metrics(spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec) -> Metrics:
    """Bursting-model metrics (one packet per fading block).

    Under block fading the telescoped forms are used: with
    ``q_m = F_G((e^R - 1)/S_m)`` (``q_0 = 1``),

    * ``E{energy} = P_1 + sum_{m>=2} P_m q_{m-1}``
    * ``E{rounds} = 1 + sum_{m<=M} q_m``
    * ``phi = E{energy} / E{rounds}``, ``eta = R (1 - q_{M+1}) / E{rounds}``.
    """
    _check(spec, policy)
    if not fading.is_block:
        return _generic_metrics(spec, policy, fading, Model.BURSTING)
    q = -np.expm1(-fading.lam * _gain_thresholds(spec.rate, policy.cumulative))
    energy = policy.powers[0] + np.dot(policy.powers[1:], q[:-1])
    rounds = 1.0 + np.sum(q[:-1])
    return Metrics(
        outage=float(q[-1]),
        avg_power=float(energy / rounds),
        throughput=float(spec.rate * (1.0 - q[-1]) / rounds),
        expected_rounds=float(rounds),
        expected_energy=float(energy),
        expected_channel_uses=float(rounds),
    )


def rtd_metrics(spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec, model: Model) -> Metrics:
    if Model(model) is Model.BURSTING:
        return rtd_bursting_metrics(spec, policy, fading)
    return rtd_continuous_metrics(spec, policy, fading)


def hypoexponential_cdf(x, means) -> float:
    """CDF at ``x`` of a sum of independent exponentials with distinct ``means``."""
    rates = 1.0 / np.asarray(means, dtype=float)
    diff = rates[None, :] - rates[:, None]
    np.fill_diagonal(diff, 1.0)
    ratio = rates[None, :] / diff
    np.fill_diagonal(ratio, 1.0)
    weights = np.prod(ratio, axis=1)
    return float(1.0 - np.dot(weights, np.exp(-rates * x)))


def _distinct_positive(powers) -> bool:
    if np.any(powers <= 0):
        return False
    p = np.sort(powers)
    return bool(np.all(np.diff(p) > _DISTINCT_RTOL * p[1:]))


def rtd_fast_fading_outage(
    spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec, mc_budget: int = 10**6, seed=None
) -> float:
    """Outage ``Pr{log(1 + sum_n g_n P_n) < R}`` with per-round gains.

    Fast fading with pairwise-distinct positive powers uses the
    hypoexponential CDF of ``sum_n g_n P_n``; every other case (repeated or
    zero powers, correlated gains) falls back to Monte Carlo with
    ``mc_budget`` samples.
    """
    if policy.n_rounds != spec.n_rounds:
        raise DomainError(f"policy has {policy.n_rounds} rounds, spec needs {spec.n_rounds}")
    if spec.n_rounds == 1 or fading.is_block:
        return rtd_outage(spec, policy, FadingSpec.block(fading.lam))
    a = spec.snr_threshold
    if fading.correlation == 0.0 and _distinct_positive(policy.powers):
        return hypoexponential_cdf(a, policy.powers / fading.lam)
    powers = policy.powers

    def event(g):
        return g @ powers < a

    return mc_event_probability(fading, spec.n_rounds, event, mc_budget, seed)[0]


def rtd_avg_power_lower_bound(
    spec: RtdSpec, policy: PowerPolicy, fading: FadingSpec, epsilon: float | None = None
) -> float:
    """Exponential-Chebyshev lower bound on the continuous-model average power.

    ``e^-R sum_m (S_m - m P_{m+1}) / (m (m+1)) (1 + E{G} S_m)
    + (e^R - 1) / ((M+1) F_G^-1(epsilon))``.  Valid for nondecreasing
    policies that meet the outage target; loose at low rates.  Without
    ``epsilon`` the policy's own outage is used.
    """
    if policy.n_rounds != spec.n_rounds:
        raise DomainError(f"policy has {policy.n_rounds} rounds, spec needs {spec.n_rounds}")
    if epsilon is None:
        epsilon = rtd_outage(spec, policy, FadingSpec.block(fading.lam))
    s = policy.cumulative
    m = np.arange(1, spec.n_rounds)
    coeff = (s[:-1] - m * policy.powers[1:]) / (m * (m + 1))
    first = np.exp(-spec.rate) * np.sum(coeff * (1.0 + mean_gain(fading) * s[:-1]))
    return float(first + rtd_short_term_power(spec, epsilon, fading))

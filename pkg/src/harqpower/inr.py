"""Incremental redundancy (INR) HARQ: closed-form performance model.

A mother codeword carrying ``Q`` nats is punctured into ``M+1`` pieces of
lengths ``l_1 .. l_{M+1}``; the equivalent rate after round ``m`` is
``R^(m) = Q / (l_1 + ... + l_m)``.  With the coefficients
``c_n = 1/R^(n) - 1/R^(n-1)`` (``R^(0) = inf``) the packet is decodable after
round ``m`` iff the accumulated information

    A_m(g) = sum_{n<=m} c_n log(1 + g P_n)

reaches 1.  ``A_m`` is increasing in ``g``, so each round has a gain
threshold ``g*_m`` and block-fading probabilities follow from ``F_G``.

Lengths are normalised to ``l_1 = 1``; ``Q`` then equals ``R^(1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._longterm import Model, long_term
from .errors import DegeneratePolicyError, DomainError, NumericError, UnsupportedConfigurationError
from .fading import FadingSpec, gain_cdf, gain_inv_cdf
from .policy import DecodeProfile, Metrics, PowerPolicy
from .temporal import mc_event_probability, two_round_outage

__all__ = [
    "InrRateSchedule",
    "EnergySchedule",
    "accumulated_information",
    "decode_thresholds",
    "inr_probabilities",
    "inr_decode_profile",
    "inr_outage_threshold",
    "inr_outage",
    "inr_equivalent_powers",
    "inr_avg_power_continuous",
    "inr_expected_energy",
    "inr_continuous_metrics",
    "inr_bursting_metrics",
    "inr_metrics",
    "inr_short_term_power",
    "inr_throughput_continuous",
    "inr_fast_fading_outage",
]

_ROOT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class InrRateSchedule:
    """Strictly decreasing equivalent rates ``R^(1) > ... > R^(M+1)``."""

    rates: np.ndarray

    def __post_init__(self):
        r = np.array(self.rates, dtype=float).reshape(-1)
        if r.size == 0 or np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise DomainError("rates must be finite and positive")
        if np.any(np.diff(r) >= 0):
            raise DomainError("INR rates must be strictly decreasing")
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    @classmethod
    def fixed_length(cls, rate: float, max_retx: int) -> "InrRateSchedule":
        """Equal-length rounds: ``R^(m) = rate / m``."""
        return cls(rate / np.arange(1, max_retx + 2))

    @property
    def n_rounds(self) -> int:
        return self.rates.size

    @property
    def max_retx(self) -> int:
        return self.rates.size - 1

    @property
    def coefficients(self) -> np.ndarray:
        inv = 1.0 / self.rates
        return np.diff(inv, prepend=0.0)

    @property
    def lengths(self) -> np.ndarray:
        """Round lengths ``l_n`` with ``l_1 = 1``."""
        return self.rates[0] * self.coefficients

    @property
    def cumulative_lengths(self) -> np.ndarray:
        return self.rates[0] / self.rates

    @property
    def info_nats(self) -> float:
        """Nats per packet in units of ``l_1`` channel uses."""
        return float(self.rates[0])

    def length_fractions(self, m: int) -> np.ndarray:
        """``l_n / l^(m)`` for ``n = 1..m``, computed from the rates alone."""
        return self.rates[m - 1] * self.coefficients[:m]

    @property
    def is_fixed_length(self) -> bool:
        expected = self.rates[0] / np.arange(1, self.n_rounds + 1)
        return bool(np.allclose(self.rates, expected, rtol=1e-12, atol=0.0))

    def __repr__(self):
        return f"InrRateSchedule({np.array2string(self.rates, precision=6)})"


@dataclass(frozen=True, eq=False)
class EnergySchedule:
    """Per-round energies ``xi_n = l_n P_n`` and their running sums."""

    energies: np.ndarray
    lengths: np.ndarray

    @classmethod
    def from_policy(cls, schedule: InrRateSchedule, policy: PowerPolicy) -> "EnergySchedule":
        _check_lengths(schedule, policy)
        return cls(schedule.lengths * policy.powers, schedule.lengths)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.energies)

    @property
    def equivalent_powers(self) -> np.ndarray:
        """``xi^(m) / l^(m)``."""
        return self.cumulative / np.cumsum(self.lengths)


def _check_lengths(schedule, policy):
    if policy.n_rounds != schedule.n_rounds:
        raise DomainError(f"policy has {policy.n_rounds} rounds, schedule has {schedule.n_rounds}")


def _check(schedule, policy):
    _check_lengths(schedule, policy)
    if not np.any(policy.powers * schedule.coefficients > 0):
        raise DegeneratePolicyError("no round carries power; the packet can never be decoded")


def accumulated_information(schedule: InrRateSchedule, powers, g) -> np.ndarray:
    """``A_m(g)`` for ``m = 1..M+1`` (last axis)."""
    terms = schedule.coefficients * np.log1p(np.multiply.outer(g, np.asarray(powers, dtype=float)))
    return np.cumsum(terms, axis=-1)


def decode_thresholds(coefficients, powers, rtol: float = _ROOT_RTOL) -> np.ndarray:
    """Gain thresholds ``g*_m`` solving ``A_m(g) = 1`` for every round.

    Vectorised over leading axes of ``powers``.  The root is bracketed by
    ``1 / sum c_n P_n`` (from ``log(1+x) <= x``) and the single-round root
    ``min_n (e^{1/c_n} - 1) / P_n``, then bisected geometrically to relative
    width ``rtol``.  Rounds without any power yet get ``inf``.
    """
    c = np.asarray(coefficients, dtype=float)
    p = np.asarray(powers, dtype=float)
    k = c.size
    lin = np.cumsum(c * p, axis=-1)
    with np.errstate(divide="ignore", over="ignore"):
        single = np.where(p > 0, np.expm1(1.0 / c) / np.where(p > 0, p, 1.0), np.inf)
        lo = np.where(lin > 0, 1.0 / np.where(lin > 0, lin, 1.0), np.inf)
    hi = np.minimum.accumulate(single, axis=-1)
    alive = np.isfinite(hi)
    lo = np.where(alive, lo, 1.0)
    hi = np.where(alive, hi, 1.0)
    if np.any(hi < lo * (1 - 1e-12)):
        raise NumericError("INR threshold bracket inverted")
    mask = np.tril(np.ones((k, k)))  # mask[m, n] = 1 for n <= m
    for _ in range(200):
        if np.all(hi <= lo * (1.0 + rtol)):
            break
        mid = np.sqrt(lo * hi)
        # A_m(mid) for each m, using the m-th candidate gain
        info = np.einsum("...mn,mn,n->...m", np.log1p(mid[..., :, None] * p[..., None, :]), mask, c)
        up = info >= 1.0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    else:
        raise NumericError("INR threshold bisection did not converge")
    return np.where(alive, np.sqrt(lo * hi), np.inf)


def inr_probabilities(schedule: InrRateSchedule, powers, fading: FadingSpec):
    """Vectorised decode profile for power arrays of shape ``(..., M+1)``.

    Block fading is exact for any M; other temporal models are exact for
    ``M <= 1`` via quadrature.
    """
    powers = np.asarray(powers, dtype=float)
    k = schedule.n_rounds
    lam = fading.lam
    c = schedule.coefficients
    if fading.is_block or k == 1:
        t = decode_thresholds(c, powers)
        decoded_by = np.exp(-lam * t)
        p_success = np.diff(decoded_by, axis=-1, prepend=0.0)
        return p_success, -np.expm1(-lam * t[..., -1])
    if k != 2:
        raise UnsupportedConfigurationError(
            "closed-form INR probabilities under non-block fading are limited to M <= 1"
        )
    p1, p2 = powers[..., 0], powers[..., 1]
    with np.errstate(divide="ignore"):
        t1 = np.where(p1 > 0, np.expm1(1.0 / c[0]) / np.where(p1 > 0, p1, 1.0), np.inf)

    def second(g1):
        left = 1.0 - c[0] * np.log1p(g1 * p1[..., None])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y = np.expm1(left / c[1]) / p2[..., None]
        return np.where(p2[..., None] > 0, y, np.inf)

    p_outage = two_round_outage(fading, t1, second)
    first = np.exp(-lam * t1)
    p_success = np.stack([first, 1.0 - first - p_outage], axis=-1)
    return p_success, p_outage


def inr_decode_profile(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec) -> DecodeProfile:
    """``Pr{S_m} = F_G(g*_{m-1}) - F_G(g*_m)`` with ``g*_0 = inf``."""
    _check(schedule, policy)
    p, p_out = inr_probabilities(schedule, policy.powers, fading)
    return DecodeProfile(p_success=p, p_outage=float(p_out))


def inr_outage_threshold(schedule: InrRateSchedule, policy: PowerPolicy) -> float:
    """Gain ``g*`` below which the packet is lost after all rounds."""
    _check(schedule, policy)
    return float(decode_thresholds(schedule.coefficients, policy.powers)[-1])


def inr_outage(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec) -> float:
    _check_lengths(schedule, policy)
    if not np.any(policy.powers > 0):
        return 1.0
    if not fading.is_block and schedule.n_rounds > 1:
        return float(inr_probabilities(schedule, policy.powers, fading)[1])
    return float(gain_cdf(fading, inr_outage_threshold(schedule, policy)))


def inr_equivalent_powers(schedule: InrRateSchedule, policy: PowerPolicy) -> np.ndarray:
    """``P^(m) = R^(m) sum_{n<=m} P_n c_n`` -- rate-only form of the running power."""
    _check_lengths(schedule, policy)
    return schedule.rates * np.cumsum(policy.powers * schedule.coefficients)


def inr_avg_power_continuous(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec) -> float:
    """``P_bar = sum_m P^(m) Pr{S_m} + P^(M+1) Pr{outage}``."""
    prof = inr_decode_profile(schedule, policy, fading)
    eq = inr_equivalent_powers(schedule, policy)
    return float(np.dot(eq, prof.p_success) + eq[-1] * prof.p_outage)


def inr_expected_energy(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec) -> float:
    """Average energy per packet, in units of ``l_1`` channel uses times power."""
    prof = inr_decode_profile(schedule, policy, fading)
    xi = EnergySchedule.from_policy(schedule, policy).cumulative
    return float(np.dot(xi, prof.p_success) + xi[-1] * prof.p_outage)


def inr_throughput_continuous(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec) -> float:
    """``eta = sum_m R^(m) Pr{S_m}``; zero for an all-zero policy."""
    if not np.any(policy.powers > 0):
        return 0.0
    prof = inr_decode_profile(schedule, policy, fading)
    return float(np.dot(schedule.rates, prof.p_success))


def _generic_metrics(schedule, policy, fading, model):
    p, p_out = inr_probabilities(schedule, policy.powers, fading)
    energy = EnergySchedule.from_policy(schedule, policy).cumulative
    power, eta, e_energy, uses, rounds = long_term(
        p, p_out, energy, schedule.cumulative_lengths, schedule.info_nats, model
    )
    return Metrics(
        outage=float(p_out),
        avg_power=float(power),
        throughput=float(eta),
        expected_rounds=float(rounds),
        expected_energy=float(e_energy),
        expected_channel_uses=float(uses),
    )


def inr_continuous_metrics(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec) -> Metrics:
    _check(schedule, policy)
    return _generic_metrics(schedule, policy, fading, Model.CONTINUOUS)


def inr_bursting_metrics(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec) -> Metrics:
    """Bursting-model metrics.

    Under block fading, with ``Theta_n = F_G(g*_{n-1})`` the probability that
    round ``n`` is needed,

    * ``phi = (P_1/R^(1) + sum_{n>=2} P_n c_n Theta_n) / (1/R^(1) + sum_{n>=2} c_n Theta_n)``
    * ``eta = (1 - F_G(g*_{M+1})) / (1/R^(1) + sum_{n>=2} c_n Theta_n)``.
    """
    _check(schedule, policy)
    if not fading.is_block:
        return _generic_metrics(schedule, policy, fading, Model.BURSTING)
    c = schedule.coefficients
    g = decode_thresholds(c, policy.powers)
    theta = np.concatenate([[1.0], -np.expm1(-fading.lam * g[:-1])])
    den = np.dot(c, theta)
    num = np.dot(c * policy.powers, theta)
    outage = float(-np.expm1(-fading.lam * g[-1]))
    return Metrics(
        outage=outage,
        avg_power=float(num / den),
        throughput=float((1.0 - outage) / den),
        expected_rounds=float(np.sum(theta)),
        expected_energy=float(schedule.rates[0] * num),
        expected_channel_uses=float(schedule.rates[0] * den),
    )


def inr_metrics(schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec, model: Model) -> Metrics:
    if Model(model) is Model.BURSTING:
        return inr_bursting_metrics(schedule, policy, fading)
    return inr_continuous_metrics(schedule, policy, fading)


def inr_short_term_power(schedule: InrRateSchedule, epsilon: float, fading: FadingSpec) -> float:
    """Uniform power meeting the block-fading outage target exactly.

    With equal powers ``A_{M+1}(g) = log(1 + gP) / R^(M+1)``, so
    ``P = (e^{R^(M+1)} - 1) / F_G^-1(epsilon)``.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    return float(np.expm1(schedule.rates[-1]) / gain_inv_cdf(fading, epsilon))


def inr_fast_fading_outage(
    schedule: InrRateSchedule, policy: PowerPolicy, fading: FadingSpec, mc_budget: int = 10**6, seed=None
) -> float:
    """Monte Carlo outage ``Pr{sum_n log(1 + g_n P_n) < R}`` with per-round gains.

    Only fixed-length schedules are meaningful here: a codeword spans one
    fading block, so all rounds share the same length.
    """
    _check_lengths(schedule, policy)
    if not schedule.is_fixed_length:
        raise UnsupportedConfigurationError("fast/correlated fading requires a fixed-length INR schedule")
    if schedule.n_rounds == 1 or fading.is_block:
        return inr_outage(schedule, policy, FadingSpec.block(fading.lam))
    rate = schedule.rates[0]
    powers = policy.powers

    def event(g):
        return np.sum(np.log1p(g * powers), axis=-1) < rate

    return mc_event_probability(fading, schedule.n_rounds, event, mc_budget, seed)[0]

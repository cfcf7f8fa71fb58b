"""Outage-constrained power allocation.

:func:`optimize` is a restart-based elite random search: a population of
candidate power vectors for rounds ``1..M`` is drawn, the last-round power
is solved from the outage constraint (so every surviving candidate meets it
with equality), the best candidate is kept, a few perturbed copies of it are
bred and the rest of the population is redrawn.  Objectives are evaluated
with the closed forms of :mod:`harqpower.rtd` / :mod:`harqpower.inr`; no
Monte Carlo runs inside the loop.

:func:`geometric_allocation` is the large-``M`` alternative: it solves the
stationarity recursion on ``Z^(m) = a / S_m`` by shooting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._longterm import Model, Protocol, long_term
from .errors import ConfigError, DomainError, NumericError, UnsupportedConfigurationError
from .fading import FadingSpec, gain_hazard, gain_inv_cdf, gain_logsf
from .inr import InrRateSchedule, inr_metrics, inr_probabilities, inr_short_term_power
from .policy import Metrics, PowerPolicy, db
from .rtd import RtdSpec, rtd_metrics, rtd_probabilities, rtd_short_term_power

__all__ = [
    "Objective",
    "OptimizerConfig",
    "OptimizationResult",
    "solve_last_round_power",
    "optimize",
    "geometric_z_sequence",
    "geometric_allocation",
    "recursion_residuals",
    "ratio_variation",
    "power_efficiency",
    "relative_throughput_loss",
    "monotonicity_report",
    "min_outage_at_power",
]


@dataclass(frozen=True)
class Objective:
    """Minimise long-term average power subject to ``Pr{outage} <= epsilon``."""

    protocol: Protocol
    model: Model
    spec: RtdSpec | InrRateSchedule
    fading: FadingSpec
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "model", Model(self.model))
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie in (0, 1)")
        if self.protocol is Protocol.RTD and not isinstance(self.spec, RtdSpec):
            raise ConfigError("RTD objective needs an RtdSpec")
        if self.protocol is Protocol.INR and not isinstance(self.spec, InrRateSchedule):
            raise ConfigError("INR objective needs an InrRateSchedule")
        if not self.fading.is_block and self.n_rounds > 2:
            raise UnsupportedConfigurationError("non-block fading objectives are limited to M <= 1")

    @classmethod
    def rtd(cls, rate=1.0, max_retx=1, epsilon=1e-3, model=Model.CONTINUOUS, fading=None) -> "Objective":
        return cls(Protocol.RTD, model, RtdSpec(rate, max_retx), fading or FadingSpec.block(), epsilon)

    @classmethod
    def inr(cls, rate=1.0, max_retx=1, epsilon=1e-3, model=Model.CONTINUOUS, fading=None, rates=None) -> "Objective":
        schedule = InrRateSchedule(rates) if rates is not None else InrRateSchedule.fixed_length(rate, max_retx)
        return cls(Protocol.INR, model, schedule, fading or FadingSpec.block(), epsilon)

    def with_epsilon(self, epsilon: float) -> "Objective":
        return Objective(self.protocol, self.model, self.spec, self.fading, epsilon)

    @property
    def n_rounds(self) -> int:
        return self.spec.n_rounds

    @property
    def swap_invariant(self) -> bool:
        """Whether exchanging two rounds' powers leaves the outage unchanged."""
        return self.protocol is Protocol.RTD or self.spec.is_fixed_length

    def probabilities(self, powers):
        if self.protocol is Protocol.RTD:
            return rtd_probabilities(self.spec.rate, powers, self.fading)
        return inr_probabilities(self.spec, powers, self.fading)

    def outage(self, powers):
        return self.probabilities(powers)[1]

    def evaluate(self, powers) -> np.ndarray:
        """Average power for power arrays of shape ``(..., M+1)``."""
        powers = np.asarray(powers, dtype=float)
        p, p_out = self.probabilities(powers)
        if self.protocol is Protocol.RTD:
            energy = np.cumsum(powers, axis=-1)
            uses = np.arange(1, self.n_rounds + 1)
            info = self.spec.rate
        else:
            energy = np.cumsum(powers * self.spec.lengths, axis=-1)
            uses = self.spec.cumulative_lengths
            info = self.spec.info_nats
        return long_term(p, p_out, energy, uses, info, self.model)[0]

    def metrics(self, policy: PowerPolicy) -> Metrics:
        if self.protocol is Protocol.RTD:
            return rtd_metrics(self.spec, policy, self.fading, self.model)
        return inr_metrics(self.spec, policy, self.fading, self.model)

    def baseline_power(self) -> float:
        """Uniform (short-term) power meeting the outage target exactly."""
        if self.fading.is_block:
            if self.protocol is Protocol.RTD:
                return rtd_short_term_power(self.spec, self.epsilon, self.fading)
            return inr_short_term_power(self.spec, self.epsilon, self.fading)
        block = self.with_fading(FadingSpec.block(self.fading.lam)).baseline_power()
        k = self.n_rounds

        def excess(p):
            return self.outage(np.multiply.outer(p, np.ones(k))) - self.epsilon

        return float(_bisect_decreasing(excess, np.array(block)))

    def with_fading(self, fading: FadingSpec) -> "Objective":
        return Objective(self.protocol, self.model, self.spec, fading, self.epsilon)


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the elite random search.

    ``init_power_range=None`` means ``[1e-2, 10 * uniform baseline]``.
    """

    population: int = 20
    elite_neighbours: int = 5
    max_iters: int = 5000
    convergence_tol: float = 1e-6
    patience: int = 50
    restarts: int = 10
    perturbation_scale: float = 0.25
    anneal: float = 0.95
    min_perturbation: float = 1e-3
    seed: int = 0
    init_power_range: tuple | None = None
    polish_swaps: bool = True

    def __post_init__(self):
        if self.elite_neighbours >= self.population:
            raise ConfigError("elite_neighbours must be smaller than population")
        if min(self.population, self.elite_neighbours, self.max_iters, self.restarts, self.patience) < 1:
            raise ConfigError("all counts must be >= 1")
        if self.convergence_tol <= 0 or self.perturbation_scale <= 0 or self.min_perturbation <= 0:
            raise ConfigError("tolerances and scales must be positive")
        if self.init_power_range is not None:
            lo, hi = self.init_power_range
            if not 0 < lo < hi:
                raise ConfigError("init_power_range must satisfy 0 < low < high")


@dataclass
class OptimizationResult:
    best_policy: PowerPolicy
    achieved: Metrics
    objective_value: float
    baseline_power: float
    trace: np.ndarray
    converged: bool
    iterations: int
    restart_values: np.ndarray
    monotonicity_report: dict = field(default_factory=dict)

    @property
    def gain_db(self) -> float:
        return float(db(self.baseline_power) - db(self.objective_value))


def _bisect_decreasing(excess, x0, rtol=1e-11, max_iter=200):
    """Root ``x > 0`` of a decreasing ``excess`` (vectorised), near the guess ``x0``.

    Brackets by factors of 4 around ``x0``, then runs Illinois-modified
    regula falsi in ``log x``.
    """
    x0 = np.array(x0, dtype=float)
    lo, hi = np.log(x0), np.log(x0)
    f_lo, f_hi = excess(x0), excess(x0)
    for _ in range(200):
        need_up, need_down = f_hi > 0, f_lo <= 0
        if not (np.any(need_up) or np.any(need_down)):
            break
        hi = np.where(need_up, hi + np.log(4.0), hi)
        lo = np.where(need_down, lo - np.log(4.0), lo)
        f_hi = np.where(need_up, excess(np.exp(hi)), f_hi)
        f_lo = np.where(need_down, excess(np.exp(lo)), f_lo)
    else:
        raise NumericError("could not bracket the outage constraint")
    side = np.zeros(lo.shape)
    for _ in range(max_iter):
        if np.all(hi - lo <= rtol):
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        bad = ~np.isfinite(mid) | (mid <= lo) | (mid >= hi)
        mid = np.where(bad, 0.5 * (lo + hi), mid)
        f_mid = excess(np.exp(mid))
        up = f_mid <= 0
        hi, f_hi = np.where(up, mid, hi), np.where(up, f_mid, f_hi)
        lo, f_lo = np.where(up, lo, mid), np.where(up, f_lo, f_mid)
        # Illinois step: halve the stale endpoint's value when one side repeats
        f_lo = np.where(up & (side > 0), 0.5 * f_lo, f_lo)
        f_hi = np.where(~up & (side < 0), 0.5 * f_hi, f_hi)
        side = np.where(up, 1.0, -1.0)
        done = hi - lo <= rtol
        lo = np.where(done, hi, lo)
    return np.exp(hi)


def _solve_last(objective: Objective, partial) -> np.ndarray:
    """Raw last-round power for partial vectors ``(..., M)``; may be negative.

    Block fading uses the closed forms; other fading models (``M = 1``)
    root-solve the quadrature outage, returning ``-1`` where the first
    round alone already beats the target.
    """
    partial = np.asarray(partial, dtype=float)
    eps = objective.epsilon
    fading = objective.fading
    if fading.is_block:
        g = gain_inv_cdf(fading, eps)
        if objective.protocol is Protocol.RTD:
            return objective.spec.snr_threshold / g - np.sum(partial, axis=-1)
        c = objective.spec.coefficients
        s = np.sum(c[:-1] * np.log1p(g * partial), axis=-1)
        return np.expm1((1.0 - s) / c[-1]) / g
    shape = partial.shape[:-1]
    rows = partial.reshape(-1, partial.shape[-1])
    zero = np.concatenate([rows, np.zeros((rows.shape[0], 1))], axis=1)
    out = np.full(rows.shape[0], -1.0)
    todo = objective.outage(zero) > eps
    if np.any(todo):
        rows = rows[todo]
        block = objective.with_fading(FadingSpec.block(fading.lam))
        guess = np.maximum(_solve_last(block, rows), 1e-3 * np.max(rows, axis=-1) + 1e-12)

        def excess(x):
            return objective.outage(np.concatenate([rows, x[:, None]], axis=1)) - eps

        out[todo] = _bisect_decreasing(excess, guess)
    return out.reshape(shape)


def solve_last_round_power(objective: Objective, partial, clamp: bool = True):
    """Power of round ``M+1`` that makes the outage constraint bind.

    Returns ``None`` (infeasible) when the solved value is negative and
    ``clamp`` is off.  With ``clamp`` on (default) an over-powered prefix that
    already meets the target yields ``0.0``.
    """
    partial = np.asarray(partial, dtype=float).reshape(-1)
    if partial.size != objective.n_rounds - 1:
        raise DomainError(f"expected {objective.n_rounds - 1} leading powers, got {partial.size}")
    if np.any(partial < 0):
        raise DomainError("powers must be nonnegative")
    value = float(_solve_last(objective, partial))
    if value < 0:
        return 0.0 if clamp else None
    return value


def _pick_best(values, full):
    """Index of the minimum, ties broken by the lexicographically smaller vector."""
    best = np.min(values)
    idx = np.flatnonzero(values == best)
    if idx.size == 1:
        return int(idx[0])
    keys = full[idx]
    order = np.lexsort(keys.T[::-1])
    return int(idx[order[0]])


def _evaluate(objective, partial):
    last = _solve_last(objective, partial)
    feasible = last >= 0
    full = np.concatenate([partial, np.where(feasible, last, 0.0)[:, None]], axis=1)
    values = np.full(partial.shape[0], np.inf)
    if np.any(feasible):
        values[feasible] = objective.evaluate(full[feasible])
    return values, full


def _search(objective: Objective, config: OptimizerConfig, restart: int, lo: float, hi: float):
    m = objective.n_rounds - 1
    j, b = config.population, config.elite_neighbours
    log_lo, log_hi = np.log(lo), np.log(hi)
    elite = None
    elite_value = np.inf
    elite_full = None
    sigma = config.perturbation_scale
    stall = 0
    trace = []
    converged = False
    for it in range(config.max_iters):
        rng = np.random.default_rng([config.seed, restart, it])
        pop = np.exp(rng.uniform(log_lo, log_hi, size=(j, m)))
        noise = rng.standard_normal((b, m))
        if elite is not None:
            pop[0] = elite
            pop[1 : b + 1] = elite * np.exp(sigma * noise)
        values, full = _evaluate(objective, pop)
        i = _pick_best(values, full)
        previous = elite_value
        if values[i] < elite_value or (values[i] == elite_value and elite is None):
            elite, elite_value, elite_full = pop[i].copy(), float(values[i]), full[i].copy()
        trace.append(elite_value)
        if np.isfinite(previous):
            if (previous - elite_value) <= config.convergence_tol * abs(previous):
                stall += 1
            else:
                stall = 0
            if stall >= config.patience:
                converged = True
                break
        sigma = max(sigma * config.anneal, config.min_perturbation)
    return elite_full, elite_value, np.array(trace), converged


def _polish(objective: Objective, powers: np.ndarray, value: float):
    """Accept adjacent swaps that lower the objective (outage is swap-invariant)."""
    improved = True
    while improved:
        improved = False
        for k in range(powers.size - 1):
            if powers[k] <= powers[k + 1]:
                continue
            trial = powers.copy()
            trial[k], trial[k + 1] = trial[k + 1], trial[k]
            v = float(objective.evaluate(trial))
            if v < value:
                powers, value, improved = trial, v, True
    return powers, value


def monotonicity_report(objective: Objective, policy: PowerPolicy, rtol: float = 1e-6) -> dict:
    """Round-ordering checks on a policy.

    ``powers_nondecreasing`` / ``energies_nondecreasing`` use the relative
    tolerance ``rtol``.  When swapping rounds keeps the outage unchanged,
    ``swap_deltas[k]`` is the objective change caused by exchanging rounds k
    and k+1 (nonnegative at an optimum).
    """
    p = policy.powers
    if objective.protocol is Protocol.INR:
        energies = objective.spec.lengths * p
    else:
        energies = p.copy()
    report = {
        "powers_nondecreasing": bool(np.all(p[:-1] <= p[1:] * (1 + rtol))),
        "energies_nondecreasing": bool(np.all(energies[:-1] <= energies[1:] * (1 + rtol))),
    }
    if objective.swap_invariant and p.size > 1:
        base = float(objective.evaluate(p))
        swaps = np.array([p[[*range(k), k + 1, k, *range(k + 2, p.size)]] for k in range(p.size - 1)])
        report["swap_deltas"] = (objective.evaluate(swaps) - base).tolist()
    return report


def optimize(objective: Objective, config: OptimizerConfig | None = None) -> OptimizationResult:
    """Minimise the objective's average power under its outage constraint.

    Runs ``config.restarts`` independent searches and keeps the best.  All
    randomness of restart ``r``, iteration ``i`` comes from the generator
    seeded with ``(config.seed, r, i)``, so results do not depend on
    evaluation order.
    """
    config = config or OptimizerConfig()
    baseline = objective.baseline_power()
    if objective.n_rounds == 1:
        p = max(float(_solve_last(objective, np.zeros(0))), 0.0)
        policy = PowerPolicy([p])
        value = float(objective.evaluate(policy.powers))
        return OptimizationResult(
            best_policy=policy,
            achieved=objective.metrics(policy),
            objective_value=value,
            baseline_power=baseline,
            trace=np.array([value]),
            converged=True,
            iterations=0,
            restart_values=np.array([value]),
            monotonicity_report=monotonicity_report(objective, policy),
        )
    lo, hi = config.init_power_range or (1e-2, 10.0 * baseline)
    best_full, best_value = None, np.inf
    traces, restart_values, all_converged = [], [], []
    for r in range(config.restarts):
        full, value, trace, conv = _search(objective, config, r, lo, hi)
        restart_values.append(value)
        traces.append(trace)
        all_converged.append(conv)
        if full is None:
            continue
        if best_full is None or value < best_value or (value == best_value and tuple(full) < tuple(best_full)):
            best_full, best_value = full, value
    if best_full is None:
        from .errors import InfeasibleError

        raise InfeasibleError("no feasible candidate found; widen init_power_range")
    if config.polish_swaps and objective.swap_invariant:
        best_full, best_value = _polish(objective, best_full, best_value)
    trace = np.minimum.accumulate(np.concatenate(traces))
    trace = np.minimum(trace, np.concatenate([trace[:-1], [best_value]]))
    policy = PowerPolicy(best_full)
    return OptimizationResult(
        best_policy=policy,
        achieved=objective.metrics(policy),
        objective_value=float(best_value),
        baseline_power=baseline,
        trace=trace,
        converged=bool(any(all_converged)),
        iterations=int(sum(t.size for t in traces)),
        restart_values=np.array(restart_values),
        monotonicity_report=monotonicity_report(objective, policy),
    )


def _rate_and_threshold(spec):
    """Per-spec numerator ``a`` of ``Z^(m) = a / S_m`` and the round count."""
    if isinstance(spec, RtdSpec):
        return spec.snr_threshold, spec.max_retx
    if isinstance(spec, InrRateSchedule):
        if not spec.is_fixed_length:
            raise UnsupportedConfigurationError("geometric allocation needs fixed-length INR")
        return float(spec.rates[0]), spec.max_retx
    raise ConfigError("spec must be an RtdSpec or a fixed-length InrRateSchedule")


def _z_step(m, z_prev, z, fading, recursion):
    if recursion == "geometric":
        return m / (m + 1) * z * z / z_prev
    # exact stationarity of the Z-form average power in Z^(m)
    drop = -np.expm1(gain_logsf(fading, z_prev) - gain_logsf(fading, z))
    inv = 1.0 / (m * z) + drop / (m * z * z * gain_hazard(fading, z))
    return 1.0 / ((m + 1) * inv)


def geometric_z_sequence(max_retx: int, epsilon: float, fading: FadingSpec, recursion: str = "geometric") -> np.ndarray:
    """``Z^(1) .. Z^(M+1)`` of the large-``M`` allocation.

    With ``recursion="geometric"`` interior rounds obey
    ``Z^(m)^2 = (m+1)/m * Z^(m-1) Z^(m+1)`` (the small-``Z`` linearisation of
    the stationarity conditions).  ``recursion="exact"`` keeps the full
    conditions instead.  Round one always uses the exact condition with
    ``F_G(Z^(0)) = 1``, written with the hazard ``h = f / (1 - F)`` so it
    survives pdf underflow,

        Z^(2) = h(Z1) / (2 [ 1 / Z1^2 + h(Z1) / Z1 ]),

    and ``Z^(1)`` is shot (bisection in log space) until
    ``Z^(M+1) = F_G^-1(epsilon)`` to 1e-9 relative.
    """
    if recursion not in ("geometric", "exact"):
        raise ConfigError("recursion must be 'geometric' or 'exact'")
    if max_retx < 1:
        raise DomainError("geometric allocation needs at least one retransmission")
    target = gain_inv_cdf(fading, epsilon)

    def forward(log_z1):
        z1 = np.exp(log_z1)
        h = gain_hazard(fading, z1)
        z = [z1, h / (2.0 * (1.0 / z1**2 + h / z1))]
        for m in range(2, max_retx + 1):
            z.append(_z_step(m, z[-2], z[-1], fading, recursion))
        return np.array(z)

    lo = np.log(target)
    hi = lo + 1.0
    for _ in range(400):
        if forward(hi)[-1] >= target:
            break
        lo, hi = hi, hi + 2.0 * (hi - lo)
    else:
        raise NumericError(f"could not bracket Z^(1) for the geometric allocation (last try log Z1 = {hi:.3g})")
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        if forward(mid)[-1] >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13:
            break
    z = forward(hi)
    if abs(z[-1] / target - 1.0) > 1e-9:
        raise NumericError(f"shooting missed the boundary: Z^(M+1)={z[-1]:.6e}, target {target:.6e}")
    if np.any(np.diff(z) >= 0):
        raise NumericError("geometric Z sequence is not strictly decreasing")
    return z


def recursion_residuals(z) -> np.ndarray:
    """``|Z^(m) - sqrt((m+1)/m Z^(m-1) Z^(m+1))| / Z^(m)`` for ``m = 2..M``."""
    z = np.asarray(z, dtype=float)
    m = np.arange(2, z.size)
    rhs = np.sqrt((m + 1) / m * z[:-2] * z[2:])
    return np.abs(z[1:-1] - rhs) / z[1:-1]


def ratio_variation(z, last: int = 5) -> float:
    """Spread ``(max - min) / mean`` of ``Z^(m+1)/Z^(m)`` over the last ``last`` ratios."""
    z = np.asarray(z, dtype=float)
    r = z[1:] / z[:-1]
    r = r[-last:]
    return float(np.ptp(r) / np.mean(r))


def geometric_allocation(spec, epsilon: float, fading: FadingSpec, recursion: str = "geometric") -> PowerPolicy:
    """Powers ``P_m = a (1/Z^(m) - 1/Z^(m-1))`` from :func:`geometric_z_sequence`.

    ``a = e^R - 1`` for RTD, which makes the Z-form of the average power
    exact and the policy meet the outage target with equality; for
    fixed-length INR ``a = R`` (small-SNR linearisation).
    """
    a, m = _rate_and_threshold(spec)
    z = geometric_z_sequence(m, epsilon, fading, recursion)
    return PowerPolicy(np.diff(a / z, prepend=0.0))


def power_efficiency(objective: Objective, config: OptimizerConfig | None = None, result=None) -> float:
    """Gain in dB of the optimised policy over the uniform baseline."""
    result = result or optimize(objective, config)
    return result.gain_db


def relative_throughput_loss(objective: Objective, config: OptimizerConfig | None = None, result=None) -> float:
    """``100 (eta_uniform - eta_opt) / eta_opt`` at equal average power."""
    result = result or optimize(objective, config)
    uniform = PowerPolicy.uniform(result.objective_value, objective.n_rounds)
    eta_short = objective.metrics(uniform).throughput
    eta_long = result.achieved.throughput
    return float(100.0 * (eta_short - eta_long) / eta_long)


def min_outage_at_power(objective: Objective, avg_power: float, n_grid: int = 60):
    """Smallest outage reachable at long-term average power ``avg_power`` (``M = 1``).

    Scans ``P_1`` on a log grid, sets ``P_2`` so the average power equals the
    budget, and refines the best grid point with a bounded scalar search.
    ``objective.epsilon`` is ignored.  Returns ``(outage, PowerPolicy)``.
    """
    from scipy.optimize import brentq, minimize_scalar

    if objective.n_rounds != 2:
        raise UnsupportedConfigurationError("min_outage_at_power handles one retransmission only")
    if not avg_power > 0:
        raise DomainError("avg_power must be positive")

    def second_power(p1):
        if objective.evaluate(np.array([p1, 0.0])) > avg_power:
            return None
        hi = avg_power
        while objective.evaluate(np.array([p1, hi])) < avg_power:
            hi *= 4.0
        return brentq(lambda p2: objective.evaluate(np.array([p1, p2])) - avg_power, 0.0, hi, xtol=1e-12, rtol=1e-13)

    def outage(log_p1):
        p1 = float(np.exp(log_p1))
        p2 = second_power(p1)
        return 1.0 if p2 is None else float(objective.outage(np.array([p1, p2])))

    grid = np.linspace(np.log(avg_power) - np.log(1e3), np.log(avg_power) + np.log(4.0), n_grid)
    vals = np.array([outage(x) for x in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    res = minimize_scalar(outage, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    best = res.x if res.fun <= vals[k] else grid[k]
    p1 = float(np.exp(best))
    policy = PowerPolicy([p1, second_power(p1)])
    return float(objective.outage(policy.powers)), policy

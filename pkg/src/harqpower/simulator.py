"""Packet-level Monte Carlo for HARQ with per-round power control.

Gains come from the Gauss-Markov sampler.  Packets are grouped into *paths*:
a path is a stretch of channel that packets use back to back, the channel
advancing once per transmitted codeword (failed rounds included).

* bursting model: one packet per path, so packets are independent;
* continuous model: ``packets_per_block`` packets per path.  Under block
  fading the path is one fading block.

Estimators follow the two averaging rules: the bursting model reports ratios
of sums over all packets, the continuous model averages per-path ratios
(each path is one fading block).  Standard errors use batch means over
contiguous groups of paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._longterm import Model, Protocol
from .errors import ConfigError, DomainError, InfeasibleError, UnsupportedConfigurationError
from .fading import FadingSpec, sample_gains
from .inr import InrRateSchedule
from .policy import Metrics, PowerPolicy
from .rtd import RtdSpec

__all__ = [
    "SimConfig",
    "PacketOutcomes",
    "packet_outcomes",
    "simulate",
    "ReinforcementPolicy",
    "reinforcement_outcomes",
    "ReinforcementMetrics",
    "simulate_reinforcement",
    "summarize",
    "TuningResult",
    "DEFAULT_STEPS",
    "default_p_initial_grid",
    "tune_reinforcement",
    "matched_uniform_power",
]


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo experiment.

    ``n_packets`` is rounded up to a whole number of paths in the continuous
    model.
    """

    spec: RtdSpec | InrRateSchedule
    policy: PowerPolicy
    fading: FadingSpec = field(default_factory=FadingSpec.block)
    model: Model = Model.BURSTING
    n_packets: int = 10**6
    packets_per_block: int = 100
    n_batches: int = 100
    seed: int | None = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if min(self.n_packets, self.packets_per_block, self.n_batches) < 1:
            raise ConfigError("counts must be >= 1")
        if self.policy.n_rounds != self.spec.n_rounds:
            raise DomainError(f"policy has {self.policy.n_rounds} rounds, spec needs {self.spec.n_rounds}")

    @property
    def protocol(self) -> Protocol:
        return Protocol.RTD if isinstance(self.spec, RtdSpec) else Protocol.INR

    @property
    def packets_per_path(self) -> int:
        return 1 if self.model is Model.BURSTING else self.packets_per_block

    @property
    def n_paths(self) -> int:
        return -(-self.n_packets // self.packets_per_path)


@dataclass(frozen=True)
class PacketOutcomes:
    """Per-packet results, arrays of shape ``(n_paths, packets_per_path)``."""

    rounds_used: np.ndarray
    decoded: np.ndarray
    energy_spent: np.ndarray
    channel_uses: np.ndarray
    info_delivered: np.ndarray
    power_state: np.ndarray | None = None

    @property
    def n_packets(self) -> int:
        return self.decoded.size


class _Decoder:
    """Vectorised decode rule for one protocol and rate schedule."""

    def __init__(self, spec):
        if isinstance(spec, RtdSpec):
            self.rtd = True
            self.threshold = spec.snr_threshold
            self.lengths = np.ones(spec.n_rounds)
            self.info = spec.rate
        else:
            self.rtd = False
            self.coefficients = spec.coefficients
            self.lengths = spec.lengths
            self.info = spec.info_nats
        self.uses = np.cumsum(self.lengths)

    def __call__(self, gains, powers):
        """``gains`` and ``powers`` of shape ``(n, K)``; returns rounds used and decoded flags."""
        if self.rtd:
            done = np.cumsum(gains * powers, axis=1) >= self.threshold
        else:
            done = np.cumsum(self.coefficients * np.log1p(gains * powers), axis=1) >= 1.0
        decoded = done[:, -1]
        rounds = np.where(decoded, np.argmax(done, axis=1) + 1, done.shape[1])
        return rounds, decoded


def _draw(fading: FadingSpec, n_paths: int, n_steps: int, seed):
    return sample_gains(fading, n_paths, n_steps, np.random.default_rng(seed))


def _walk(gains, packets_per_path, n_rounds, step):
    """Send packets back to back along each gain path.

    ``step(k, window)`` gets the next ``n_rounds`` gains of every path and
    returns ``(rounds_used, decoded, energy, power_state)``; each path then
    advances by the rounds it used.
    """
    n_paths = gains.shape[0]
    rows = np.arange(n_paths)[:, None]
    offsets = np.arange(n_rounds)[None, :]
    pos = np.zeros(n_paths, dtype=np.int64)
    shape = (n_paths, packets_per_path)
    rounds_used = np.empty(shape, dtype=np.int64)
    decoded = np.empty(shape, dtype=bool)
    energy = np.empty(shape)
    state = np.empty(shape)
    for k in range(packets_per_path):
        window = gains[rows, pos[:, None] + offsets]
        r, d, e, s = step(k, window)
        rounds_used[:, k], decoded[:, k], energy[:, k], state[:, k] = r, d, e, s
        pos += r
    return rounds_used, decoded, energy, state


def _outcomes(decoder, rounds_used, decoded, energy, state=None):
    uses = decoder.uses[rounds_used - 1]
    info = np.where(decoded, decoder.info, 0.0)
    return PacketOutcomes(rounds_used, decoded, energy, uses, info, state)


def packet_outcomes(config: SimConfig) -> PacketOutcomes:
    """Simulate every packet of ``config``; deterministic per seed.

    Gains depend only on (fading, model, M, n_packets, seed), so two configs
    that differ only in protocol or powers see identical channels.
    """
    decoder = _Decoder(config.spec)
    k = config.spec.n_rounds
    ppp = config.packets_per_path
    gains = _draw(config.fading, config.n_paths, ppp * k, config.seed)
    powers = config.policy.powers
    cum_energy = np.cumsum(decoder.lengths * powers)
    power_row = np.broadcast_to(powers, (config.n_paths, k))

    def step(_, window):
        r, d = decoder(window, power_row)
        return r, d, cum_energy[r - 1], powers[0]

    r, d, e, _ = _walk(gains, ppp, k, step)
    return _outcomes(decoder, r, d, e)


def _batch_se(per_path_num, per_path_den, n_batches, ratio_of_sums):
    """Batch-means standard error of a ratio estimator over contiguous path groups."""
    n = per_path_num.size
    b = min(n_batches, n)
    if b < 2:
        return float("nan")
    groups = np.array_split(np.arange(n), b)
    if ratio_of_sums:
        vals = np.array([per_path_num[g].sum() / per_path_den[g].sum() for g in groups])
    else:
        ratio = per_path_num / per_path_den
        vals = np.array([ratio[g].mean() for g in groups])
    return float(np.std(vals, ddof=1) / np.sqrt(b))


def _metrics_from_paths(energy, uses, info, fails, rounds, packets_per_path, model, n_batches) -> Metrics:
    """Estimators and batch-means errors from per-path sums (1-D arrays)."""
    n_packets = energy.size * packets_per_path
    packets = np.full(energy.shape, float(packets_per_path))
    ratio_of_sums = Model(model) is Model.BURSTING
    if ratio_of_sums:
        power = energy.sum() / uses.sum()
        eta = info.sum() / uses.sum()
    else:
        power = np.mean(energy / uses)
        eta = np.mean(info / uses)
    se = {
        "outage": _batch_se(fails, packets, n_batches, True),
        "avg_power": _batch_se(energy, uses, n_batches, ratio_of_sums),
        "throughput": _batch_se(info, uses, n_batches, ratio_of_sums),
        "expected_rounds": _batch_se(rounds, packets, n_batches, True),
    }
    return Metrics(
        outage=float(fails.sum() / n_packets),
        avg_power=float(power),
        throughput=float(eta),
        expected_rounds=float(rounds.sum() / n_packets),
        expected_energy=float(energy.sum() / n_packets),
        expected_channel_uses=float(uses.sum() / n_packets),
        stderr=se,
    )


def summarize(out: PacketOutcomes, model: Model, n_batches: int = 100) -> Metrics:
    """Metrics and batch-means standard errors from packet outcomes."""

    def path_sum(x):
        # sequential order, matching the running sums of the reinforcement walk
        return np.cumsum(np.asarray(x, dtype=float), axis=1)[:, -1]

    return _metrics_from_paths(
        path_sum(out.energy_spent),
        path_sum(out.channel_uses),
        path_sum(out.info_delivered),
        path_sum(~out.decoded),
        path_sum(out.rounds_used),
        out.decoded.shape[1],
        model,
        n_batches,
    )


def simulate(config: SimConfig) -> Metrics:
    """Empirical outage, average power, throughput and mean rounds with standard errors."""
    return summarize(packet_outcomes(config), config.model, config.n_batches)


# packets per independent path in reinforcement runs; long enough for the
# state power to forget p_initial
REINFORCEMENT_PATH = 1000


@dataclass(frozen=True)
class ReinforcementPolicy:
    """ACK/NACK-driven multiplicative power updates for two-round RTD.

    Starting from ``p_initial``, after each packet the state power ``P``
    becomes ``(1 - d1) P`` on a first-round ACK; a first-round NACK raises it
    to ``(1 + d2) P`` before the retransmission, which then moves it to
    ``(1 - d3) P`` on ACK or ``(1 + d4) P`` on outage.
    """

    p_initial: float
    d1: float = 0.0
    d2: float = 0.0
    d3: float = 0.0
    d4: float = 0.0

    def __post_init__(self):
        if not self.p_initial > 0:
            raise DomainError("p_initial must be positive")
        if not (0 <= self.d1 < 1 and 0 <= self.d3 < 1):
            raise DomainError("d1 and d3 must lie in [0, 1)")
        if self.d2 < 0 or self.d4 < 0:
            raise DomainError("d2 and d4 must be nonnegative")

    @property
    def is_static(self) -> bool:
        return self.d1 == self.d2 == self.d3 == self.d4 == 0.0


@dataclass(frozen=True)
class ReinforcementMetrics(Metrics):
    """:class:`Metrics` plus the min, mean and max of the state power over all packets."""

    power_trajectory: dict = field(default_factory=dict)


def _check_reinforcement(spec):
    if not isinstance(spec, RtdSpec) or spec.max_retx != 1:
        raise UnsupportedConfigurationError("reinforcement is defined for RTD with one retransmission")


def _reinforce(gains, params, packets_per_path, threshold, rate, record=False):
    """Run the update rule for ``C`` parameter sets on shared gain paths.

    ``params`` has shape ``(C, 5)`` holding ``(p_initial, d1, d2, d3, d4)``.
    Returns per-path sums of shape ``(C, n_paths)`` and, with ``record``,
    per-packet arrays of shape ``(C, n_paths, packets_per_path)``.
    """
    c = params.shape[0]
    n_paths = gains.shape[0]
    p = np.repeat(params[:, :1], n_paths, axis=1)
    down1, up2, down3, up4 = (1.0 - params[:, 1:2], 1.0 + params[:, 2:3], 1.0 - params[:, 3:4], 1.0 + params[:, 4:5])
    path = np.arange(n_paths)[None, :]
    pos = np.zeros((c, n_paths), dtype=np.int64)
    sums = {k: np.zeros((c, n_paths)) for k in ("energy", "uses", "info", "fails", "rounds")}
    p_min, p_max, p_sum = p.copy(), p.copy(), np.zeros((c, n_paths))
    if record:
        rec = {k: np.empty((c, n_paths, packets_per_path)) for k in ("rounds", "decoded", "energy", "state")}
    for k in range(packets_per_path):
        g1 = gains[path, pos]
        g2 = gains[path, pos + 1]
        second = p * up2
        first_ok = g1 * p >= threshold
        decoded = first_ok | (g1 * p + g2 * second >= threshold)
        rounds = np.where(first_ok, 1, 2)
        energy = np.where(first_ok, p, p * (1.0 + up2))
        if record:
            rec["rounds"][..., k], rec["decoded"][..., k] = rounds, decoded
            rec["energy"][..., k], rec["state"][..., k] = energy, p
        sums["energy"] += energy
        sums["uses"] += rounds
        sums["info"] += np.where(decoded, rate, 0.0)
        sums["rounds"] += rounds
        sums["fails"] += ~decoded
        p_sum += p
        p = np.where(first_ok, p * down1, np.where(decoded, second * down3, second * up4))
        p_min, p_max = np.minimum(p_min, p), np.maximum(p_max, p)
        pos += rounds
    sums["p_min"], sums["p_max"], sums["p_mean"] = p_min, p_max, p_sum / packets_per_path
    return (sums, rec) if record else (sums, None)


def _params(policies):
    return np.array([[q.p_initial, q.d1, q.d2, q.d3, q.d4] for q in policies], dtype=float)


def _reinforcement_metrics(sums, idx, spec, packets_per_path, n_batches) -> ReinforcementMetrics:
    m = _metrics_from_paths(
        sums["energy"][idx], sums["uses"][idx], sums["info"][idx], sums["fails"][idx], sums["rounds"][idx],
        packets_per_path, Model.CONTINUOUS, n_batches,
    )
    trajectory = {
        "min": float(sums["p_min"][idx].min()),
        "mean": float(sums["p_mean"][idx].mean()),
        "max": float(sums["p_max"][idx].max()),
    }
    return ReinforcementMetrics(**vars(m), power_trajectory=trajectory)


def reinforcement_outcomes(
    policy: ReinforcementPolicy,
    spec: RtdSpec,
    fading: FadingSpec,
    n_packets: int,
    seed=0,
    packets_per_block: int = REINFORCEMENT_PATH,
) -> PacketOutcomes:
    """Per-packet results of the update rule; the state restarts at ``p_initial`` on each path.

    Uses the same channel draws as :func:`packet_outcomes` for a continuous
    model config with equal seed, ``packets_per_block`` and packet count.
    """
    _check_reinforcement(spec)
    n_paths = -(-n_packets // packets_per_block)
    gains = _draw(fading, n_paths, packets_per_block * 2, seed)
    _, rec = _reinforce(gains, _params([policy]), packets_per_block, spec.snr_threshold, spec.rate, record=True)
    rounds = rec["rounds"][0].astype(np.int64)
    decoded = rec["decoded"][0].astype(bool)
    decoder = _Decoder(spec)
    return _outcomes(decoder, rounds, decoded, rec["energy"][0], rec["state"][0])


def simulate_reinforcement(
    policy: ReinforcementPolicy,
    spec: RtdSpec,
    fading: FadingSpec,
    n_packets: int = 10**6,
    seed=0,
    packets_per_block: int = REINFORCEMENT_PATH,
    n_batches: int = 100,
) -> ReinforcementMetrics:
    """Continuous-model metrics of a :class:`ReinforcementPolicy`."""
    _check_reinforcement(spec)
    n_paths = -(-n_packets // packets_per_block)
    gains = _draw(fading, n_paths, packets_per_block * 2, seed)
    sums, _ = _reinforce(gains, _params([policy]), packets_per_block, spec.snr_threshold, spec.rate)
    return _reinforcement_metrics(sums, 0, spec, packets_per_block, n_batches)


@dataclass(frozen=True)
class TuningResult:
    policy: ReinforcementPolicy | None
    metrics: ReinforcementMetrics | None
    feasible: bool
    n_evaluated: int


DEFAULT_STEPS = (0.0, 0.05, 0.1, 0.2, 0.4)


def default_p_initial_grid(center: float, n: int = 8, span: float = 4.0) -> np.ndarray:
    """``n`` log-spaced powers starting at ``center / span`` and containing ``center``."""
    half = n // 2
    ratio = span ** (1.0 / half) if half else 1.0
    return center * ratio ** np.arange(-half, n - half)


def tune_reinforcement(
    spec: RtdSpec,
    fading: FadingSpec,
    epsilon: float,
    p_initial_grid,
    d_grid=DEFAULT_STEPS,
    n_packets: int = 2 * 10**5,
    seed=0,
    packets_per_block: int = REINFORCEMENT_PATH,
    n_batches: int = 100,
    d1_grid=None,
    d2_grid=None,
    d3_grid=None,
    d4_grid=None,
    chunk: int = 256,
) -> TuningResult:
    """Exhaustive grid search for the cheapest policy meeting the outage target.

    A grid point is feasible when its empirical outage is at most
    ``epsilon + 2 * stderr``.  All points share the same channel draws and
    give exactly what :func:`simulate_reinforcement` gives for them.
    Returns ``feasible=False`` with no policy when nothing qualifies.
    """
    _check_reinforcement(spec)
    grids = [np.asarray(g if g is not None else d_grid, dtype=float) for g in (d1_grid, d2_grid, d3_grid, d4_grid)]
    p_grid = np.asarray(p_initial_grid, dtype=float)
    if p_grid.size == 0 or any(g.size == 0 for g in grids):
        raise ConfigError("tuning grids must be nonempty")
    mesh = np.stack(np.meshgrid(p_grid, *grids, indexing="ij"), axis=-1).reshape(-1, 5)
    policies = [ReinforcementPolicy(*map(float, row)) for row in mesh]
    n_paths = -(-n_packets // packets_per_block)
    gains = _draw(fading, n_paths, packets_per_block * 2, seed)
    best, best_metrics = None, None
    for start in range(0, len(policies), chunk):
        block = policies[start : start + chunk]
        sums, _ = _reinforce(gains, _params(block), packets_per_block, spec.snr_threshold, spec.rate)
        for j, pol in enumerate(block):
            m = _reinforcement_metrics(sums, j, spec, packets_per_block, n_batches)
            if m.outage > epsilon + 2.0 * m.stderr["outage"]:
                continue
            if best_metrics is None or m.avg_power < best_metrics.avg_power:
                best, best_metrics = pol, m
    return TuningResult(best, best_metrics, best is not None, len(policies))


def matched_uniform_power(config: SimConfig, epsilon: float, rtol: float = 1e-4) -> float:
    """Uniform power whose simulated outage reaches ``epsilon`` on ``config``'s channel draws.

    Bisection in log power; the empirical outage is a step function, so the
    result is the smallest power (to ``rtol``) with outage at most ``epsilon``.
    """
    k = config.spec.n_rounds

    def outage(p):
        return simulate(replace(config, policy=PowerPolicy.uniform(p, k))).outage

    lo, hi = 1e-6, 1.0
    while outage(hi) > epsilon:
        lo, hi = hi, hi * 4.0
        if hi > 1e15:
            raise InfeasibleError("outage target not reachable by a uniform policy")
    while hi / lo - 1.0 > rtol:
        mid = np.sqrt(lo * hi)
        if outage(mid) > epsilon:
            lo = mid
        else:
            hi = mid
    return float(hi)

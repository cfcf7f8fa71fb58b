"""Tabulated data behind the performance figures (ids 3 to 14).

Each builder returns a :class:`Table`; powers are reported in dB.  Ids 12-14
use correlated fading and include simulator columns, so they take a seed.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from ._longterm import Model
from .errors import ConfigError
from .fading import FadingSpec
from .optimizer import Objective, OptimizerConfig, min_outage_at_power, optimize, relative_throughput_loss
from .policy import PowerPolicy, db, from_db
from .simulator import (
    REINFORCEMENT_PATH,
    SimConfig,
    default_p_initial_grid,
    matched_uniform_power,
    simulate,
    tune_reinforcement,
)

__all__ = ["Table", "FigureSettings", "FIGURES", "build_figure"]

DEFAULT_EPSILONS = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
DEFAULT_BETAS = (0.0, 0.5, 0.9, 1.0)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, **values):
        missing = set(self.columns) - set(values)
        if missing:
            raise KeyError(f"missing columns {sorted(missing)}")
        self.rows.append([values[c] for c in self.columns])

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]

    def column(self, name) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.records(), indent=2, default=_plain) + "\n"


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


@dataclass(frozen=True)
class FigureSettings:
    epsilons: tuple = DEFAULT_EPSILONS
    betas: tuple = DEFAULT_BETAS
    rate: float = 1.0
    lam: float = 1.0
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(restarts=3))
    n_packets: int = 2 * 10**5
    reference_power_db: float = 10.0


def _block(s):
    return FadingSpec.block(s.lam)


def _fading(beta, lam):
    return FadingSpec.block(lam) if beta == 1.0 else FadingSpec.correlated(beta, lam)


def _solve(s, protocol, model, max_retx, eps, fading=None, rate=None):
    ob = getattr(Objective, protocol)(rate or s.rate, max_retx, eps, model, fading or _block(s))
    return ob, optimize(ob, s.optimizer)


def _fig3(s):
    """Average power and per-round powers of optimal RTD (M=1, continuous) for R in {1, 0.5}."""
    t = Table(["epsilon", "R", "short_term_db", "long_term_db", "P1_db", "P2_db"])
    for rate in (1.0, 0.5):
        for eps in s.epsilons:
            ob, r = _solve(s, "rtd", Model.CONTINUOUS, 1, eps, rate=rate)
            p = r.best_policy.powers
            t.add(epsilon=eps, R=rate, short_term_db=db(r.baseline_power), long_term_db=db(r.objective_value),
                  P1_db=db(p[0]), P2_db=db(p[1]))
    return t


def _fig4(s):
    """Per-round powers, short-term (uniform) vs long-term, RTD M=1 continuous."""
    t = Table(["epsilon", "short_term_P_db", "long_term_P1_db", "long_term_P2_db"])
    for eps in s.epsilons:
        _, r = _solve(s, "rtd", Model.CONTINUOUS, 1, eps)
        p = r.best_policy.powers
        t.add(epsilon=eps, short_term_P_db=db(r.baseline_power), long_term_P1_db=db(p[0]), long_term_P2_db=db(p[1]))
    return t


def _fig5(s):
    """Power efficiency of RTD (continuous) for M = 1, 2, 3."""
    cols = ["epsilon"] + [f"delta_phi_M{m}_db" for m in (1, 2, 3)]
    t = Table(cols)
    for eps in s.epsilons:
        row = {"epsilon": eps}
        for m in (1, 2, 3):
            row[f"delta_phi_M{m}_db"] = _solve(s, "rtd", Model.CONTINUOUS, m, eps)[1].gain_db
        t.add(**row)
    return t


def _schemes():
    return [(p, m) for p in ("rtd", "inr") for m in (Model.CONTINUOUS, Model.BURSTING)]


def _fig6(s):
    """Average power of RTD/INR, continuous/bursting, short- and long-term (M=1)."""
    cols = ["epsilon", "rtd_short_term_db", "inr_short_term_db"]
    cols += [f"{p}_{m.value}_long_term_db" for p, m in _schemes()]
    t = Table(cols)
    for eps in s.epsilons:
        row = {"epsilon": eps}
        for p, m in _schemes():
            _, r = _solve(s, p, m, 1, eps)
            row[f"{p}_{m.value}_long_term_db"] = db(r.objective_value)
            row[f"{p}_short_term_db"] = db(r.baseline_power)
        t.add(**row)
    return t


def _fig7(s):
    """Optimal first and second round powers for each scheme (M=1)."""
    cols = ["epsilon"] + [f"{p}_{m.value}_P{k}_db" for p, m in _schemes() for k in (1, 2)]
    t = Table(cols)
    for eps in s.epsilons:
        row = {"epsilon": eps}
        for p, m in _schemes():
            powers = _solve(s, p, m, 1, eps)[1].best_policy.powers
            row[f"{p}_{m.value}_P1_db"], row[f"{p}_{m.value}_P2_db"] = db(powers[0]), db(powers[1])
        t.add(**row)
    return t


def _fig8(s):
    """Short-term (uniform) power for M = 1, 2 in both protocols."""
    cols = ["epsilon"] + [f"{p}_M{m}_db" for p in ("rtd", "inr") for m in (1, 2)]
    t = Table(cols)
    for eps in s.epsilons:
        row = {"epsilon": eps}
        for p in ("rtd", "inr"):
            for m in (1, 2):
                ob = getattr(Objective, p)(s.rate, m, eps, Model.CONTINUOUS, _block(s))
                row[f"{p}_M{m}_db"] = db(ob.baseline_power())
        t.add(**row)
    return t


RATE_SWEEP = tuple(np.round(np.geomspace(0.1, 4.0, 12), 6))


def _fig9(s):
    """Outage and throughput of uniform power P in {1, 2} as the rate varies (M=1)."""
    t = Table(["P", "R", "protocol", "model", "outage", "throughput"])
    for power in (1.0, 2.0):
        for rate in RATE_SWEEP:
            for p, m in _schemes():
                ob = getattr(Objective, p)(rate, 1, 0.5, m, _block(s))
                met = ob.metrics(PowerPolicy.uniform(power, 2))
                t.add(P=power, R=rate, protocol=p, model=m.value, outage=met.outage, throughput=met.throughput)
    return t


def _fig10(s):
    """Outage and throughput at average power P in {1, 2}: uniform vs outage-minimising allocation."""
    t = Table(["P", "R", "protocol", "model", "allocation", "outage", "throughput"])
    for power in (1.0, 2.0):
        for rate in RATE_SWEEP:
            for p, m in _schemes():
                ob = getattr(Objective, p)(rate, 1, 0.5, m, _block(s))
                uniform = ob.metrics(PowerPolicy.uniform(power, 2))
                _, policy = min_outage_at_power(ob, power)
                best = ob.metrics(policy)
                for name, met in (("short_term", uniform), ("long_term", best)):
                    t.add(P=power, R=rate, protocol=p, model=m.value, allocation=name,
                          outage=met.outage, throughput=met.throughput)
    return t


def _fig11(s):
    """Relative throughput loss vs power efficiency, RTD M=1, both models."""
    t = Table(["epsilon", "model", "delta_phi_db", "delta_eta_percent"])
    for m in (Model.CONTINUOUS, Model.BURSTING):
        for eps in s.epsilons:
            ob, r = _solve(s, "rtd", m, 1, eps)
            t.add(epsilon=eps, model=m.value, delta_phi_db=r.gain_db,
                  delta_eta_percent=relative_throughput_loss(ob, result=r))
    return t


def _sim_point(s, spec, policy, fading, index):
    cfg = SimConfig(spec, policy, fading, Model.CONTINUOUS, s.n_packets, seed=[s.seed, index])
    return simulate(cfg)


def _fig12(s):
    """Optimal average power vs epsilon per beta (RTD M=1 continuous), with simulated check."""
    t = Table(["beta", "epsilon", "avg_power_db", "P1_db", "P2_db", "sim_outage", "sim_avg_power_db"])
    i = 0
    for beta in s.betas:
        for eps in s.epsilons:
            ob, r = _solve(s, "rtd", Model.CONTINUOUS, 1, eps, _fading(beta, s.lam))
            sim = _sim_point(s, ob.spec, r.best_policy, ob.fading, i)
            i += 1
            p = r.best_policy.powers
            t.add(beta=beta, epsilon=eps, avg_power_db=db(r.objective_value), P1_db=db(p[0]), P2_db=db(p[1]),
                  sim_outage=sim.outage, sim_avg_power_db=db(sim.avg_power))
    return t


def _fig13(s):
    """Outage at a fixed average power vs beta: outage-minimising vs uniform allocation."""
    t = Table(["beta", "avg_power_db", "optimal_outage", "uniform_outage", "gap_db",
               "sim_optimal_outage", "sim_uniform_outage"])
    power = from_db(s.reference_power_db)
    for i, beta in enumerate(s.betas):
        ob = Objective.rtd(s.rate, 1, 0.5, Model.CONTINUOUS, _fading(beta, s.lam))
        p_opt, policy = min_outage_at_power(ob, power)
        uniform = PowerPolicy.uniform(power, 2)
        p_uni = float(ob.outage(uniform.powers))
        sim_opt = _sim_point(s, ob.spec, policy, ob.fading, 2 * i)
        sim_uni = _sim_point(s, ob.spec, uniform, ob.fading, 2 * i + 1)
        t.add(beta=beta, avg_power_db=s.reference_power_db, optimal_outage=p_opt, uniform_outage=p_uni,
              gap_db=db(p_uni) - db(p_opt), sim_optimal_outage=sim_opt.outage, sim_uniform_outage=sim_uni.outage)
    return t


def _fig14(s):
    """Simulated outage-limited average power at beta = 0.9: uniform, optimal static, reinforcement."""
    beta = 0.9 if s.betas == DEFAULT_BETAS else s.betas[0]
    fading = _fading(beta, s.lam)
    t = Table(["beta", "epsilon", "uniform_db", "long_term_db", "reinforcement_db", "reinforcement_outage",
               "d1", "d2", "d3", "d4", "p_initial_db"])
    for i, eps in enumerate(s.epsilons):
        ob, r = _solve(s, "rtd", Model.CONTINUOUS, 1, eps, fading)
        base = SimConfig(ob.spec, PowerPolicy.uniform(1.0, 2), fading, Model.CONTINUOUS, s.n_packets,
                         packets_per_block=REINFORCEMENT_PATH, seed=[s.seed, i])
        p_uni = matched_uniform_power(base, eps)
        long_term = simulate(replace(base, policy=r.best_policy))
        tuned = tune_reinforcement(ob.spec, fading, eps, default_p_initial_grid(p_uni), n_packets=s.n_packets,
                                   seed=[s.seed, i])
        row = dict(beta=beta, epsilon=eps, uniform_db=db(p_uni), long_term_db=db(long_term.avg_power))
        if tuned.feasible:
            q = tuned.policy
            row.update(reinforcement_db=db(tuned.metrics.avg_power), reinforcement_outage=tuned.metrics.outage,
                       d1=q.d1, d2=q.d2, d3=q.d3, d4=q.d4, p_initial_db=db(q.p_initial))
        else:
            row.update(reinforcement_db="", reinforcement_outage="", d1="", d2="", d3="", d4="", p_initial_db="")
        t.add(**row)
    return t


FIGURES = {3: _fig3, 4: _fig4, 5: _fig5, 6: _fig6, 7: _fig7, 8: _fig8, 9: _fig9, 10: _fig10,
           11: _fig11, 12: _fig12, 13: _fig13, 14: _fig14}


def build_figure(figure_id: int, settings: FigureSettings | None = None) -> Table:
    if figure_id not in FIGURES:
        raise ConfigError(f"unknown figure id {figure_id}; choose from {sorted(FIGURES)}")
    return FIGURES[figure_id](settings or FigureSettings())

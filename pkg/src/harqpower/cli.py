"""Command-line experiment runner: ``harqpower {evaluate,optimize,figure}``.

Powers cross this boundary in dB only.  Options may also come from a flat
``key = value`` file given with ``--config``; command-line flags win.

Exit codes: 0 success, 2 configuration error, 3 infeasible problem,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._longterm import Model, Protocol
from .errors import ConfigError, DomainError, InfeasibleError, NumericError, UnsupportedConfigurationError
from .fading import FadingSpec
from .figures import DEFAULT_BETAS, DEFAULT_EPSILONS, FigureSettings, Table, build_figure
from .optimizer import Objective, OptimizerConfig, geometric_allocation, optimize
from .policy import PowerPolicy, db

EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 2, 3, 4

LIST_KEYS = {"epsilon", "R", "beta", "powers_db"}
KEYS = {
    "protocol", "model", "M", "R", "epsilon", "beta", "lambda", "seed", "method", "out", "format",
    "powers_db", "restarts", "figure", "policy_out",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _float_list(text):
    return [float(x) for x in text.replace(",", " ").split()]


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[key] = value
    return values


@dataclass
class ExperimentConfig:
    command: str
    protocol: Protocol = Protocol.RTD
    model: Model = Model.CONTINUOUS
    M: int = 1
    R: tuple = (1.0,)
    epsilon: tuple = (1e-3,)
    beta: tuple = (1.0,)
    lam: float = 1.0
    seed: int = 0
    method: str = "alg1"
    out: str | None = None
    format: str = "csv"
    powers_db: tuple = ()
    restarts: int = 10
    figure: int | None = None
    policy_out: str | None = None
    explicit: frozenset = frozenset()

    def __post_init__(self):
        for name in ("R", "epsilon", "beta"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} list must be nonempty")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.method not in ("alg1", "geometric", "short-term"):
            raise ConfigError("method must be alg1, geometric or short-term")
        if self.M < 0:
            raise ConfigError("M must be >= 0")
        if self.out is not None:
            parent = Path(self.out).resolve().parent
            if not parent.is_dir():
                raise ConfigError(f"output directory {parent} does not exist")


def _build_parser():
    p = _Parser(prog="harqpower", description="Outage-limited HARQ power allocation experiments.")
    p.add_argument("command", choices=["evaluate", "optimize", "figure"])
    p.add_argument("figure_id", nargs="?", type=int, help="figure id (3-14) for the figure command")
    p.add_argument("--config", help="flat key=value file with the same keys as the flags")
    p.add_argument("--protocol", choices=["rtd", "inr"])
    p.add_argument("--model", choices=["continuous", "bursting"])
    p.add_argument("--M", type=int, help="maximum number of retransmissions")
    p.add_argument("--R", type=float, nargs="+", help="initial rate(s) in nats per channel use")
    p.add_argument("--epsilon", type=float, nargs="+", help="outage target(s)")
    p.add_argument("--beta", type=float, nargs="+", help="fading correlation(s); 1 is block fading")
    p.add_argument("--lambda", dest="lam", type=float, help="Rayleigh gain rate (mean gain 1/lambda)")
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=["alg1", "geometric", "short-term"])
    p.add_argument("--powers-db", dest="powers_db", type=float, nargs="+", help="per-round powers in dB (evaluate)")
    p.add_argument("--restarts", type=int, help="random-search restarts")
    p.add_argument("--out", help="output table path (default stdout)")
    p.add_argument("--policy-out", dest="policy_out", help="policy JSON path for optimize")
    p.add_argument("--format", choices=["csv", "json"])
    return p


def parse_config(argv) -> ExperimentConfig:
    args = _build_parser().parse_args(argv)
    merged = {}
    if args.config:
        for key, value in read_config(args.config).items():
            merged[key] = _float_list(value) if key in LIST_KEYS else value
    cli = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command", "figure_id")}
    if "lam" in cli:
        cli["lambda"] = cli.pop("lam")
    merged.update(cli)
    if args.figure_id is not None:
        merged["figure"] = args.figure_id
    try:
        return ExperimentConfig(
            command=args.command,
            protocol=Protocol(merged.get("protocol", "rtd")),
            model=Model(merged.get("model", "continuous")),
            M=int(merged.get("M", 1)),
            R=tuple(float(x) for x in merged.get("R", [1.0])),
            epsilon=tuple(float(x) for x in merged.get("epsilon", [1e-3])),
            beta=tuple(float(x) for x in merged.get("beta", [1.0])),
            lam=float(merged.get("lambda", 1.0)),
            seed=int(merged.get("seed", 0)),
            method=str(merged.get("method", "alg1")),
            out=merged.get("out"),
            format=str(merged.get("format", "csv")),
            powers_db=tuple(float(x) for x in merged.get("powers_db", [])),
            restarts=int(merged.get("restarts", 10)),
            figure=None if merged.get("figure") is None else int(merged["figure"]),
            policy_out=merged.get("policy_out"),
            explicit=frozenset(merged),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fading(beta, lam):
    return FadingSpec.block(lam) if beta == 1.0 else FadingSpec.correlated(beta, lam)


def _objective(cfg, rate, eps, beta, max_retx=None):
    m = cfg.M if max_retx is None else max_retx
    maker = Objective.rtd if cfg.protocol is Protocol.RTD else Objective.inr
    return maker(rate, m, eps, cfg.model, _fading(beta, cfg.lam))


def _sweep(cfg):
    return [(r, e, b) for r in cfg.R for e in cfg.epsilon for b in cfg.beta]


def _power_cols(k):
    return [f"P{i}" for i in range(1, k + 1)]


def cmd_evaluate(cfg: ExperimentConfig) -> Table:
    """One row per (R, epsilon, beta) with the metrics of the given policy."""
    if not cfg.powers_db:
        raise ConfigError("evaluate needs --powers-db")
    policy = PowerPolicy.from_db(cfg.powers_db)
    k = policy.n_rounds
    cols = ["protocol", "model", "M", "R", "beta", "epsilon"] + _power_cols(k)
    cols += ["avg_power_db", "outage", "throughput", "expected_rounds"]
    t = Table(cols)
    for rate, eps, beta in _sweep(cfg):
        ob = _objective(cfg, rate, eps, beta, max_retx=k - 1)
        m = ob.metrics(policy)
        row = dict(protocol=cfg.protocol.value, model=cfg.model.value, M=k - 1, R=rate, beta=beta, epsilon=eps,
                   avg_power_db=m.avg_power_db, outage=m.outage, throughput=m.throughput,
                   expected_rounds=m.expected_rounds)
        row.update(zip(_power_cols(k), cfg.powers_db))
        t.add(**row)
    return t


def cmd_optimize(cfg: ExperimentConfig, log=None):
    """Optimise each sweep point; returns the table and the policy records."""
    log = log or sys.stderr
    k = cfg.M + 1
    cols = ["protocol", "model", "method", "M", "R", "beta", "epsilon"] + _power_cols(k)
    cols += ["avg_power_db", "baseline_db", "delta_phi_db", "outage", "throughput", "expected_rounds"]
    t = Table(cols)
    policies = []
    for i, (rate, eps, beta) in enumerate(_sweep(cfg)):
        ob = _objective(cfg, rate, eps, beta)
        baseline = ob.baseline_power()
        if cfg.method == "alg1":
            seed = int(np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0])
            policy = optimize(ob, OptimizerConfig(seed=seed, restarts=cfg.restarts)).best_policy
        elif cfg.method == "geometric":
            if not ob.fading.is_block:
                raise UnsupportedConfigurationError("the geometric allocation assumes block fading")
            policy = geometric_allocation(ob.spec, eps, ob.fading)
        else:
            policy = PowerPolicy.uniform(baseline, k)
        m = ob.metrics(policy)
        if cfg.method == "alg1" and m.outage > eps * (1 + 1e-6) + 1e-9:
            raise InfeasibleError(f"optimised policy misses the outage target at epsilon={eps}")
        gain = db(baseline) - m.avg_power_db
        powers_db = db(policy.powers).tolist() if np.all(policy.powers > 0) else [
            float(db(p)) if p > 0 else float("-inf") for p in policy.powers
        ]
        row = dict(protocol=cfg.protocol.value, model=cfg.model.value, method=cfg.method, M=cfg.M, R=rate,
                   beta=beta, epsilon=eps, avg_power_db=m.avg_power_db, baseline_db=db(baseline),
                   delta_phi_db=gain, outage=m.outage, throughput=m.throughput, expected_rounds=m.expected_rounds)
        row.update(zip(_power_cols(k), powers_db))
        t.add(**row)
        policies.append({"R": rate, "epsilon": eps, "beta": beta, "powers_db": powers_db, "metrics": m.as_dict()})
        print(f"R={rate:g} epsilon={eps:g} beta={beta:g}: delta_phi = {gain:.3f} dB", file=log)
    return t, policies


def cmd_figure(cfg: ExperimentConfig) -> Table:
    if cfg.figure is None:
        raise ConfigError("figure needs an id between 3 and 14")
    eps = cfg.epsilon if "epsilon" in cfg.explicit else DEFAULT_EPSILONS
    betas = cfg.beta if "beta" in cfg.explicit else DEFAULT_BETAS
    settings = FigureSettings(epsilons=tuple(eps), betas=tuple(betas), rate=cfg.R[0], lam=cfg.lam, seed=cfg.seed,
                              optimizer=OptimizerConfig(restarts=min(cfg.restarts, 3), seed=cfg.seed))
    return build_figure(cfg.figure, settings)


def _emit(table: Table, cfg: ExperimentConfig):
    text = table.to_csv() if cfg.format == "csv" else table.to_json()
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def run(cfg: ExperimentConfig) -> int:
    if cfg.command == "evaluate":
        _emit(cmd_evaluate(cfg), cfg)
    elif cfg.command == "optimize":
        table, policies = cmd_optimize(cfg)
        _emit(table, cfg)
        target = cfg.policy_out or (str(Path(cfg.out).with_suffix(".policy.json")) if cfg.out else None)
        if target:
            Path(target).write_text(json.dumps(policies, indent=2) + "\n", encoding="utf-8")
    else:
        _emit(cmd_figure(cfg), cfg)
    return 0


def main(argv=None) -> int:
    try:
        return run(parse_config(argv))
    except (_UsageError, ConfigError, DomainError, UnsupportedConfigurationError) as exc:
        print(f"harqpower: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"harqpower: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericError, FloatingPointError) as exc:
        print(f"harqpower: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

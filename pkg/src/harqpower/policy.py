"""Shared value types: power policies, decode profiles and metric bundles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePolicyError, DomainError

__all__ = ["PowerPolicy", "DecodeProfile", "Metrics", "db", "from_db"]


def db(x):
    """Linear power to dB."""
    return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


@dataclass(frozen=True, eq=False)
class PowerPolicy:
    """Per-round transmit powers ``P_1 .. P_{M+1}`` (linear, noise-normalised)."""

    powers: np.ndarray

    def __post_init__(self):
        p = np.array(self.powers, dtype=float).reshape(-1)
        if p.size == 0:
            raise DomainError("a policy needs at least one round")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise DomainError("powers must be finite and nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "powers", p)

    @classmethod
    def uniform(cls, power: float, n_rounds: int) -> "PowerPolicy":
        return cls(np.full(n_rounds, float(power)))

    @classmethod
    def from_db(cls, powers_db) -> "PowerPolicy":
        return cls(from_db(powers_db))

    @property
    def n_rounds(self) -> int:
        return self.powers.size

    @property
    def max_retx(self) -> int:
        return self.powers.size - 1

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.powers)

    @property
    def total(self) -> float:
        return float(self.powers.sum())

    def require_nondegenerate(self):
        if not np.any(self.powers > 0):
            raise DegeneratePolicyError("all-zero power policy can never decode")

    def swapped(self, k: int) -> "PowerPolicy":
        """Copy with rounds ``k`` and ``k+1`` (zero-based) exchanged."""
        p = self.powers.copy()
        p[k], p[k + 1] = p[k + 1], p[k]
        return PowerPolicy(p)

    def __eq__(self, other):
        return isinstance(other, PowerPolicy) and np.array_equal(self.powers, other.powers)

    def __repr__(self):
        return f"PowerPolicy({np.array2string(self.powers, precision=6)})"


@dataclass(frozen=True)
class DecodeProfile:
    """``p_success[m-1] = Pr{decoded at round m}`` and the final outage."""

    p_success: np.ndarray
    p_outage: float

    @property
    def total(self) -> float:
        return float(np.sum(self.p_success) + self.p_outage)

    @property
    def expected_rounds(self) -> float:
        m = np.arange(1, self.p_success.size + 1)
        return float(np.dot(m, self.p_success) + self.p_success.size * self.p_outage)


@dataclass(frozen=True)
class Metrics:
    """Long-term performance of one policy under one communication model.

    ``avg_power`` is the long-term average power (``P_bar`` in the continuous
    model, ``phi`` in the bursting model).  ``expected_energy`` and
    ``expected_channel_uses`` are per packet, in units of the first-round
    codeword length.  ``stderr`` is filled by Monte Carlo estimators only.
    """

    outage: float
    avg_power: float
    throughput: float
    expected_rounds: float
    expected_energy: float = float("nan")
    expected_channel_uses: float = float("nan")
    stderr: dict = field(default_factory=dict)

    @property
    def avg_power_db(self) -> float:
        return float(db(self.avg_power))

    def as_dict(self) -> dict:
        out = {
            "outage": self.outage,
            "avg_power": self.avg_power,
            "avg_power_db": self.avg_power_db,
            "throughput": self.throughput,
            "expected_rounds": self.expected_rounds,
            "expected_energy": self.expected_energy,
            "expected_channel_uses": self.expected_channel_uses,
        }
        out.update({f"{k}_stderr": v for k, v in self.stderr.items()})
        return out

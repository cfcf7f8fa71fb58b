"""Channel gain distributions and temporal fading processes.

The channel gain ``g = |h|^2`` of a Rayleigh channel is exponentially
distributed with rate ``lam`` (mean ``1/lam``).  Three temporal models are
supported:

* ``BLOCK`` -- one gain per packet, constant over all of its rounds;
* ``FAST`` -- an independent gain per (re)transmission round;
* ``CORRELATED`` -- a first-order Gauss-Markov process on ``h`` that
  advances once per codeword transmission,
  ``h[k+1] = beta * h[k] + sqrt(1 - beta^2) * w[k]``.

Block fading is the ``beta = 1`` member of the correlated family and fast
fading the ``beta = 0`` member; the sampler treats them exactly that way so
that equal seeds give equal paths.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

from .errors import DomainError

__all__ = [
    "Family",
    "Temporal",
    "FadingSpec",
    "gain_cdf",
    "gain_sf",
    "gain_pdf",
    "gain_hazard",
    "gain_logsf",
    "gain_inv_cdf",
    "mean_gain",
    "sample_gains",
    "sample_gain_path",
    "next_gain_cdf",
]


class Family(enum.Enum):
    RAYLEIGH = "rayleigh"


class Temporal(enum.Enum):
    BLOCK = "block"
    FAST = "fast"
    CORRELATED = "correlated"


@dataclass(frozen=True)
class FadingSpec:
    """Gain distribution plus temporal model.

    ``beta`` is only read for ``Temporal.CORRELATED``; use :attr:`correlation`
    to get the effective lag-one correlation of ``h`` for any model.
    """

    lam: float = 1.0
    temporal: Temporal = Temporal.BLOCK
    beta: float = 1.0
    family: Family = Family.RAYLEIGH

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError(f"beta must lie in [0, 1], got {self.beta!r}")
        if not isinstance(self.temporal, Temporal):
            object.__setattr__(self, "temporal", Temporal(self.temporal))

    @classmethod
    def block(cls, lam: float = 1.0) -> "FadingSpec":
        return cls(lam=lam, temporal=Temporal.BLOCK, beta=1.0)

    @classmethod
    def fast(cls, lam: float = 1.0) -> "FadingSpec":
        return cls(lam=lam, temporal=Temporal.FAST, beta=0.0)

    @classmethod
    def correlated(cls, beta: float, lam: float = 1.0) -> "FadingSpec":
        return cls(lam=lam, temporal=Temporal.CORRELATED, beta=beta)

    @property
    def correlation(self) -> float:
        if self.temporal is Temporal.BLOCK:
            return 1.0
        if self.temporal is Temporal.FAST:
            return 0.0
        return float(self.beta)

    @property
    def is_block(self) -> bool:
        """True when every round of a packet sees the same gain."""
        return self.correlation == 1.0

    def with_lam(self, lam: float) -> "FadingSpec":
        return FadingSpec(lam=lam, temporal=self.temporal, beta=self.beta, family=self.family)


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr


def _unwrap(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def gain_cdf(spec: FadingSpec, g):
    """``F_G(g) = 1 - exp(-lam * g)``.  ``g = +inf`` maps to 1."""
    g = _as_array(g)
    if np.any(g < 0):
        raise DomainError("gain must be nonnegative")
    return _unwrap(-np.expm1(-spec.lam * g))


def gain_sf(spec: FadingSpec, g):
    """Survival function ``1 - F_G(g)``, accurate in the far tail."""
    g = _as_array(g)
    if np.any(g < 0):
        raise DomainError("gain must be nonnegative")
    return _unwrap(np.exp(-spec.lam * g))


def gain_pdf(spec: FadingSpec, g):
    g = _as_array(g)
    if np.any(g < 0):
        raise DomainError("gain must be nonnegative")
    return _unwrap(spec.lam * np.exp(-spec.lam * g))


def gain_logsf(spec: FadingSpec, g):
    """``log(1 - F(g))`` without underflow."""
    g = _as_array(g)
    if np.any(g < 0):
        raise DomainError("gain must be nonnegative")
    return _unwrap(-spec.lam * g)


def gain_hazard(spec: FadingSpec, g):
    """``f(g) / (1 - F(g))``; constant ``lam`` for Rayleigh, finite where the pdf underflows."""
    g = _as_array(g)
    if np.any(g < 0):
        raise DomainError("gain must be nonnegative")
    return _unwrap(np.full_like(g, spec.lam))


def gain_inv_cdf(spec: FadingSpec, p):
    """Gain threshold below which the channel falls with probability ``p``."""
    p = _as_array(p)
    if np.any(p < 0) or np.any(p >= 1):
        raise DomainError("inverse cdf needs 0 <= p < 1 (p = 1 means channel inversion)")
    return _unwrap(-np.log1p(-p) / spec.lam)


def mean_gain(spec: FadingSpec) -> float:
    return 1.0 / spec.lam


def sample_gains(spec: FadingSpec, n_paths: int, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n_paths`` independent gain paths of length ``n_steps``.

    Each path starts from the stationary law ``h[0] ~ CN(0, 1/lam)`` and the
    innovations are scaled so every ``g[k]`` keeps that marginal.  Two standard
    normals are consumed per complex draw, in a fixed order, so the output
    depends only on the generator state and the shape.
    """
    if n_paths < 1 or n_steps < 1:
        raise DomainError("n_paths and n_steps must be >= 1")
    beta = spec.correlation
    scale = np.sqrt(0.5 / spec.lam)
    z = rng.standard_normal((n_paths, n_steps, 2))
    w = (z[..., 0] + 1j * z[..., 1]) * scale
    w[:, 1:] *= np.sqrt(1.0 - beta * beta)
    h = signal.lfilter([1.0], [1.0, -beta], w, axis=1)
    return h.real**2 + h.imag**2


def sample_gain_path(spec: FadingSpec, n_steps: int, seed=None) -> np.ndarray:
    """One gain path of length ``n_steps``; deterministic for a fixed seed."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    return sample_gains(spec, 1, n_steps, rng)[0]


def next_gain_cdf(spec: FadingSpec, y, g_prev):
    """``Pr{g[k+1] <= y | g[k] = g_prev}`` for the Gauss-Markov process.

    Given ``h[k]``, ``h[k+1]`` is complex Gaussian with mean ``beta*h[k]`` and
    variance ``(1 - beta^2)/lam``, so the scaled gain is noncentral chi-square
    with two degrees of freedom.  Used by the quadrature-based two-round
    probabilities; arrays broadcast.
    """
    y = np.maximum(_as_array(y), 0.0)
    g_prev = _as_array(g_prev)
    beta = spec.correlation
    if beta == 1.0:
        return _unwrap((g_prev <= y).astype(float))
    if beta == 0.0:
        return _unwrap(-np.expm1(-spec.lam * y))
    var = (1.0 - beta * beta) / spec.lam
    return _unwrap(stats.ncx2.cdf(2.0 * y / var, 2, 2.0 * beta * beta * g_prev / var))

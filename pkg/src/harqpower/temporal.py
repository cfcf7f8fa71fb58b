"""Decode probabilities when the gain changes between rounds.

Two tools, both independent of the protocol details:

* :func:`two_round_outage` integrates the two-round outage probability
  against the Gauss-Markov transition law (exact for fast, correlated and
  block fading with ``M = 1``);
* :func:`mc_event_probability` estimates the probability of an arbitrary
  event on multi-round gain paths by seeded Monte Carlo.
"""
from __future__ import annotations

import numpy as np

from .fading import FadingSpec, next_gain_cdf, sample_gains

_GL_X, _GL_W = np.polynomial.legendre.leggauss(96)

MC_CHUNK = 1 << 20


def two_round_outage(fading: FadingSpec, t1, second_threshold) -> np.ndarray:
    """``Pr{g1 < t1 and g2 < y(g1)}`` for consecutive gains of ``fading``.

    ``t1`` is the round-one decoding threshold (array, ``inf`` allowed) and
    ``second_threshold(g1)`` maps first-round gains (shape ``t1.shape + (n,)``)
    to the round-two threshold on ``g2``.  The integral runs over
    ``u = F_G(g1)`` with Gauss-Legendre nodes, which keeps the integrand
    bounded for any ``t1``.
    """
    t1 = np.asarray(t1, dtype=float)
    u_max = -np.expm1(-fading.lam * t1)
    u = u_max[..., None] * (_GL_X + 1.0) * 0.5
    g1 = -np.log1p(-u) / fading.lam
    y = second_threshold(g1)
    inner = next_gain_cdf(fading, y, g1)
    return 0.5 * u_max * np.sum(_GL_W * inner, axis=-1)


def mc_event_probability(fading: FadingSpec, n_rounds: int, event, budget: int, seed, chunk: int = MC_CHUNK):
    """Monte Carlo estimate of ``Pr{event(g)}`` over ``budget`` gain paths.

    ``event`` maps an ``(n, n_rounds)`` gain array to a boolean vector.
    Returns ``(p_hat, standard_error)``; deterministic for a fixed seed and
    chunk size.
    """
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < budget:
        n = min(chunk, budget - done)
        g = sample_gains(fading, n, n_rounds, rng)
        hits += int(np.count_nonzero(event(g)))
        done += n
    p = hits / budget
    return p, float(np.sqrt(max(p * (1.0 - p), 0.0) / budget))

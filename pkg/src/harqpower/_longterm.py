"""Long-term averages from per-round termination probabilities.

Every protocol and fading model reduces to the same bookkeeping once the
probabilities ``p[m] = Pr{decoded at round m}`` and ``p_out`` are known:

* continuous model -- the channel is time-shared by many packets of the same
  fate, so power and rate are averaged per packet as ``E{xi/tau}`` and
  ``E{Q/tau}``;
* bursting model -- one packet per fading block, ratio of expectations
  ``E{xi}/E{tau}`` and ``E{Q}/E{tau}``.
"""
from __future__ import annotations

import enum

import numpy as np


class Model(enum.Enum):
    CONTINUOUS = "continuous"
    BURSTING = "bursting"


class Protocol(enum.Enum):
    RTD = "rtd"
    INR = "inr"


def termination_weights(p_success, p_outage):
    """Probability that a packet stops after round m (outage folds into the last)."""
    w = np.array(p_success, dtype=float, copy=True)
    w[..., -1] += p_outage
    return w


def long_term(p_success, p_outage, energy, uses, info, model: Model):
    """Return ``(avg_power, throughput, E{energy}, E{uses}, E{rounds})``.

    ``energy[..., m]`` is the cumulative energy after round m+1, ``uses[m]`` the
    cumulative channel uses, ``info`` the nats delivered by a decoded packet.
    """
    p_success = np.asarray(p_success, dtype=float)
    p_outage = np.asarray(p_outage, dtype=float)
    energy = np.asarray(energy, dtype=float)
    uses = np.asarray(uses, dtype=float)
    w = termination_weights(p_success, p_outage)
    rounds = np.arange(1, w.shape[-1] + 1)
    e_energy = np.sum(energy * w, axis=-1)
    e_uses = np.sum(uses * w, axis=-1)
    e_rounds = np.sum(rounds * w, axis=-1)
    if model is Model.CONTINUOUS:
        avg_power = np.sum(energy / uses * w, axis=-1)
        throughput = info * np.sum(p_success / uses, axis=-1)
    else:
        avg_power = e_energy / e_uses
        throughput = info * (1.0 - p_outage) / e_uses
    return avg_power, throughput, e_energy, e_uses, e_rounds

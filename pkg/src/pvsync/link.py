"""Shannon link rates and digital-twin task delays.

The ``*_rate`` / ``*_delay`` functions take entity views and validate their
preconditions. The lower-case array kernels underneath (``shannon_rate``,
``upload_delay``, ``compute_delay``) broadcast over numpy arrays and are what
the auction layer uses in bulk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleLinkError
from .market import AvProfile, ChannelState, DtTask, RsuProfile


def shannon_rate(bandwidth, gain, power, noise):
    """``B * log2(1 + g*P/sigma^2)`` in bits/s; linear units throughout."""
    return bandwidth * np.log2(1.0 + gain * power / noise)


def upload_delay(size, rate):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(size == 0, 0.0, size / rate)


def compute_delay(size, cycles_per_bit, freq):
    return size * cycles_per_bit / freq


@dataclass(frozen=True)
class LinkBudget:
    uplink_rate_Ru: float
    downlink_rate_Rd: float


def uplink_rate(av: AvProfile, rsu: RsuProfile, ch: ChannelState) -> float:
    if not rsu.noise_var_rsu > 0:
        raise DomainError(f"RSU noise variance must be positive, got {rsu.noise_var_rsu}")
    g = float(ch.gain_g[av.id, rsu.id])
    return float(shannon_rate(rsu.uplink_bw_Bu, g, av.tx_power_p, rsu.noise_var_rsu))


def downlink_rate(av: AvProfile, rsu: RsuProfile, ch: ChannelState) -> float:
    noise = float(ch.noise_var_av[av.id])
    if not noise > 0:
        raise DomainError(f"AV noise variance must be positive, got {noise}")
    g = float(ch.gain_g[av.id, rsu.id])
    return float(shannon_rate(rsu.downlink_bw_Bd, g, rsu.tx_power_P, noise))


def link_budget(av: AvProfile, rsu: RsuProfile, ch: ChannelState) -> LinkBudget:
    return LinkBudget(uplink_rate(av, rsu, ch), downlink_rate(av, rsu, ch))


def dt_upload_delay(task: DtTask, rate_u: float) -> float:
    """Seconds to upload the task's data. A zero-rate link cannot carry it."""
    if not rate_u > 0:
        if task.size_s == 0:
            return 0.0
        raise InfeasibleLinkError("uplink rate is zero; task is unschedulable on this RSU")
    return task.size_s / rate_u


def dt_compute_delay(task: DtTask, rsu: RsuProfile) -> float:
    if not rsu.cpu_freq_fC > 0:
        raise DomainError(f"CPU frequency must be positive, got {rsu.cpu_freq_fC}")
    return float(compute_delay(task.size_s, task.cycles_per_unit_e, rsu.cpu_freq_fC))

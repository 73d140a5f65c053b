"""Match quality, AR rendering/streaming delays and total synchronization delay.

The AR content rate is the downlink rate: recommendations flow RSU -> AV.
The user-response curve is ``theta(x) = x**beta`` with ``beta >= 1``.

When an AV has no hit caches (``h == 0``) the per-cache layer term divides
by zero. The delay bracket then uses ``h = 1``; match quality falls back to
the h-free form ``G * count`` when ``beta == 1`` (where ``h`` cancels) and to
zero otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, InfeasibleLinkError
from .link import LinkBudget, compute_delay, shannon_rate, upload_delay
from .market import DtTask, MarProfile, RsuProfile, Scenario

BRANCH_REGULAR = "regular"
BRANCH_H0_LINEAR = "h0-linear"
BRANCH_H0_ZERO = "h0-zero"


# ---------------------------------------------------------------------------
# Array kernels
# ---------------------------------------------------------------------------


def layer_count(slack, rate_ar, ar_size):
    """Number of AR layers the slack window can stream; zero for negative slack."""
    return np.maximum(slack, 0.0) * rate_ar / ar_size


def layer_term(gen_score, count, hits):
    """``G * count / h``, the per-cache layer term shared by match quality and AR delays."""
    return gen_score * count / np.maximum(hits, 1)


def match_quality_kernel(gen_score, count, hits, beta):
    hits = np.asarray(hits)
    x = layer_term(gen_score, count, hits)
    regular = np.power(x, beta) * hits
    if beta == 1:
        fallback = gen_score * count
    else:
        fallback = np.zeros_like(regular)
    return np.where(hits > 0, regular, fallback)


def ar_tx_delay_kernel(term, ar_size, rate_d):
    with np.errstate(divide="ignore"):
        return (term + 1.0) * ar_size / rate_d


def ar_compute_delay_kernel(term, ar_size, ar_cycles, gpu_freq):
    return (term + 1.0) * ar_size * ar_cycles / gpu_freq


# ---------------------------------------------------------------------------
# Scalar API
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskTiming:
    """A DT task together with its upload and compute delay on one RSU."""

    task: DtTask
    t_dt: float
    l_dt: float

    @property
    def slack(self):
        return self.task.deadline_d - self.t_dt - self.l_dt


@dataclass(frozen=True)
class LayerCount:
    count: float
    feasible: bool


@dataclass(frozen=True)
class SyncEvaluation:
    t_dt: float
    l_dt: float
    t_ar: float
    l_ar: float
    match_quality_m: float
    total_delay_T: float
    feasible: bool
    branch: str = BRANCH_REGULAR


def _hits(mar: MarProfile, av_id: int) -> int:
    h = int(mar.hits_h[av_id])
    if h < 0:
        raise DomainError(f"hit-cache count must be >= 0, got {h}")
    return h


def recommendation_count(timing: TaskTiming, link: LinkBudget, mar: MarProfile) -> LayerCount:
    if not mar.ar_size_s > 0:
        raise DomainError("AR layer size must be positive")
    if timing.slack < 0:
        return LayerCount(0.0, False)
    return LayerCount(float(layer_count(timing.slack, link.downlink_rate_Rd, mar.ar_size_s)), True)


def match_quality_branch(hits, beta):
    if hits > 0:
        return BRANCH_REGULAR
    return BRANCH_H0_LINEAR if beta == 1 else BRANCH_H0_ZERO


def match_quality(timing, link, mar, av_id, gen_score, theta_exponent=1.0) -> float:
    """Generative-AI match quality ``theta(G*count/h) * h``."""
    h = _hits(mar, av_id)
    count = recommendation_count(timing, link, mar).count
    return float(match_quality_kernel(gen_score, count, h, theta_exponent))


def ar_transmission_delay(timing, link, mar, av_id, gen_score) -> float:
    if not link.downlink_rate_Rd > 0:
        raise InfeasibleLinkError("downlink rate is zero; AR stream cannot be delivered")
    count = recommendation_count(timing, link, mar).count
    term = layer_term(gen_score, count, _hits(mar, av_id))
    return float(ar_tx_delay_kernel(term, mar.ar_size_s, link.downlink_rate_Rd))


def ar_compute_delay(timing, link, mar, av_id, rsu: RsuProfile, gen_score) -> float:
    if not rsu.gpu_freq_fG > 0:
        raise DomainError("GPU frequency must be positive")
    count = recommendation_count(timing, link, mar).count
    term = layer_term(gen_score, count, _hits(mar, av_id))
    return float(ar_compute_delay_kernel(term, mar.ar_size_s, mar.ar_cycles_per_unit_e, rsu.gpu_freq_fG))


def total_delay(timing, link, mar, av_id, rsu, gen_score, alloc=(1, 1), theta_exponent=1.0) -> SyncEvaluation:
    """Evaluate one task for an (AV, RSU, MAR) pair under binary indicators ``alloc = (g_dt, g_ar)``."""
    g_dt, g_ar = alloc
    if g_dt not in (0, 1) or g_ar not in (0, 1):
        raise DomainError(f"allocation indicators must be binary, got {alloc}")
    h = _hits(mar, av_id)
    m = match_quality(timing, link, mar, av_id, gen_score, theta_exponent)
    if g_ar:
        t_ar = ar_transmission_delay(timing, link, mar, av_id, gen_score)
        l_ar = ar_compute_delay(timing, link, mar, av_id, rsu, gen_score)
    else:
        t_ar = l_ar = 0.0
    total = g_dt * (timing.t_dt + timing.l_dt) + g_ar * (t_ar + l_ar)
    return SyncEvaluation(
        t_dt=timing.t_dt, l_dt=timing.l_dt, t_ar=t_ar, l_ar=l_ar, match_quality_m=m,
        total_delay_T=total, feasible=bool(total <= timing.task.deadline_d),
        branch=match_quality_branch(h, theta_exponent),
    )


# ---------------------------------------------------------------------------
# Bulk evaluation over a whole scenario
# ---------------------------------------------------------------------------


class PairTable:
    """Every (AV, MAR, task) delay and match quality on one RSU.

    Array axes are (I,), (I, N), (I, K) or (I, K, N). Padding tasks (outside
    ``task_mask``) contribute nothing to durations or averages and never
    affect feasibility.
    """

    def __init__(self, scenario: Scenario, rsu: int = 0):
        self.scenario = scenario
        self.rsu = rsu
        f, r, m = scenario.fleet, scenario.rsus, scenario.mars
        gain = scenario.channel.gain_g[:, rsu]
        mask = f.task_mask
        self.mask = mask
        self.n_tasks = mask.sum(axis=1)
        # degenerate inputs (zero rates) produce inf/nan here and are then
        # masked out by the feasibility tests below
        with np.errstate(all="ignore"):
            self.rate_u = shannon_rate(r.uplink_bw[rsu], gain, f.tx_power, r.noise[rsu])
            self.rate_d = shannon_rate(r.downlink_bw[rsu], gain, r.tx_power[rsu], scenario.channel.noise_var_av)
            t_dt = upload_delay(f.task_size, self.rate_u[:, None])
            l_dt = compute_delay(f.task_size, f.task_cycles, r.cpu_freq[rsu])
            self.t_dt = np.where(mask, t_dt, 0.0)
            self.l_dt = np.where(mask, l_dt, 0.0)
            self.deadline = np.where(mask, f.task_deadline, np.inf)
            self.slack = np.where(mask, f.task_deadline - self.t_dt - self.l_dt, np.inf)
            self.dt_feasible = np.all(self.slack >= 0, axis=1) & mask.any(axis=1)
            self.dt_duration = (self.t_dt + self.l_dt).sum(axis=1)
            self._slack_pos = np.where(mask, np.maximum(self.slack, 0.0), 0.0)

            G = scenario.gen.score_G[:, rsu, :]
            # per-pair factor G * R_d / (s * max(h, 1)); the layer term is coef * slack
            self._coef = G * self.rate_d[:, None] / (m.ar_size * np.maximum(m.hits, 1))
            # seconds to stream plus render one AR layer
            self._per_layer = m.ar_size / self.rate_d[:, None] + m.ar_size * m.ar_cycles / r.gpu_freq[rsu]

            dt = (self.t_dt + self.l_dt)[:, None, :]
            ar = (self._term() + 1.0) * self._per_layer[:, :, None]
            self.total = np.where(mask[:, None, :], dt + ar, 0.0)
            ok = np.all(self.total <= self.deadline[:, None, :], axis=2)
            self.pair_feasible = ok & self.dt_feasible[:, None]
            self.duration = self.total.sum(axis=2)
            self.match_mean = self._match_mean(G)
            shock = f.match_shock[:, None] * m.match_shock
            u = f.value[:, None] * self.match_mean * shock
            self.value_rate = np.where(self.pair_feasible, u, 0.0)

    def _term(self):
        return self._coef[:, :, None] * self._slack_pos[:, None, :]

    def _match_mean(self, G):
        """Task-averaged match quality, (I, K)."""
        beta = self.scenario.gen.theta_exponent
        hits = self.scenario.mars.hits
        n = np.maximum(self.n_tasks, 1)
        slack = self._slack_pos
        moment = (slack if beta == 1 else slack ** beta).sum(axis=1) / n
        coef = self._coef if beta == 1 else self._coef ** beta
        regular = coef * hits * moment[:, None]
        if beta == 1:
            fallback = G * self.rate_d[:, None] * (slack.sum(axis=1) / n)[:, None] / self.scenario.mars.ar_size
        else:
            fallback = 0.0
        return np.where(hits > 0, regular, fallback)

    @cached_property
    def count(self):
        s = self.scenario
        with np.errstate(divide="ignore", invalid="ignore"):
            return layer_count(self._slack_pos[:, None, :], self.rate_d[:, None, None], s.mars.ar_size[None, :, None])

    @cached_property
    def match(self):
        """Per-task match quality from the generative model, before shocks."""
        s = self.scenario
        G = s.gen.score_G[:, self.rsu, :][:, :, None]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            mq = match_quality_kernel(G, self.count, s.mars.hits[:, :, None], s.gen.theta_exponent)
        return np.where(self.mask[:, None, :], mq, 0.0)

    @property
    def t_ar(self):
        m = self.scenario.mars
        with np.errstate(all="ignore"):
            t = ar_tx_delay_kernel(self._term(), m.ar_size[None, :, None], self.rate_d[:, None, None])
        return np.where(self.mask[:, None, :], t, 0.0)

    @property
    def l_ar(self):
        s = self.scenario
        m = s.mars
        with np.errstate(all="ignore"):
            l = ar_compute_delay_kernel(self._term(), m.ar_size[None, :, None], m.ar_cycles[None, :, None],
                                        s.rsus.gpu_freq[self.rsu])
        return np.where(self.mask[:, None, :], l, 0.0)

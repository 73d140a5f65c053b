"""Monte Carlo estimates over the match-quality prior.

Every estimate in a scenario reads from one random stream per purpose
(auctioneer or functional MAR), keyed by the scenario seed. A single block of
prior draws, shape (S, K), is shared by all AVs; hit counts are then
truncated at each AV's own cache size. An AV's estimate therefore never
depends on which other AVs were evaluated or in what order.

Resampled hit counts enter both the match quality and the AR delays. Because
the AR layer term is linear in each task's slack, a draw only needs a few
per-AV task aggregates (sum, minimum and ``beta``-th moment of the slack)
instead of the full task list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateMarketError
from ..market import MarKind, sample_hits
from ..sync import PairTable
from .rules import NO_WINNER, clear_virtual

STREAM_AUCTIONEER = 1
STREAM_FUNCTIONAL = 2


def stream(seed, purpose):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(purpose),)))


@dataclass(frozen=True)
class VirtualDraws:
    """Resampled virtual submarkets for every AV, shape (I, S, K)."""

    value: np.ndarray  # per-unit-time value U, regardless of feasibility
    duration: np.ndarray  # summed display duration, 0 where infeasible
    eligible: np.ndarray  # deadline-feasible pairs

    @property
    def n(self):
        return self.value.shape[1]


def _slack_aggregates(table: PairTable, beta):
    cache = table.__dict__.setdefault("_aggregates", {})
    if beta not in cache:
        cache[beta] = _compute_slack_aggregates(table, beta)
    return cache[beta]


def _compute_slack_aggregates(table: PairTable, beta):
    mask = table.mask
    n_tasks = table.n_tasks
    slack_pos = table._slack_pos
    denom = np.maximum(n_tasks, 1)
    total = slack_pos.sum(axis=1)
    moment = (slack_pos ** beta).sum(axis=1) / denom
    mean = total / denom
    smin = np.where(mask, table.slack, np.inf).min(axis=1)
    return n_tasks, total, moment, mean, smin


def prior_draws(scenario, n_samples, purpose, n_mars):
    """Shared prior block: hit counts capped at the largest cache (S, K),
    common shocks (S, 1) and idiosyncratic shocks (S, K)."""
    prior = scenario.prior
    rng = stream(scenario.seed, purpose)
    shape = (n_samples, n_mars)
    base = sample_hits(prior.hits, rng, np.array([scenario.fleet.cache_size.max()]), n_mars, size=shape)
    common = prior.common_shock.sample(rng, (n_samples, 1))
    idio = prior.idio_shock.sample(rng, shape)
    return base, common, idio


def draw_virtual_all(table: PairTable, n_samples: int, purpose=STREAM_AUCTIONEER, mars=None) -> VirtualDraws:
    """Sample ``n_samples`` virtual submarkets per AV from the prior."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    s = table.scenario
    m, rsu = s.mars, table.rsu
    cols = np.arange(m.n) if mars is None else np.asarray(mars)
    K = cols.size
    base, common, idio = prior_draws(s, n_samples, purpose, K)
    hits = np.minimum(base[None], s.fleet.cache_size[:, None, None])

    beta = s.gen.theta_exponent
    n_tasks, total, moment, mean, smin = _slack_aggregates(table, beta)
    col = (slice(None), None, None)
    rate = table.rate_d[col]
    G = s.gen.score_G[:, rsu, cols][:, None, :]
    size, cycles = m.ar_size[cols], m.ar_cycles[cols]
    gpu = s.rsus.gpu_freq[rsu]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        per_layer = size / rate + size * cycles / gpu
        coef = G * rate / (size * np.maximum(hits, 1))
        regular = coef ** beta * hits * moment[col]
        if beta == 1:
            match = np.where(hits > 0, regular, G * rate * mean[col] / size)
        else:
            match = np.where(hits > 0, regular, 0.0)
        duration = table.dt_duration[col] + per_layer * (coef * total[col] + n_tasks[col])
        margin = 1.0 - coef * per_layer
        ok = (margin > 0) & (smin[col] * margin >= per_layer) & np.isfinite(duration)
    eligible = ok & table.dt_feasible[col]
    value = s.fleet.value[col] * np.nan_to_num(match) * common * idio
    return VirtualDraws(value=value, duration=np.where(eligible, duration, 0.0), eligible=eligible)


def draw_virtual(table: PairTable, av: int, n_samples: int, purpose=STREAM_AUCTIONEER, mars=None):
    """``draw_virtual_all`` restricted to AV ``av``; arrays of shape (S, K)."""
    d = draw_virtual_all(table, n_samples, purpose, mars)
    return VirtualDraws(d.value[av], d.duration[av], d.eligible[av])


def functional_expected_values(table: PairTable, n_samples: int, compiled=True) -> np.ndarray:
    """The functional MAR's expected per-unit-time value for every AV, shape (I,).

    This is all the functional MAR can bid on: it does not observe its own
    hit count or the match shocks.
    """
    s = table.scenario
    f = s.functional_index
    if f is None:
        return np.zeros(s.n_avs)
    if not compiled:
        draws = draw_virtual_all(table, n_samples, STREAM_FUNCTIONAL, mars=[f])
        return draws.value[:, :, 0].mean(axis=1)
    from ._kernels import mean_values

    base, common, idio = prior_draws(s, n_samples, STREAM_FUNCTIONAL, 1)
    beta = float(s.gen.theta_exponent)
    _, _, moment, mean, _ = _slack_aggregates(table, beta)
    return mean_values(
        np.ascontiguousarray(base[:, 0], dtype=np.int64), s.fleet.cache_size.astype(np.int64),
        np.ascontiguousarray(common[:, 0], dtype=float), np.ascontiguousarray(idio[:, 0], dtype=float),
        s.fleet.value.astype(float), table.rate_d.astype(float),
        np.ascontiguousarray(s.gen.score_G[:, table.rsu, f], dtype=float), float(s.mars.ar_size[f]),
        moment, mean, beta,
    )


def functional_expected_value(table: PairTable, av: int, n_samples: int) -> float:
    return float(functional_expected_values(table, n_samples)[av])


def _second_highest_info(draws: VirtualDraws, functional):
    v = np.where(draws.eligible, draws.value, -np.inf)
    if functional is not None:
        v[..., functional] = -np.inf
    if v.shape[-1] < 2:
        return np.zeros(v.shape[:-1])
    second = np.partition(v, -2, axis=-1)[..., -2]
    return np.where(np.isfinite(second), second, 0.0)


def scaling_factor(gamma, expected_functional, expected_second):
    """``max(1, gamma * E[U_0] / E[U_(2)])``, or 1 when ``E[U_(2)]`` is not positive."""
    if gamma == 0 or not expected_second > 0:
        return 1.0
    return max(1.0, gamma * expected_functional / expected_second)


def scaling_factors_from(draws: VirtualDraws, gamma: float, functional) -> np.ndarray:
    """Per-AV ``max(1, gamma * E[U_0] / E[U_(2)])``; 1 where the ratio is undefined."""
    I = draws.value.shape[0]
    if functional is None or gamma == 0:
        return np.ones(I)
    expected_func = draws.value[:, :, functional].mean(axis=1)
    expected_second = _second_highest_info(draws, functional).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = gamma * expected_func / expected_second
    return np.where(expected_second > 0, np.maximum(1.0, ratio), 1.0)


def _as_table(x) -> PairTable:
    return x if isinstance(x, PairTable) else PairTable(x)


def price_scaling_factor(table, av: int, n_samples: int) -> float:
    """``max(1, gamma * E[U_0] / E[U_(2)])`` for synchronizing AV ``av``.

    ``U_(2)`` is the second-highest deadline-feasible infotainment value.
    ``table`` may be a :class:`PairTable` or a scenario.
    """
    table = _as_table(table)
    s = table.scenario
    if not np.any(s.mars.kind == MarKind.INFOTAINMENT):
        raise DegenerateMarketError("price scaling needs at least one infotainment MAR")
    draws = draw_virtual_all(table, n_samples)
    return float(scaling_factors_from(draws, s.gamma, s.functional_index)[av])


@dataclass(frozen=True)
class SurplusEstimates:
    """Per-AV virtual-surplus estimates, each of shape (I,)."""

    mean: np.ndarray
    stderr: np.ndarray
    alpha: np.ndarray
    n_samples: int


def estimate_virtual_surplus_all(table: PairTable, n_samples: int, include_functional=False,
                                 compiled=True) -> SurplusEstimates:
    """Expected duration-weighted MAR surplus ``E[T * (gamma*S_F + S_I)]`` should each AV synchronize.

    Infotainment draws bid their sampled value, the functional MAR bids its
    sample mean, and each draw is cleared with the ratio rule. ``compiled``
    selects the fused loop; the array version gives the same numbers.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if compiled:
        return _estimate_compiled(table, n_samples, include_functional)
    s = table.scenario
    func = s.functional_index
    draws = draw_virtual_all(table, n_samples)
    has_info = np.any(s.mars.kind == MarKind.INFOTAINMENT)
    alpha = scaling_factors_from(draws, s.gamma, func) if has_info else np.ones(s.n_avs)
    bids = draws.value.copy()
    if func is not None:
        bids[:, :, func] = draws.value[:, :, func].mean(axis=1, keepdims=True)
    clearing = clear_virtual(bids, draws.eligible, alpha[:, None], functional=func,
                             include_functional=include_functional)
    w = clearing.winner[..., None]
    wc = np.maximum(w, 0)
    weight = np.where(s.mars.kind[wc] == MarKind.FUNCTIONAL, s.gamma, 1.0)
    picked = np.take_along_axis(draws.duration * draws.value, wc, -1) * weight
    surplus = np.where(w != NO_WINNER, picked, 0.0)[..., 0]
    mean = np.where(table.dt_feasible, surplus.mean(axis=1), 0.0)
    if n_samples > 1:
        se = surplus.std(axis=1, ddof=1) / np.sqrt(n_samples)
    else:
        se = np.zeros(s.n_avs)
    se = np.where(table.dt_feasible, se, 0.0)
    return SurplusEstimates(mean, se, np.where(table.dt_feasible, alpha, 1.0), n_samples)


def estimate_virtual_surplus(table, av: int, n_samples: int, include_functional=False) -> float:
    """The estimate for a single AV (table or scenario); see :func:`estimate_virtual_surplus_all`."""
    table = _as_table(table)
    return float(estimate_virtual_surplus_all(table, n_samples, include_functional).mean[av])


def _estimate_compiled(table: PairTable, n_samples: int, include_functional: bool) -> SurplusEstimates:
    from ._kernels import surplus_estimates

    s = table.scenario
    m, rsu = s.mars, table.rsu
    func = s.functional_index
    base, common, idio = prior_draws(s, n_samples, STREAM_AUCTIONEER, m.n)
    beta = float(s.gen.theta_exponent)
    n_tasks, total, moment, mean, smin = _slack_aggregates(table, beta)
    rate = table.rate_d
    per_layer = table._per_layer
    mean_, se, alpha = surplus_estimates(
        np.ascontiguousarray(base, dtype=np.int64), s.fleet.cache_size.astype(np.int64),
        np.ascontiguousarray(common[:, 0], dtype=float), np.ascontiguousarray(idio, dtype=float),
        s.fleet.value.astype(float), rate.astype(float), np.ascontiguousarray(s.gen.score_G[:, rsu, :], dtype=float),
        m.ar_size.astype(float), per_layer, table.dt_duration.astype(float), n_tasks.astype(float),
        total, moment, mean, smin, table.dt_feasible.astype(np.bool_),
        beta, float(s.gamma), -1 if func is None else int(func),
        bool(np.any(m.kind == MarKind.INFOTAINMENT)), bool(include_functional and func is not None),
    )
    return SurplusEstimates(mean_, se, alpha, n_samples)

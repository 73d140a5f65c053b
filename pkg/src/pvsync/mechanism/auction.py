"""Mechanism runs: MTEPViSA, the EPViSA and PViSA baselines, and a first-price control.

A run is split in two. :meth:`Mechanism.prepare` does everything that does
not depend on bid prices (delays, deadline feasibility, virtual-surplus
estimates); :meth:`Mechanism.clear` applies the allocation and pricing rules
to a bid set. Deviation searches call ``clear`` many times on one prepared
state.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..market import MarKind, Scenario
from ..sync import PairTable
from .estimates import estimate_virtual_surplus_all, functional_expected_values
from .rules import NO_WINNER, clear_virtual, price_physical

DEFAULT_MC_SAMPLES = 64
IR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BidSet:
    """Submitted bids.

    ``mar_price[i, k]`` is MAR ``k``'s per-unit-time bid should AV ``i`` end
    up synchronizing; MARs bid after the physical winner is known.
    """

    av_price: np.ndarray
    av_deadlines: np.ndarray
    mar_price: np.ndarray

    def with_av_price(self, i, price):
        p = np.array(self.av_price, dtype=float)
        p[i] = price
        return BidSet(p, self.av_deadlines, self.mar_price)

    def with_mar_price(self, i, k, price):
        p = np.array(self.mar_price, dtype=float)
        p[i, k] = price
        return BidSet(self.av_price, self.av_deadlines, p)


def truthful_bids(scenario: Scenario, n_samples: int = DEFAULT_MC_SAMPLES, rsu: int = 0,
                  table: Optional[PairTable] = None) -> BidSet:
    """Each AV bids its value and true deadlines; each infotainment MAR bids its
    realised per-time value; the functional MAR bids its expected value."""
    table = table or PairTable(scenario, rsu)
    mar_price = np.array(table.value_rate, dtype=float)
    func = scenario.functional_index
    if func is not None:
        expected = functional_expected_values(table, n_samples)
        mar_price[:, func] = np.where(table.dt_feasible, expected, 0.0)
    return BidSet(np.array(scenario.fleet.value, dtype=float), np.array(scenario.fleet.task_deadline),
                  mar_price)


@dataclass
class AuctionOutcome:
    mechanism: str
    winner_av: Optional[int] = None
    pay_av: float = 0.0
    winner_mar: Optional[int] = None
    pay_mar: float = 0.0
    mar_bid_rate: float = 0.0
    per_task_delays: list = field(default_factory=list)
    display_duration: float = 0.0
    surplus_dt: float = 0.0
    surplus_ar_functional: float = 0.0
    surplus_ar_infotainment: float = 0.0
    surplus_total: float = 0.0
    alpha: float = 1.0
    scores: list = field(default_factory=list)
    eligible_avs: list = field(default_factory=list)
    eligible_mars: list = field(default_factory=list)

    @property
    def revenue(self):
        return self.pay_av + self.pay_mar

    @property
    def surplus_ar(self):
        return self.surplus_total - self.surplus_dt

    def to_dict(self):
        d = asdict(self)
        d["revenue"] = self.revenue
        return d


def social_surplus(outcome: AuctionOutcome, scenario: Scenario) -> float:
    """DT value of the winner plus display duration times the weighted MAR value."""
    if outcome.winner_av is None:
        return 0.0
    ar = scenario.gamma * outcome.surplus_ar_functional + outcome.surplus_ar_infotainment
    return outcome.surplus_dt + outcome.display_duration * ar


def ir_violations(outcome: AuctionOutcome, scenario: Scenario, tol=IR_TOLERANCE) -> list:
    """Payment-exceeds-value breaches of the winners, as readable strings.

    An infotainment MAR is held to its realised value. The functional MAR
    cannot see its match quality, so it is held to the value it bid on (its
    expected value when truthful); its ex-post shortfall is what the
    adverse-selection check measures.
    """
    out = []
    if outcome.winner_av is not None:
        v = float(scenario.fleet.value[outcome.winner_av])
        if outcome.pay_av < -tol or outcome.pay_av > v + tol * max(1.0, abs(v)):
            out.append(f"av {outcome.winner_av}: pays {outcome.pay_av} for value {v}")
    if outcome.winner_mar is not None:
        if scenario.mars.kind[outcome.winner_mar] == MarKind.FUNCTIONAL:
            u = outcome.mar_bid_rate
        else:
            u = outcome.surplus_ar_infotainment
        worth = outcome.display_duration * u
        if outcome.pay_mar < -tol or outcome.pay_mar > worth + tol * max(1.0, abs(worth)):
            out.append(f"mar {outcome.winner_mar}: pays {outcome.pay_mar} for value {worth}")
    return out


class MarketState:
    """Bid-price-independent part of one mechanism run."""

    def __init__(self, mechanism, scenario, decision_table, world_table, estimates, alphas):
        self.mechanism = mechanism
        self.scenario = scenario
        self.decision = decision_table
        self.world = world_table
        self.estimates = estimates
        self.alphas = alphas
        self.eligible_avs = decision_table.dt_feasible

    def alpha(self, av):
        return float(self.alphas[av])


class Mechanism:
    name = "mechanism"
    physical_pricing = "second_score"
    virtual_pricing = "scaled"
    use_estimates = True
    collapse_tasks = False
    include_functional = False

    def __init__(self, n_samples: int = DEFAULT_MC_SAMPLES, rsu: int = 0):
        self.n_samples = n_samples
        self.rsu = rsu

    # -- preparation --------------------------------------------------------

    def prepare(self, scenario: Scenario, bids: Optional[BidSet] = None,
                table: Optional[PairTable] = None) -> MarketState:
        """``table`` may pass in an already built table for ``scenario``; it is
        reused when the bids report the true deadlines."""
        if bids is not None and not np.array_equal(bids.av_deadlines, scenario.fleet.task_deadline):
            scenario = scenario.with_deadlines(bids.av_deadlines)
            table = None
        world = table if table is not None and table.rsu == self.rsu else PairTable(scenario, self.rsu)
        decision = PairTable(scenario.collapsed(), self.rsu) if self.collapse_tasks else world
        estimates = np.zeros(scenario.n_avs)
        alphas = np.ones(scenario.n_avs)
        if self.use_estimates:
            est = estimate_virtual_surplus_all(decision, self.n_samples, self.include_functional)
            estimates = est.mean
            if self.virtual_pricing != "second_price":
                alphas = est.alpha
        return MarketState(self, scenario, decision, world, estimates, alphas)

    # -- clearing -----------------------------------------------------------

    def scores(self, state: MarketState, av_price):
        return np.asarray(av_price, dtype=float) + state.estimates

    def clear_physical(self, state: MarketState, av_price):
        """``(winner, payment, scores)`` of the physical submarket."""
        eligible = state.eligible_avs
        scores = self.scores(state, av_price)
        if not eligible.any():
            return None, 0.0, scores
        masked = np.where(eligible, scores, -np.inf)
        w = int(np.argmax(masked))
        if self.physical_pricing == "first_price":
            pay = float(av_price[w])
        else:
            pay = price_physical(av_price, scores, w, rule=self.physical_pricing, eligible=eligible,
                                 offsets=state.estimates)
        return w, pay, scores

    def clear_virtual(self, state: MarketState, av: int, mar_price):
        """``(winner, rate, alpha)`` of the virtual submarket for synchronizing AV ``av``."""
        eligible = state.decision.pair_feasible[av]
        alpha = state.alpha(av)
        func = state.scenario.functional_index
        c = clear_virtual(mar_price, eligible, alpha, functional=func,
                          include_functional=self.include_functional,
                          pricing=self.virtual_pricing)
        w = int(c.winner)
        return (None if w == NO_WINNER else w), float(c.rate), alpha

    def clear(self, state: MarketState, bids: BidSet) -> AuctionOutcome:
        s, world = state.scenario, state.world
        out = AuctionOutcome(mechanism=self.name)
        w, pay, scores = self.clear_physical(state, bids.av_price)
        out.scores = [float(x) if e else None for x, e in zip(scores, state.eligible_avs)]
        out.eligible_avs = [int(i) for i in np.flatnonzero(state.eligible_avs)]
        if w is None:
            return out
        out.winner_av, out.pay_av = w, pay
        out.surplus_dt = float(s.fleet.value[w])
        out.eligible_mars = [int(k) for k in np.flatnonzero(state.decision.pair_feasible[w])]
        k, rate, alpha = self.clear_virtual(state, w, bids.mar_price[w])
        out.alpha = alpha
        mask = world.mask[w]
        if k is None:
            out.per_task_delays = (world.t_dt[w] + world.l_dt[w])[mask].tolist()
        else:
            duration = float(world.duration[w, k])
            out.winner_mar = k
            out.display_duration = duration
            out.pay_mar = duration * rate
            out.mar_bid_rate = float(bids.mar_price[w, k])
            out.per_task_delays = world.total[w, k][mask].tolist()
            u = float(world.value_rate[w, k])
            if s.mars.kind[k] == MarKind.FUNCTIONAL:
                out.surplus_ar_functional = u
            else:
                out.surplus_ar_infotainment = u
        out.surplus_total = social_surplus(out, s)
        return out

    def run(self, scenario: Scenario, bids: Optional[BidSet] = None) -> AuctionOutcome:
        table = PairTable(scenario, self.rsu)
        if bids is None:
            bids = truthful_bids(scenario, self.n_samples, self.rsu, table=table)
        return self.clear(self.prepare(scenario, bids, table), bids)


class MTEPViSA(Mechanism):
    name = "mtepvisa"


class EPViSA(Mechanism):
    """Single-task predecessor: decisions see each AV's tasks merged into one."""

    name = "epvisa"
    collapse_tasks = True


class PViSA(Mechanism):
    """Highest DT bid wins; the virtual slot goes by plain second price."""

    name = "pvisa"
    physical_pricing = "runner_up_bid"
    virtual_pricing = "second_price"
    use_estimates = False


class FirstPriceControl(Mechanism):
    """MTEPViSA allocation with pay-your-bid pricing; not strategy-proof by design."""

    name = "first-price-control"
    physical_pricing = "first_price"
    virtual_pricing = "first_price"


MECHANISMS = {cls.name: cls for cls in (MTEPViSA, EPViSA, PViSA, FirstPriceControl)}


def get_mechanism(name: str, **kwargs) -> Mechanism:
    try:
        return MECHANISMS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown mechanism {name!r}; choose from {sorted(MECHANISMS)}") from None


def run_mtepvisa(scenario, bids=None, n_samples=DEFAULT_MC_SAMPLES):
    return MTEPViSA(n_samples).run(scenario, bids)


def run_epvisa(scenario, bids=None, n_samples=DEFAULT_MC_SAMPLES):
    return EPViSA(n_samples).run(scenario, bids)


def run_pvisa(scenario, bids=None, n_samples=DEFAULT_MC_SAMPLES):
    return PViSA(n_samples).run(scenario, bids)

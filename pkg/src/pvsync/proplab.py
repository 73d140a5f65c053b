"""Empirical checks of the mechanism's incentive claims.

* strategy-proofness: unilateral bid-price deviations over a grid, with local
  refinement around the best grid point;
* individual rationality: payment never exceeds value for truthful bidders;
* adverse selection: the functional MAR's realised value when it wins,
  compared between the scaled rule and a rule with ``alpha`` forced to 1.

Utilities are quasilinear. An AV gains its value ``v`` if it wins; a MAR
gains ``T * U`` (display duration times realised per-time value).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from .market import MarKind, Scenario, ScenarioConfig, sample_scenario
from .mechanism.auction import DEFAULT_MC_SAMPLES, get_mechanism, ir_violations, truthful_bids
from .mechanism.rules import clear_virtual
from .simulator import deadline_violations, scenario_seed
from .sync import PairTable

DEFAULT_TOLERANCE = 1e-9
REFINE_POINTS = 16


@dataclass
class DeviationReport:
    scenario_seed: int
    entity: str  # "av", "functional" or "infotainment"
    index: int
    truthful_bid: float
    truthful_utility: float
    best_utility: float
    gain: float
    best_bid: float
    flagged: bool
    mechanism: str = "mtepvisa"
    context_av: Optional[int] = None  # synchronizing AV a MAR bid against

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def scenario_batch(config: ScenarioConfig, n: int, master_seed: int = 0, start: int = 0):
    """Scenarios for seed indices ``start .. start+n-1``, same split as the experiment runner."""
    for idx in range(start, start + n):
        yield sample_scenario(config, scenario_seed(master_seed, idx))


def _grid(truthful, grid_size):
    return np.linspace(0.0, 2.0 * max(truthful, 0.0), grid_size)


def _search(utility, truthful, grid_size):
    """Best utility over the grid plus a finer pass around the grid maximum."""
    grid = _grid(truthful, grid_size)
    vals = np.array([utility(b) for b in grid])
    j = int(np.argmax(vals))
    best_bid, best = float(grid[j]), float(vals[j])
    if grid_size > 1 and grid[-1] > 0:
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid_size - 1)]
        for b in np.linspace(lo, hi, REFINE_POINTS):
            u = utility(b)
            if u > best:
                best, best_bid = float(u), float(b)
    return best, best_bid


def check_strategy_proofness(scenario: Scenario, grid_size: int = 50, tolerance: float = DEFAULT_TOLERANCE,
                             mechanism: str = "mtepvisa", n_samples: int = DEFAULT_MC_SAMPLES,
                             entities=("av", "infotainment", "functional")) -> list:
    """One report per probed AV and per MAR of the synchronizing AV.

    MAR bids only matter in the row of the AV that wins the physical
    submarket, and no MAR bid can change which AV that is, so MARs are probed
    in that row.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    mech = get_mechanism(mechanism, n_samples=n_samples)
    table = PairTable(scenario, mech.rsu)
    bids = truthful_bids(scenario, n_samples, mech.rsu, table=table)
    state = mech.prepare(scenario, bids, table)
    truth = mech.clear(state, bids)
    reports = []
    seed = scenario.seed
    values = scenario.fleet.value

    if "av" in entities:
        for i in range(scenario.n_avs):
            def av_utility(b, i=i):
                price = np.array(bids.av_price, dtype=float)
                price[i] = b
                w, pay, _ = mech.clear_physical(state, price)
                return values[i] - pay if w == i else 0.0

            base = av_utility(bids.av_price[i])
            best, best_bid = _search(av_utility, bids.av_price[i], grid_size)
            gain = max(best, base) - base
            reports.append(DeviationReport(seed, "av", i, float(bids.av_price[i]), float(base),
                                           float(max(best, base)), float(gain),
                                           float(best_bid if best > base else bids.av_price[i]),
                                           bool(gain > tolerance), mech.name))

    iota = truth.winner_av
    if iota is not None:
        row = np.array(bids.mar_price[iota], dtype=float)
        world = state.world
        for k in range(scenario.n_mars):
            kind = "functional" if scenario.mars.kind[k] == MarKind.FUNCTIONAL else "infotainment"
            if kind not in entities:
                continue
            # the functional MAR's value is the expectation it bids on
            rate_value = row[k] if kind == "functional" else world.value_rate[iota, k]

            def mar_utility(b, k=k, rate_value=rate_value):
                r = row.copy()
                r[k] = b
                w, rate, _ = mech.clear_virtual(state, iota, r)
                if w != k:
                    return 0.0
                duration = world.duration[iota, k]
                return duration * rate_value - duration * rate

            base = mar_utility(row[k])
            best, best_bid = _search(mar_utility, row[k], grid_size)
            gain = max(best, base) - base
            reports.append(DeviationReport(seed, kind, k, float(row[k]), float(base), float(max(best, base)),
                                           float(gain), float(best_bid if best > base else row[k]),
                                           bool(gain > tolerance), mech.name, int(iota)))
    return reports


@dataclass
class StrategyProofnessSummary:
    n_scenarios: int
    n_reports: int
    flagged: dict  # entity -> number of flagged reports
    flagged_scenarios: int
    max_gain: dict  # entity -> largest gain seen

    @property
    def passed(self):
        return self.flagged.get("av", 0) == 0 and self.flagged.get("infotainment", 0) == 0


def summarize_deviations(reports: Iterable[DeviationReport], n_scenarios: int,
                         entities=("av", "infotainment")) -> StrategyProofnessSummary:
    """Counts flagged reports; a scenario is flagged if any of ``entities`` is."""
    flagged, max_gain, bad = {}, {}, set()
    n = 0
    for r in reports:
        n += 1
        flagged.setdefault(r.entity, 0)
        max_gain[r.entity] = max(max_gain.get(r.entity, 0.0), r.gain)
        if r.flagged:
            flagged[r.entity] += 1
            if r.entity in entities:
                bad.add(r.scenario_seed)
    return StrategyProofnessSummary(n_scenarios, n, flagged, len(bad), max_gain)


@dataclass
class IRReport:
    n_scenarios: int
    violations: int
    details: list = field(default_factory=list)

    @property
    def passed(self):
        return self.violations == 0


def check_individual_rationality(scenarios: Iterable[Scenario], mechanism: str = "mtepvisa",
                                 n_samples: int = DEFAULT_MC_SAMPLES, max_details: int = 20) -> IRReport:
    """Truthful bidding over a batch; counts winners paying more than their value."""
    mech = get_mechanism(mechanism, n_samples=n_samples)
    n = bad = 0
    details = []
    for s in scenarios:
        n += 1
        problems = ir_violations(mech.run(s), s)
        if problems:
            bad += len(problems)
            if len(details) < max_details:
                details.extend(f"seed {s.seed}: {p}" for p in problems)
    return IRReport(n, bad, details)


def count_ir_violations(outcomes) -> int:
    """Violations over ``(outcome, scenario)`` pairs; no-winner outcomes pass vacuously."""
    return sum(len(ir_violations(o, s)) for o, s in outcomes)


@dataclass
class AdverseSelectionSummary:
    n_scenarios: int
    n_auctions: int  # virtual submarkets where the functional MAR was eligible
    wins_scaled: int
    wins_forced: int
    deficit_scaled: float  # mean of 1 - U0/b0 over functional wins
    deficit_scaled_se: float
    deficit_forced: float
    deficit_forced_se: float
    win_rate_scaled: float
    win_rate_forced: float
    efficient_rate: float  # share of auctions where gamma * U0 beats every infotainment value
    efficient_rate_se: float

    @property
    def scaled_free(self):
        """No deficit under the scaled rule, within two standard errors."""
        return self.deficit_scaled <= 2.0 * self.deficit_scaled_se

    @property
    def forced_deficit(self):
        return self.deficit_forced > 0

    @property
    def not_worse(self):
        """Conditional surplus under the scaled rule is no lower than under alpha = 1 (within 2 SE)."""
        return self.deficit_scaled <= self.deficit_forced + 2.0 * math.hypot(self.deficit_scaled_se,
                                                                           self.deficit_forced_se)

    @property
    def calibrated(self):
        """Scaled-rule win rate matches the full-information efficient rate within two standard errors."""
        p, n = self.win_rate_scaled, max(self.n_auctions, 1)
        se = math.hypot(math.sqrt(p * (1 - p) / n), self.efficient_rate_se)
        return abs(p - self.efficient_rate) <= 2.0 * se

    @property
    def passed(self):
        return self.scaled_free and self.not_worse and self.calibrated

    def to_dict(self):
        d = asdict(self)
        d.update(scaled_free=self.scaled_free, forced_deficit=self.forced_deficit, not_worse=self.not_worse,
                 calibrated=self.calibrated, passed=self.passed)
        return d


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0, 0.0
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def check_adverse_selection(scenarios: Iterable[Scenario], n_samples: int = DEFAULT_MC_SAMPLES,
                            include_functional: bool = False) -> AdverseSelectionSummary:
    """Paired comparison of the functional MAR's wins under the scaled rule and under ``alpha = 1``.

    Both arms use the same physical winner and the same truthful bids. The
    scaled arm is MTEPViSA's virtual rule; ``include_functional`` switches it
    to the variant where the functional bid also sits among the competing
    bids. The forced arm sets ``alpha = 1`` with the functional bid competing,
    which makes it a plain highest-bid contest.
    """
    mech = get_mechanism("mtepvisa", n_samples=n_samples)
    n = 0
    d_scaled, d_forced, efficient = [], [], []
    for s in scenarios:
        n += 1
        f = s.functional_index
        if f is None:
            continue
        table = PairTable(s, mech.rsu)
        bids = truthful_bids(s, n_samples, mech.rsu, table=table)
        state = mech.prepare(s, bids, table)
        iota, _, _ = mech.clear_physical(state, bids.av_price)
        if iota is None:
            continue
        row = bids.mar_price[iota]
        eligible = state.decision.pair_feasible[iota]
        b0 = row[f]
        u0 = table.value_rate[iota, f]
        alpha = state.alpha(iota)
        w_scaled = int(clear_virtual(row, eligible, alpha, f, include_functional).winner)
        w_forced = int(clear_virtual(row, eligible, 1.0, f, True).winner)
        if eligible[f] and b0 > 0:
            info = np.where(eligible & (s.mars.kind == MarKind.INFOTAINMENT), table.value_rate[iota], -np.inf)
            efficient.append(float(s.gamma * u0 >= info.max()))
            if w_scaled == f:
                d_scaled.append(1.0 - u0 / b0)
            if w_forced == f:
                d_forced.append(1.0 - u0 / b0)
    ds, ds_se = _mean_se(d_scaled)
    dfo, df_se = _mean_se(d_forced)
    eff, eff_se = _mean_se(efficient)
    denom = max(len(efficient), 1)
    return AdverseSelectionSummary(
        n_scenarios=n, n_auctions=len(efficient), wins_scaled=len(d_scaled), wins_forced=len(d_forced),
        deficit_scaled=ds, deficit_scaled_se=ds_se, deficit_forced=dfo, deficit_forced_se=df_se,
        win_rate_scaled=len(d_scaled) / denom, win_rate_forced=len(d_forced) / denom,
        efficient_rate=eff, efficient_rate_se=eff_se,
    )


def check_feasibility(scenarios: Iterable[Scenario], mechanisms=("mtepvisa", "epvisa", "pvisa"),
                      n_samples: int = DEFAULT_MC_SAMPLES) -> int:
    """Total count of winning tasks finishing after their true deadline."""
    mechs = [get_mechanism(m, n_samples=n_samples) for m in mechanisms]
    bad = 0
    for s in scenarios:
        table = PairTable(s)
        bids = truthful_bids(s, n_samples, table=table)
        for mech in mechs:
            bad += deadline_violations(mech.clear(mech.prepare(s, bids, table), bids), s)
    return bad


__all__ = [
    "DeviationReport", "StrategyProofnessSummary", "IRReport", "AdverseSelectionSummary",
    "check_strategy_proofness", "summarize_deviations", "check_individual_rationality",
    "count_ir_violations", "check_adverse_selection", "check_feasibility", "scenario_batch"
]

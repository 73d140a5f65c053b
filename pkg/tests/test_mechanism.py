import numpy as np
import pytest

from pvsync.distributions import Distribution
from pvsync.errors import InfeasibleLinkError
from pvsync.link import dt_compute_delay, dt_upload_delay, link_budget
from pvsync.market import MarKind, ScenarioConfig, sample_scenario
from pvsync.mechanism import (
    AuctionOutcome,
    BidSet,
    get_mechanism,
    ir_violations,
    run_epvisa,
    run_mtepvisa,
    run_pvisa,
    social_surplus,
    truthful_bids,
)
from pvsync.mechanism.estimates import functional_expected_values
from pvsync.simulator import deadline_violations
from pvsync.sync import PairTable, TaskTiming, total_delay

from builders import MB, build_scenario, simple_tasks

N_SAMPLES = 32


# ---------------------------------------------------------------------------
# Exhaustive oracle: loops over every candidate with the scalar formula API
# ---------------------------------------------------------------------------


def _timings(s, i):
    av, rsu = s.av(i), s.rsu(0)
    lb = link_budget(av, rsu, s.channel)
    out = []
    for task in av.tasks:
        try:
            t = dt_upload_delay(task, lb.uplink_rate_Ru)
        except InfeasibleLinkError:
            return lb, None
        out.append(TaskTiming(task, t, dt_compute_delay(task, rsu)))
    return lb, out


def _pair(s, i, k):
    """(feasible, display duration, per-time value) for AV i with MAR k, by brute force."""
    lb, timings = _timings(s, i)
    if timings is None or any(t.slack < 0 for t in timings):
        return False, 0.0, 0.0
    mar, rsu = s.mar(k), s.rsu(0)
    G = float(s.gen.score_G[i, 0, k])
    evs = [total_delay(t, lb, mar, i, rsu, G, theta_exponent=s.gen.theta_exponent) for t in timings]
    feasible = all(e.feasible for e in evs)
    m = sum(e.match_quality_m for e in evs) / len(evs)
    u = s.fleet.value[i] * m * s.fleet.match_shock[i] * s.mars.match_shock[i, k]
    return feasible, sum(e.total_delay_T for e in evs), u


def _dt_ok(s, i):
    timings = _timings(s, i)[1]
    return timings is not None and all(t.slack >= 0 for t in timings)


def oracle(s, bids, estimates, alphas, kind):
    decide = s.collapsed() if kind == "epvisa" else s
    I, K = s.n_avs, s.n_mars
    avs = [i for i in range(I) if _dt_ok(decide, i)]
    if not avs:
        return None, 0.0, None, 0.0, 0.0
    if kind == "pvisa":
        score = {i: bids.av_price[i] for i in avs}
    else:
        score = {i: bids.av_price[i] + estimates[i] for i in avs}
    best = max(score.values())
    w = min(i for i in avs if score[i] == best)
    rest = [i for i in avs if i != w]
    if not rest:
        pay_av = 0.0
    else:
        top = max(score[i] for i in rest)
        r = min(i for i in rest if score[i] == top)
        pay_av = bids.av_price[r] if kind == "pvisa" else max(0.0, score[r] - estimates[w])

    feas = {k: _pair(decide, w, k)[0] for k in range(K)}
    row = bids.mar_price[w]
    func = 0
    cands = [k for k in range(K) if feas[k]]
    winner, rate = None, 0.0
    if kind == "pvisa":
        if cands:
            b = max(row[k] for k in cands)
            winner = min(k for k in cands if row[k] == b)
            others = [row[k] for k in cands if k != winner]
            rate = max(others) if others else 0.0
    else:
        alpha = alphas[w]
        info = [k for k in cands if k != func]
        for k in info:
            comp = [row[j] for j in info if j != k]
            c = max(comp) if comp else 0.0
            if row[k] > alpha * c:
                winner, rate = k, alpha * c
                break
        if winner is None and feas[func]:
            winner, rate = func, row[func]
    v = s.fleet.value[w]
    if winner is None:
        return w, pay_av, None, 0.0, v
    _, duration, u = _pair(s, w, winner)
    weight = s.gamma if winner == func else 1.0
    return w, pay_av, winner, duration * rate, v + duration * weight * u


def _check_against_oracle(s, bids, kind):
    mech = get_mechanism(kind, n_samples=N_SAMPLES)
    state = mech.prepare(s, bids)
    out = mech.clear(state, bids)
    w, pay_av, k, pay_mar, total = oracle(s, bids, state.estimates, state.alphas, kind)
    assert out.winner_av == w
    assert out.pay_av == pay_av
    assert out.winner_mar == k
    assert out.pay_mar == pytest.approx(pay_mar, rel=1e-12, abs=1e-300)
    assert out.surplus_total == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("kind", ["mtepvisa", "epvisa", "pvisa"])
def test_small_markets_match_exhaustive_oracle(kind):
    rng = np.random.default_rng(3)
    n = 0
    for I in range(1, 6):
        for K in range(1, 6):
            for seed in range(4):
                cfg = ScenarioConfig(n_avs=I, n_mars=K, n_tasks=1 + seed % 3)
                s = sample_scenario(cfg, 1000 * I + 10 * K + seed)
                bids = truthful_bids(s, N_SAMPLES)
                _check_against_oracle(s, bids, kind)
                # arbitrary bids, coarse so that ties happen
                rand = BidSet(np.round(rng.uniform(0, 1, I), 1), bids.av_deadlines,
                              np.round(rng.uniform(0, 1, (I, K)), 1))
                _check_against_oracle(s, rand, kind)
                n += 2
    assert n == 200


def test_default_seed7_matches_oracle():
    s = sample_scenario(ScenarioConfig(), 7)
    _check_against_oracle(s, truthful_bids(s, N_SAMPLES), "mtepvisa")


# ---------------------------------------------------------------------------
# Mechanism behaviour
# ---------------------------------------------------------------------------


def test_only_feasible_pair_wins():
    tasks = [[(0.1 * MB, 50.0, 1.0)], [(0.1 * MB, 50.0, 1e-6)]]
    mars = [(50 * MB, 60.0), (50 * MB, 60.0), (0.01 * MB, 60.0)]
    s = build_scenario([0.3, 0.9], tasks, mars=mars)
    t = PairTable(s)
    assert t.pair_feasible.tolist() == [[False, False, True], [False, False, False]]
    out = run_mtepvisa(s)
    assert out.winner_av == 0 and out.winner_mar == 2
    assert out.pay_av == 0.0 and out.pay_mar == 0.0


def test_infeasible_market_has_no_winner():
    s = sample_scenario(ScenarioConfig(n_avs=5, task_deadline_s=Distribution.constant(1e-6)), 1)
    for run in (run_mtepvisa, run_epvisa, run_pvisa):
        out = run(s)
        assert out.winner_av is None and out.winner_mar is None
        assert out.surplus_total == 0.0 and out.revenue == 0.0
        assert social_surplus(out, s) == 0.0


def test_argmax_invariance_under_common_scaling():
    mech = get_mechanism("mtepvisa", n_samples=N_SAMPLES)
    for seed in range(20):
        s = sample_scenario(ScenarioConfig(n_avs=10), seed)
        bids = truthful_bids(s, N_SAMPLES)
        state = mech.prepare(s, bids)
        w, _, _ = mech.clear_physical(state, bids.av_price)
        for c in (0.1, 3.0, 17.0):
            state.estimates = state.estimates * c
            w2, _, _ = mech.clear_physical(state, bids.av_price * c)
            state.estimates = state.estimates / c
            assert w2 == w


def test_pvisa_examples():
    s = build_scenario([0.9, 0.2], [[(0.1 * MB, 50.0, 1.0)], [(0.1 * MB, 50.0, 0.5)]])
    out = run_pvisa(s)
    assert out.winner_av == 0 and out.pay_av == 0.2
    single = build_scenario([0.4], [[(0.1 * MB, 50.0, 1.0)]])
    out = run_pvisa(single)
    assert out.winner_av == 0 and out.pay_av == 0.0
    assert run_mtepvisa(single).pay_av == 0.0


def test_pvisa_loses_when_top_value_has_least_slack():
    tasks = [[(0.3 * MB, 100.0, 0.75)] * 3, [(0.3 * MB, 100.0, 1.1)] * 3]
    s = build_scenario([0.95, 0.6], tasks, mars=[(0.05 * MB, 60.0)] * 5)
    p, m = run_pvisa(s), run_mtepvisa(s)
    assert p.winner_av == 0 and m.winner_av == 1
    assert p.surplus_total <= m.surplus_total


def test_pvisa_winner_is_argmax_bid():
    for seed in range(30):
        s = sample_scenario(ScenarioConfig(), seed)
        t = PairTable(s)
        out = run_pvisa(s)
        v = np.where(t.dt_feasible, s.fleet.value, -np.inf)
        assert out.winner_av == int(np.argmax(v))


def test_epvisa_identical_for_single_task():
    for seed in range(10):
        s = sample_scenario(ScenarioConfig(n_tasks=1), seed)
        a, b = run_mtepvisa(s), run_epvisa(s)
        da, db = a.to_dict(), b.to_dict()
        da.pop("mechanism"), db.pop("mechanism")
        assert da == db


def test_epvisa_not_better_on_average():
    tot = np.zeros(2)
    mt, ep = get_mechanism("mtepvisa"), get_mechanism("epvisa")
    for seed in range(100):
        s = sample_scenario(ScenarioConfig(n_tasks=5), seed)
        t = PairTable(s)
        bids = truthful_bids(s, table=t)
        tot += [mt.clear(mt.prepare(s, bids, t), bids).surplus_total,
                ep.clear(ep.prepare(s, bids, t), bids).surplus_total]
    assert tot[1] <= tot[0]


def test_social_surplus_hand_example():
    s = build_scenario([0.8], simple_tasks(1), gamma=1.0)
    out = AuctionOutcome("mtepvisa", winner_av=0, winner_mar=1, display_duration=0.688, surplus_dt=0.8,
                         surplus_ar_infotainment=5.0 * 0.8)
    assert social_surplus(out, s) == pytest.approx(3.552, rel=1e-14)
    assert social_surplus(AuctionOutcome("x"), s) == 0.0
    dt_only = AuctionOutcome("x", winner_av=0, surplus_dt=0.8)
    assert social_surplus(dt_only, s) == 0.8


def test_functional_surplus_weighted_by_gamma():
    s = build_scenario([0.8], simple_tasks(1), gamma=2.5)
    out = AuctionOutcome("x", winner_av=0, winner_mar=0, display_duration=2.0, surplus_dt=0.8,
                         surplus_ar_functional=1.0)
    assert social_surplus(out, s) == pytest.approx(0.8 + 2.0 * 2.5 * 1.0)


def test_truthful_bids():
    s = sample_scenario(ScenarioConfig(n_avs=6, n_mars=5), 2)
    t = PairTable(s)
    b = truthful_bids(s, N_SAMPLES, table=t)
    assert np.array_equal(b.av_price, s.fleet.value)
    assert np.array_equal(b.av_deadlines, s.fleet.task_deadline)
    info = np.flatnonzero(s.mars.kind == MarKind.INFOTAINMENT)
    u = s.fleet.value[:, None] * t.match_mean * s.fleet.match_shock[:, None] * s.mars.match_shock
    np.testing.assert_allclose(b.mar_price[:, info], np.where(t.pair_feasible, u, 0.0)[:, info], rtol=1e-14)
    np.testing.assert_array_equal(b.mar_price[:, 0],
                                  np.where(t.dt_feasible, functional_expected_values(t, N_SAMPLES), 0.0))


def test_truthful_infotainment_bid_is_value_times_match():
    # m = G * slack * R_d / s_AR; choose s_AR so that m = 2, then v = 0.5 bids 1.0
    s0 = build_scenario([0.5], [[(1.0, 0.0, 1.0)]], mars=[(1e6, 0.0), (1e6, 0.0)], G=0.5)
    t0 = PairTable(s0)
    s_ar = 0.5 * t0.slack[0, 0] * t0.rate_d[0] / 2.0
    s = build_scenario([0.5], [[(1.0, 0.0, 1.0)]], mars=[(s_ar, 0.0), (s_ar, 0.0)], G=0.5)
    t = PairTable(s)
    assert t.pair_feasible[0, 1]
    assert t.match_mean[0, 1] == pytest.approx(2.0, rel=1e-12)
    b = truthful_bids(s, N_SAMPLES, table=t)
    assert b.mar_price[0, 1] == pytest.approx(1.0, rel=1e-12)


def test_outcome_invariants_over_many_scenarios():
    cfg = ScenarioConfig(n_avs=10, n_mars=8)
    for name in ("mtepvisa", "epvisa", "pvisa"):
        mech = get_mechanism(name, n_samples=N_SAMPLES)
        for seed in range(60):
            s = sample_scenario(cfg, seed)
            out = mech.run(s)
            assert ir_violations(out, s) == []
            assert deadline_violations(out, s) == 0
            assert out.alpha >= 1
            assert out.pay_av >= 0 and out.pay_mar >= 0
            if out.winner_av is not None:
                assert out.pay_av <= s.fleet.value[out.winner_av]
                scores = [x for x in out.scores if x is not None]
                assert out.scores[out.winner_av] == max(scores)


def test_ir_detector_flags_overpayment():
    s = build_scenario([0.5, 0.4], simple_tasks(2))
    good = AuctionOutcome("x", winner_av=0, pay_av=0.4)
    bad = AuctionOutcome("x", winner_av=0, pay_av=0.6)
    assert ir_violations(good, s) == []
    assert len(ir_violations(bad, s)) == 1
    mar_bad = AuctionOutcome("x", winner_av=0, winner_mar=1, display_duration=1.0, pay_mar=2.0,
                             surplus_ar_infotainment=1.0)
    assert len(ir_violations(mar_bad, s)) == 1
    assert ir_violations(AuctionOutcome("x"), s) == []


def test_outcome_dict_has_all_fields():
    d = run_mtepvisa(sample_scenario(ScenarioConfig(), 7)).to_dict()
    for key in ("winner_av", "pay_av", "winner_mar", "pay_mar", "per_task_delays", "surplus_dt",
                "surplus_ar_functional", "surplus_ar_infotainment", "surplus_total", "alpha", "scores",
                "revenue", "display_duration"):
        assert key in d


def test_unknown_mechanism():
    with pytest.raises(ValueError):
        get_mechanism("vickrey-2000")

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvsync.errors import InfeasibleLinkError
from pvsync.link import LinkBudget, dt_compute_delay, dt_upload_delay, link_budget
from pvsync.market import DtTask, MarKind, MarProfile, RsuProfile, ScenarioConfig, sample_scenario
from pvsync.sync import (
    BRANCH_H0_LINEAR,
    BRANCH_H0_ZERO,
    BRANCH_REGULAR,
    PairTable,
    TaskTiming,
    ar_compute_delay,
    ar_transmission_delay,
    match_quality,
    match_quality_kernel,
    recommendation_count,
    total_delay,
)

RSU = RsuProfile(0, 20e6, 20e6, 3.6e9, 19e9, 3.0, 1.0)
LINK = LinkBudget(8e6, 4e7)


def _mar(h, s=2e6, e=125.0):
    return MarProfile(1, MarKind.INFOTAINMENT, s, e, (h,))


def _timing(slack, t=0.3, l=0.2):
    return TaskTiming(DtTask(1e6, 100.0, t + l + slack), t, l)


def test_recommendation_count_examples():
    assert recommendation_count(_timing(0.5), LINK, _mar(1)).count == pytest.approx(10.0, rel=1e-14)
    assert recommendation_count(_timing(0.0), LINK, _mar(1)).count == 0.0
    a = recommendation_count(_timing(0.5), LINK, _mar(1, s=2e6)).count
    b = recommendation_count(_timing(0.5), LINK, _mar(1, s=4e6)).count
    assert b == pytest.approx(a / 2, rel=1e-15)


def test_negative_slack_flags_infeasible():
    lc = recommendation_count(_timing(-0.1), LINK, _mar(1))
    assert lc.count == 0.0 and not lc.feasible


def test_match_quality_examples():
    assert match_quality(_timing(0.5), LINK, _mar(2), 0, 0.0) == 0.0
    assert match_quality(_timing(0.5), LINK, _mar(2), 0, 0.5) == pytest.approx(5.0, rel=1e-14)
    assert match_quality(_timing(0.5), LINK, _mar(4), 0, 0.5) == pytest.approx(5.0, rel=1e-14)


def test_match_quality_h0_branches():
    assert match_quality(_timing(0.5), LINK, _mar(0), 0, 0.5, 1.0) == pytest.approx(5.0, rel=1e-14)
    assert match_quality(_timing(0.5), LINK, _mar(0), 0, 0.5, 2.0) == 0.0
    ev = total_delay(_timing(0.5), LINK, _mar(0), 0, RSU, 0.5, theta_exponent=2.0)
    assert ev.branch == BRANCH_H0_ZERO
    assert total_delay(_timing(0.5), LINK, _mar(0), 0, RSU, 0.5).branch == BRANCH_H0_LINEAR
    assert total_delay(_timing(0.5), LINK, _mar(3), 0, RSU, 0.5).branch == BRANCH_REGULAR


def test_match_quality_beta2():
    # theta(0.5 * 10 / 2) * 2 with theta(x) = x^2
    assert match_quality(_timing(0.5), LINK, _mar(2), 0, 0.5, 2.0) == pytest.approx(12.5, rel=1e-14)


def test_ar_transmission_examples():
    assert ar_transmission_delay(_timing(0.5), LINK, _mar(2), 0, 0.0) == 2e6 / 4e7
    assert ar_transmission_delay(_timing(0.5), LINK, _mar(2), 0, 0.5) == pytest.approx(0.175, rel=1e-14)
    fast = LinkBudget(8e6, 8e7)
    assert ar_transmission_delay(_timing(0.5), fast, _mar(2), 0, 0.0) == pytest.approx(
        ar_transmission_delay(_timing(0.5), LINK, _mar(2), 0, 0.0) / 2, rel=1e-15)
    with pytest.raises(InfeasibleLinkError):
        ar_transmission_delay(_timing(0.5), LinkBudget(8e6, 0.0), _mar(2), 0, 0.5)


def test_ar_compute_examples():
    assert ar_compute_delay(_timing(0.5), LINK, _mar(2), 0, RSU, 0.0) == pytest.approx(0.01316, abs=1e-5)
    assert ar_compute_delay(_timing(0.5), LINK, _mar(2, e=0.0), 0, RSU, 0.5) == 0.0
    # layer term c = 0.5*10/2 = 2.5 at G=0.5, doubled at G=1
    base = ar_compute_delay(_timing(0.5), LINK, _mar(2), 0, RSU, 0.5)
    doubled = ar_compute_delay(_timing(0.5), LINK, _mar(2), 0, RSU, 1.0)
    c = 2.5
    assert doubled / base == pytest.approx((2 * c + 1) / (c + 1), rel=1e-14)


def test_total_delay_examples():
    ev = total_delay(_timing(0.5), LINK, _mar(2), 0, RSU, 0.5, alloc=(0, 0))
    assert ev.total_delay_T == 0.0 and ev.feasible
    late = TaskTiming(DtTask(1e6, 100.0, 1.0), 0.7, 0.5)
    assert not total_delay(late, LINK, _mar(2), 0, RSU, 0.5, alloc=(1, 0)).feasible
    # components 0.3 + 0.2 + 0.175 + l_ar with deadline 1.0
    ev = total_delay(_timing(0.5), LINK, _mar(2), 0, RSU, 0.5)
    assert ev.t_ar == pytest.approx(0.175)
    l_ar = 3.5 * 2e6 * 125 / 19e9
    assert ev.l_ar == pytest.approx(l_ar, rel=1e-14)
    assert ev.total_delay_T == pytest.approx(0.3 + 0.2 + 0.175 + l_ar, rel=1e-14)
    assert ev.feasible
    # rounded components from a hand sum: 0.688 s
    assert 0.3 + 0.2 + 0.175 + 0.013 == pytest.approx(0.688)


def test_total_delay_rejects_non_binary_alloc():
    with pytest.raises(Exception):
        total_delay(_timing(0.5), LINK, _mar(2), 0, RSU, 0.5, alloc=(2, 0))


def test_pair_table_matches_scalar_api():
    s = sample_scenario(ScenarioConfig(n_avs=6, n_mars=5, n_tasks=3), 3)
    t = PairTable(s)
    rsu = s.rsu(0)
    for i in range(s.n_avs):
        av = s.av(i)
        lb = link_budget(av, rsu, s.channel)
        assert t.rate_u[i] == pytest.approx(lb.uplink_rate_Ru, rel=1e-14)
        assert t.rate_d[i] == pytest.approx(lb.downlink_rate_Rd, rel=1e-14)
        for k in range(s.n_mars):
            mar = s.mar(k)
            G = float(s.gen.score_G[i, 0, k])
            ok = True
            for n, task in enumerate(av.tasks):
                timing = TaskTiming(task, dt_upload_delay(task, lb.uplink_rate_Ru), dt_compute_delay(task, rsu))
                ev = total_delay(timing, lb, mar, i, rsu, G)
                assert t.total[i, k, n] == pytest.approx(ev.total_delay_T, rel=1e-12)
                assert t.match[i, k, n] == pytest.approx(ev.match_quality_m, rel=1e-12, abs=1e-300)
                assert t.t_ar[i, k, n] == pytest.approx(ev.t_ar, rel=1e-12)
                assert t.l_ar[i, k, n] == pytest.approx(ev.l_ar, rel=1e-12, abs=1e-300)
                ok &= ev.feasible and timing.slack >= 0
            assert bool(t.pair_feasible[i, k]) == ok
            m_avg = np.mean(t.match[i, k, : len(av.tasks)])
            assert t.match_mean[i, k] == pytest.approx(m_avg, rel=1e-12, abs=1e-300)


def test_padded_tasks_ignored():
    from builders import build_scenario

    s = build_scenario([0.5, 0.6], [[(1e6, 100.0, 1.0)], [(1e6, 100.0, 1.0), (1e6, 100.0, 1.0)]])
    t = PairTable(s)
    assert t.total[0, :, 1].tolist() == [0.0] * s.n_mars
    assert t.n_tasks.tolist() == [1, 2]
    assert t.dt_duration[1] == pytest.approx(2 * t.dt_duration[0])


# -- properties ---------------------------------------------------------------

G_ = st.floats(0, 1)
slack_ = st.floats(0, 2)
h_ = st.integers(0, 10)
beta_ = st.floats(1, 3)


@given(G=G_, G2=G_, slack=slack_, slack2=slack_, h=h_, beta=beta_)
def test_match_quality_monotone(G, G2, slack, slack2, h, beta):
    lo_G, hi_G = sorted((G, G2))
    lo_s, hi_s = sorted((slack, slack2))
    mar = _mar(h)
    m = match_quality(_timing(lo_s), LINK, mar, 0, lo_G, beta)
    assert match_quality(_timing(lo_s), LINK, mar, 0, hi_G, beta) >= m
    assert match_quality(_timing(hi_s), LINK, mar, 0, lo_G, beta) >= m


@given(G=G_, slack=slack_, h=st.integers(1, 10))
def test_match_quality_linear_form(G, slack, h):
    timing = _timing(slack)
    count = max(timing.slack, 0.0) * LINK.downlink_rate_Rd / 2e6
    m = match_quality(timing, LINK, _mar(h), 0, G, 1.0)
    ref = G * count
    assert m == pytest.approx(ref, rel=1e-12, abs=1e-300)


@given(G=G_, slack=slack_, h=h_, e=st.floats(0, 125))
def test_ar_delay_floor(G, slack, h, e):
    mar = _mar(h, e=e)
    assert ar_transmission_delay(_timing(slack), LINK, mar, 0, G) >= mar.ar_size_s / LINK.downlink_rate_Rd
    assert ar_compute_delay(_timing(slack), LINK, mar, 0, RSU, G) >= mar.ar_size_s * e / RSU.gpu_freq_fG * (1 - 1e-15)


@given(seed=st.integers(0, 2**32), extra=st.floats(0, 0.5))
def test_feasibility_monotone_in_deadline(seed, extra):
    s = sample_scenario(ScenarioConfig(n_avs=4, n_mars=4, n_tasks=3), seed)
    before = PairTable(s).pair_feasible
    after = PairTable(s.with_deadlines(np.asarray(s.fleet.task_deadline) + extra)).pair_feasible
    assert np.all(after[before])


@given(G=G_, count=st.floats(0, 100), h=h_, beta=beta_)
def test_match_kernel_nonnegative(G, count, h, beta):
    m = float(match_quality_kernel(G, count, h, beta))
    assert m >= 0 and np.isfinite(m)
    if G == 0:
        assert m == 0

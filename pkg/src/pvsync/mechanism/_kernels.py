"""Compiled inner loop for the per-AV virtual-surplus estimate.

Mirrors the array code in :mod:`.estimates` draw for draw; the numpy path is
kept as the readable reference and the tests hold the two together.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def surplus_estimates(hits_base, cache, common, idio, value, rate, G, size, per_layer,
                      dt_duration, n_tasks, total, moment, mean_slack, smin, dt_feasible,
                      beta, gamma, func, has_info, include_functional):
    I = value.shape[0]
    S, K = hits_base.shape
    out_mean = np.zeros(I)
    out_se = np.zeros(I)
    out_alpha = np.ones(I)
    # per draw: best infotainment value and its weighted surplus, runner-up
    # infotainment value, and the functional MAR's value/surplus/eligibility
    top_val = np.empty(S)
    top_sur = np.empty(S)
    second = np.empty(S)
    f_sur = np.zeros(S)
    f_ok = np.zeros(S, dtype=np.bool_)
    surplus = np.empty(S)
    # hit counts take few distinct values, so tabulate per (h, k) first
    H = 0
    for s in range(S):
        for k in range(K):
            H = max(H, hits_base[s, k])
    m_tab = np.empty((H + 1, K))
    d_tab = np.empty((H + 1, K))
    ok_tab = np.zeros((H + 1, K), dtype=np.bool_)
    for i in range(I):
        if not dt_feasible[i]:
            continue
        for h in range(min(H, cache[i]) + 1):
            for k in range(K):
                coef = G[i, k] * rate[i] / (size[k] * max(h, 1))
                if h > 0:
                    m = (coef if beta == 1.0 else coef ** beta) * h * moment[i]
                elif beta == 1.0:
                    m = G[i, k] * rate[i] * mean_slack[i] / size[k]
                else:
                    m = 0.0
                if not math.isfinite(m):
                    m = 0.0
                pl = per_layer[i, k]
                d = dt_duration[i] + pl * (coef * total[i] + n_tasks[i])
                margin = 1.0 - coef * pl
                m_tab[h, k] = value[i] * m
                d_tab[h, k] = d
                ok_tab[h, k] = margin > 0 and smin[i] * margin >= pl and math.isfinite(d)
        sum_func = 0.0
        sum_second = 0.0
        ci = cache[i]
        for s in range(S):
            top1 = -np.inf
            top2 = -np.inf
            sur1 = 0.0
            f_ok[s] = False
            if func >= 0:
                h = min(hits_base[s, func], ci)
                val = m_tab[h, func] * common[s] * idio[s, func]
                sum_func += val
                f_ok[s] = ok_tab[h, func]
                f_sur[s] = gamma * d_tab[h, func] * val if f_ok[s] else 0.0
            for k in range(K):
                if k == func:
                    continue
                h = min(hits_base[s, k], ci)
                if ok_tab[h, k]:
                    val = m_tab[h, k] * common[s] * idio[s, k]
                    if val > top1:
                        top2 = top1
                        top1 = val
                        sur1 = d_tab[h, k] * val
                    elif val > top2:
                        top2 = val
            top_val[s] = top1
            top_sur[s] = sur1
            second[s] = top2
            sum_second += top2 if math.isfinite(top2) else 0.0

        alpha = 1.0
        func_bid = 0.0
        if func >= 0:
            func_bid = sum_func / S
            if has_info and gamma != 0 and sum_second > 0:
                alpha = max(1.0, gamma * func_bid / (sum_second / S))
        out_alpha[i] = alpha

        acc = 0.0
        for s in range(S):
            comp = second[s]
            if include_functional and f_ok[s]:
                comp = max(comp, func_bid)
            if not math.isfinite(comp):
                comp = 0.0
            x = 0.0
            if math.isfinite(top_val[s]) and top_val[s] > alpha * comp:
                x = top_sur[s]
            elif f_ok[s]:
                x = f_sur[s]
            surplus[s] = x
            acc += x
        mu = acc / S
        out_mean[i] = mu
        if S > 1:
            ss = 0.0
            for s in range(S):
                ss += (surplus[s] - mu) ** 2
            out_se[i] = math.sqrt(ss / (S - 1)) / math.sqrt(S)
    return out_mean, out_se, out_alpha


@njit(cache=True)
def mean_values(hits_base, cache, common, idio, value, rate, G, size, moment, mean_slack, beta):
    """Per-AV sample mean of one MAR's value; ``hits_base``/``idio`` are (S,), ``G`` is (I,)."""
    I = value.shape[0]
    S = hits_base.shape[0]
    out = np.zeros(I)
    H = 0
    for s in range(S):
        H = max(H, hits_base[s])
    shock = np.zeros(H + 1)  # summed common * idio shock per hit count
    for s in range(S):
        shock[hits_base[s]] += common[s] * idio[s]
    for i in range(I):
        acc = 0.0
        for h0 in range(H + 1):
            if shock[h0] == 0.0:
                continue
            h = min(h0, cache[i])
            coef = G[i] * rate[i] / (size * max(h, 1))
            if h > 0:
                m = (coef if beta == 1.0 else coef ** beta) * h * moment[i]
            elif beta == 1.0:
                m = G[i] * rate[i] * mean_slack[i] / size
            else:
                m = 0.0
            if not math.isfinite(m):
                m = 0.0
            acc += value[i] * m * shock[h0]
        out[i] = acc / S
    return out

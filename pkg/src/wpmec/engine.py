"""Compiled simulation core.

One jitted function advances a whole run: per-slot exclusion and time
allocation, capped rates, device-side admission/discard, FIFO batch ledger
with head-of-line ages, queue recursions, the partial-feedback snapshot store,
metrics, and optional per-slot bound assertions. Formulas mirror the pure
functions in model/scheduler/environment expression-for-expression so that a
run here and a run composed from those functions agree to float rounding
(tested in the suite).

Policy codes: 0 complete feedback, 1 partial feedback, 2 proportional fair,
3 age-blind. Bound-check modes: 0 off, 1 record violations, 2 stop at first.
Violation kinds: 0 device backlog, 1 virtual backlog, 2 AP backlog, 3 age,
4 stale-q error, 5 stale-z error.
"""

import math

import numpy as np
from numba import njit

from .scheduler import _solve_time_split  # noqa: F401 (re-exported for tests)
from .numerics import LN2, xi

POLICY_PCF = 0
POLICY_PPF = 1
POLICY_PF = 2
POLICY_HDO = 3

CHECK_OFF = 0
CHECK_RECORD = 1
CHECK_ASSERT = 2

VIOL_NONE = -1
VIOL_Q = 0
VIOL_Z = 1
VIOL_S = 2
VIOL_AGE = 3
VIOL_STALE_Q = 4
VIOL_STALE_Z = 5

_BOUND_SLACK = 1e-9  # float tolerance on hard-bound comparisons

# ledger crumbs below this mass are absorbed during consumption so that
# float residue from batch splitting cannot pin a stale head-of-line age
_CRUMB = 1e-12


@njit(cache=True)
def _consume(sizes, slots, head, tail, amount):
    """Remove `amount` from the ledger head; returns the new head index."""
    rem = amount
    while rem > 0.0 and head < tail:
        if sizes[head] <= rem + _CRUMB:
            rem -= sizes[head]
            head += 1
        else:
            sizes[head] -= rem
            rem = 0.0
    return head


@njit(cache=True)
def run_core(
    horizon, n, policy, check_mode,
    # physics
    bandwidth_hz, noise_w, ap_power_w, slot_seconds, unit_scale,
    harvest_eff, a_max, c_max, epsilon,
    # control
    v_param, p_price, never_drop, sigma, m_interval,
    pf_window, pf_age_limit,
    # pre-drawn environment, each (horizon, n)
    gains, arrivals, proc,
    # per-device bounds (inf disables a check)
    q_bound, z_bound, s_bound, g_bound, stale_q_bound, stale_z_bound,
    warmup, want_trace,
):
    q = np.zeros(n)
    z = np.zeros(n)
    s = np.zeros(n)
    q_snap = np.zeros(n)
    z_snap = np.zeros(n)
    snap_age = np.ones(n, dtype=np.int64)
    pf_avg = np.full(n, 1e-9)

    cap = horizon + 1
    led_size = np.zeros((n, cap))
    led_slot = np.zeros((n, cap), dtype=np.int64)
    led_head = np.zeros(n, dtype=np.int64)
    led_tail = np.zeros(n, dtype=np.int64)

    # metrics
    delivered_pw = np.zeros(n)
    admitted_pw = np.zeros(n)
    utility_sum = 0.0
    total_dropped = 0.0
    max_age = np.zeros(n, dtype=np.int64)
    max_q = np.zeros(n)
    max_z = np.zeros(n)
    max_s = np.zeros(n)
    max_stat_resid = 0.0
    max_dev_resid = 0.0
    max_budget_resid = 0.0
    solver_iter_max = 0

    viol_count = np.zeros(6, dtype=np.int64)
    fv_slot = np.int64(-1)
    fv_kind = np.int64(-1)
    fv_dev = np.int64(-1)
    fv_value = 0.0
    fv_bound = 0.0

    tr = horizon if want_trace == 1 else 1
    trace_mu0 = np.zeros(tr)
    trace_q = np.zeros((tr, n))
    trace_z = np.zeros((tr, n))
    trace_s = np.zeros((tr, n))
    trace_age = np.zeros((tr, n), dtype=np.int64)
    trace_mu = np.zeros((tr, n))
    trace_rate = np.zeros((tr, n))
    trace_admit = np.zeros((tr, n))
    trace_drop = np.zeros((tr, n))
    trace_off = np.zeros((tr, n))

    w_buf = np.zeros(n)
    idx_buf = np.zeros(n, dtype=np.int64)
    d_buf = np.zeros(n)
    mu = np.zeros(n)
    rate = np.zeros(n)
    admit = np.zeros(n)
    drop = np.zeros(n)
    delta = np.zeros(n)

    stopped = False
    for t in range(horizon):
        # ---- state entering slot t: maxima and hard-bound checks
        age_now = np.zeros(n, dtype=np.int64)
        for i in range(n):
            if led_head[i] < led_tail[i]:
                age_now[i] = t - led_slot[i, led_head[i]]
            if q[i] > max_q[i]:
                max_q[i] = q[i]
            if z[i] > max_z[i]:
                max_z[i] = z[i]
            if s[i] > max_s[i]:
                max_s[i] = s[i]
            if age_now[i] > max_age[i]:
                max_age[i] = age_now[i]
        if check_mode != CHECK_OFF:
            for i in range(n):
                for kind in range(4):
                    if kind == VIOL_Q:
                        val, bnd = q[i], q_bound[i]
                    elif kind == VIOL_Z:
                        val, bnd = z[i], z_bound[i]
                    elif kind == VIOL_S:
                        val, bnd = s[i], s_bound[i]
                    else:
                        val, bnd = float(age_now[i]), g_bound[i]
                    slack = 0.0 if kind == VIOL_AGE else _BOUND_SLACK
                    if val > bnd + slack:
                        viol_count[kind] += 1
                        if fv_slot < 0:
                            fv_slot, fv_kind, fv_dev = np.int64(t), np.int64(kind), np.int64(i)
                            fv_value, fv_bound = val, bnd
                        if check_mode == CHECK_ASSERT:
                            stopped = True
            if stopped:
                break

        # ---- observation
        for i in range(n):
            g = gains[t, i]
            delta[i] = harvest_eff[i] * ap_power_w * g * g / noise_w
        if policy == POLICY_PCF:
            q_obs = q
            z_obs = z
        else:
            q_obs = q_snap
            z_obs = z_snap
            if policy == POLICY_PPF and check_mode != CHECK_OFF:
                for i in range(n):
                    for kind in range(VIOL_STALE_Q, VIOL_STALE_Z + 1):
                        if kind == VIOL_STALE_Q:
                            val, bnd = q_snap[i] - q[i], stale_q_bound[i]
                        else:
                            val, bnd = z_snap[i] - z[i], stale_z_bound[i]
                        if val > bnd + _BOUND_SLACK:
                            viol_count[kind] += 1
                            if fv_slot < 0:
                                fv_slot, fv_kind, fv_dev = np.int64(t), np.int64(kind), np.int64(i)
                                fv_value, fv_bound = val, bnd
                            if check_mode == CHECK_ASSERT:
                                stopped = True
                if stopped:
                    break

        # ---- active set and weights
        n_act = 0
        if policy == POLICY_PF:
            for i in range(n):
                if delta[i] > 0.0:
                    base = pf_avg[i]
                    if base < 1e-9:
                        base = 1e-9
                    idx_buf[n_act] = i
                    w_buf[n_act] = bandwidth_hz / base
                    d_buf[n_act] = delta[i]
                    n_act += 1
        else:
            for i in range(n):
                if policy == POLICY_HDO:
                    w = (q_obs[i] - s[i]) * bandwidth_hz
                else:
                    w = (q_obs[i] + z_obs[i] / p_price - s[i]) * bandwidth_hz
                if w > 0.0 and delta[i] > 0.0:
                    idx_buf[n_act] = i
                    w_buf[n_act] = w
                    d_buf[n_act] = delta[i]
                    n_act += 1

        # ---- time allocation
        mu0 = 0.0
        for i in range(n):
            mu[i] = 0.0
        if n_act > 0:
            lam, mu0, mu_act, stat_resid, iters = _solve_time_split(
                w_buf[:n_act].copy(), d_buf[:n_act].copy(), sigma
            )
            budget = mu0
            for j in range(n_act):
                mu[idx_buf[j]] = mu_act[j]
                budget += mu_act[j]
            rel = stat_resid / (1.0 + lam)
            if rel > max_stat_resid:
                max_stat_resid = rel
            b_err = abs(budget - 1.0)
            if b_err > max_budget_resid:
                max_budget_resid = b_err
            if iters > solver_iter_max:
                solver_iter_max = iters
            for j in range(n_act):
                if mu_act[j] > 0.0:
                    r_chk = d_buf[j] * mu0 / mu_act[j]
                    dev = abs(xi(r_chk) * w_buf[j] / LN2 - lam) / (1.0 + lam)
                    if dev > max_dev_resid:
                        max_dev_resid = dev

        # ---- capped rates
        for i in range(n):
            if mu[i] > 0.0:
                bits = mu[i] * bandwidth_hz * math.log2(1.0 + delta[i] * mu0 / mu[i])
                r_val = bits * slot_seconds / unit_scale
                if r_val > c_max[i]:
                    r_val = c_max[i]
                rate[i] = r_val
            else:
                rate[i] = 0.0

        # ---- device-side decisions on true local state
        for i in range(n):
            if policy == POLICY_PF:
                admit[i] = arrivals[t, i]
                expired = 0.0
                h = led_head[i]
                while h < led_tail[i] and t - led_slot[i, h] >= pf_age_limit:
                    expired += led_size[i, h]
                    h += 1
                drop[i] = expired if expired < a_max[i] else a_max[i]
            else:
                if v_param >= (arrivals[t, i] + 1.0) * q[i]:
                    admit[i] = arrivals[t, i]
                else:
                    admit[i] = max(v_param / q[i] - 1.0, 0.0)
                if never_drop == 1:
                    drop[i] = 0.0
                elif policy == POLICY_HDO:
                    drop[i] = a_max[i] if q[i] > v_param * p_price else 0.0
                else:
                    drop[i] = a_max[i] if q[i] + z[i] > v_param * p_price else 0.0

        # ---- realized transfers and metrics
        post_warm = t >= warmup
        for i in range(n):
            offl = rate[i] if rate[i] < q[i] else q[i]
            left = q[i] - offl
            dropped = drop[i] if drop[i] < left else left
            total_dropped += dropped
            if post_warm:
                delivered_pw[i] += offl
                admitted_pw[i] += admit[i]
                utility_sum += math.log1p(admit[i]) - p_price * drop[i]

            if want_trace == 1:
                trace_q[t, i] = q[i]
                trace_z[t, i] = z[i]
                trace_s[t, i] = s[i]
                trace_age[t, i] = age_now[i]
                trace_mu[t, i] = mu[i]
                trace_rate[t, i] = rate[i]
                trace_admit[t, i] = admit[i]
                trace_drop[t, i] = drop[i]
                trace_off[t, i] = offl

            # ledger: offload consumes head mass first, then discard
            led_head[i] = _consume(led_size[i], led_slot[i], led_head[i],
                                   led_tail[i], offl)
            led_head[i] = _consume(led_size[i], led_slot[i], led_head[i],
                                   led_tail[i], dropped)

            # queue recursions
            leftover = max(q[i] - rate[i] - drop[i], 0.0)
            if leftover == 0.0:
                led_head[i] = led_tail[i]  # queue emptied; drop any crumbs
            q_new = leftover + admit[i]
            if admit[i] > 0.0:
                if led_head[i] == led_tail[i]:
                    led_head[i] = 0
                    led_tail[i] = 0
                led_size[i, led_tail[i]] = admit[i]
                led_slot[i, led_tail[i]] = t
                led_tail[i] += 1
            q[i] = q_new
            if policy == POLICY_PCF or policy == POLICY_PPF:
                z[i] = max(z[i] - rate[i] / p_price - p_price * drop[i]
                           + p_price * epsilon[i], 0.0)
            s[i] = max(s[i] - proc[t, i], 0.0) + offl

            if policy == POLICY_PF:
                avg = (1.0 - pf_window) * pf_avg[i] + pf_window * offl
                pf_avg[i] = avg if avg > 1e-9 else 1e-9

        if want_trace == 1:
            trace_mu0[t] = mu0

        # ---- feedback store (idle for complete feedback)
        if policy != POLICY_PCF:
            for i in range(n):
                if mu[i] > 0.0 or snap_age[i] >= m_interval:
                    q_snap[i] = q[i]
                    z_snap[i] = z[i]
                    snap_age[i] = 1
                else:
                    snap_age[i] += 1

    # final-state maxima and checks (state after the last update)
    if not stopped:
        for i in range(n):
            if q[i] > max_q[i]:
                max_q[i] = q[i]
            if z[i] > max_z[i]:
                max_z[i] = z[i]
            if s[i] > max_s[i]:
                max_s[i] = s[i]
        if check_mode != CHECK_OFF:
            for i in range(n):
                for kind in range(3):
                    if kind == VIOL_Q:
                        val, bnd = q[i], q_bound[i]
                    elif kind == VIOL_Z:
                        val, bnd = z[i], z_bound[i]
                    else:
                        val, bnd = s[i], s_bound[i]
                    if val > bnd + _BOUND_SLACK:
                        viol_count[kind] += 1
                        if fv_slot < 0:
                            fv_slot, fv_kind, fv_dev = np.int64(horizon), np.int64(kind), np.int64(i)
                            fv_value, fv_bound = val, bnd

    return (
        delivered_pw, admitted_pw, utility_sum, max(0, horizon - warmup),
        total_dropped, max_age, max_q, max_z, max_s,
        max_stat_resid, max_dev_resid, max_budget_resid, solver_iter_max,
        viol_count, fv_slot, fv_kind, fv_dev, fv_value, fv_bound,
        trace_mu0, trace_q, trace_z, trace_s, trace_age, trace_mu,
        trace_rate, trace_admit, trace_drop, trace_off,
        q, z, s,
    )

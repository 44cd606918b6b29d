"""Built-in oracle and property checks behind the `verify` CLI subcommand.

Each check recomputes expected behavior by an independent route (identities,
brute-force grids, re-runs) and reports pass/fail. The pytest suite carries
the full-strength versions; this is the quick field kit.
"""

import math

import numpy as np

from .harness import simulate_run
from .model import SystemConfig
from .numerics import lambert_w0, xi
from .scheduler import decide_admission, decide_discard, solve_allocation


def _alloc_objective(w, delta, mu0, mu):
    total = 0.0
    for i in range(len(w)):
        if mu[i] > 0.0:
            total += w[i] * mu[i] * math.log2(1.0 + delta[i] * mu0 / mu[i])
    return total


def _grid_best_two(w, delta, step):
    # exhaustive over (mu0, mu1), mu2 = 1 - mu0 - mu1, full-budget face
    g = np.arange(step, 1.0, step)
    m0, m1 = np.meshgrid(g, g, indexing="ij")
    m2 = 1.0 - m0 - m1
    ok = m2 > 0.0
    m0, m1, m2 = m0[ok], m1[ok], m2[ok]
    vals = (w[0] * m1 * np.log2(1.0 + delta[0] * m0 / m1)
            + w[1] * m2 * np.log2(1.0 + delta[1] * m0 / m2))
    return float(vals.max())


def check_lambert():
    worst = 0.0
    for x in np.linspace(-1.0, 5.0, 200):
        worst = max(worst, abs(lambert_w0(x * math.exp(x)) - x))
    ok = (worst <= 1e-9 and lambert_w0(0.0) == 0.0
          and lambert_w0(-math.exp(-1.0)) == -1.0)
    return ok, f"round-trip max err {worst:.2e}"


def check_xi():
    vals = (abs(xi(0.0)), abs(xi(1.0) - (math.log(2.0) - 0.5)),
            abs(xi(math.e - 1.0) - math.exp(-1.0)))
    worst = max(vals)
    return worst <= 1e-15, f"identity max err {worst:.2e}"


def check_allocation():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        w = rng.uniform(1.0, 1e7, size=2)
        delta = 10 ** rng.uniform(-2, 1.5, size=2)
        _, mu0, mu = solve_allocation(w, delta)
        val = _alloc_objective(w, delta, mu0, mu)
        best = _grid_best_two(w, delta, 1e-3)
        worst = max(worst, abs(val - best) / abs(best))
    return worst <= 1e-3, f"worst relative gap to grid {worst:.2e}"


def check_closed_forms():
    rng = np.random.default_rng(11)
    v, p, a_cap = 400.0, 2.0, 1.0
    bad = 0
    for _ in range(100):
        q = rng.uniform(0.0, 900.0)
        z = rng.uniform(0.0, 900.0)
        arr = rng.uniform(0.0, a_cap)
        a_star = decide_admission(q, arr, v)
        grid = np.linspace(0.0, arr, 10001)
        f_grid = (q * grid - v * np.log1p(grid)).min()
        if q * a_star - v * math.log1p(a_star) > f_grid + 1e-9 * (1 + abs(f_grid)):
            bad += 1
        d_star = decide_discard(q, z, v, p, a_cap)
        best_d = min(0.0, (v * p - q - z) * a_cap)
        if (v * p - q - z) * d_star > best_d + 1e-12:
            bad += 1
    return bad == 0, f"{bad} grid violations"


def check_run_determinism():
    cfg = SystemConfig()
    m1 = simulate_run(cfg, "PCF", seed=3, slots=600, warmup=100)
    m2 = simulate_run(cfg, "PCF", seed=3, slots=600, warmup=100)
    ok = (m1.avg_throughput == m2.avg_throughput
          and m1.avg_utility == m2.avg_utility
          and m1.max_q == m2.max_q
          and m1.bound_violations == m2.bound_violations
          and sum(m1.bound_violations) == 0)
    return ok, f"throughput {m1.avg_throughput:.4f} Mb/slot, zero violations"


def check_feedback_degeneracy():
    from dataclasses import replace
    cfg = replace(SystemConfig(), feedback_interval=1)
    a = simulate_run(cfg, "PCF", seed=5, slots=300, warmup=0, trace=True)
    b = simulate_run(cfg, "PPF", seed=5, slots=300, warmup=0, trace=True)
    same = (np.array_equal(a.per_slot_series.mu, b.per_slot_series.mu)
            and np.array_equal(a.per_slot_series.rate, b.per_slot_series.rate)
            and np.array_equal(a.per_slot_series.admit, b.per_slot_series.admit)
            and np.array_equal(a.per_slot_series.drop, b.per_slot_series.drop))
    return same, "m=1 partial feedback matches complete feedback"


ALL_CHECKS = (
    ("lambert-w round trip", check_lambert),
    ("xi identities", check_xi),
    ("allocation vs grid", check_allocation),
    ("closed forms vs grid", check_closed_forms),
    ("run determinism + bounds", check_run_determinism),
    ("m=1 feedback degeneracy", check_feedback_degeneracy),
)


def quick_verify():
    """Run every check; returns list of (name, ok, detail)."""
    results = []
    for name, fn in ALL_CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results

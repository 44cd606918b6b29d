"""Comparison policies sharing the environment and queue engine.

PF (proportional fair): admits every arrival, drops only data whose age has
reached the configured limit, and splits airtime by maximizing the sum of
rates weighted by inverse smoothed throughput, reusing the same allocation
solver with all devices active. Age-blind on queues, fairness-driven on rates.

HDO (homogeneous device optimization): the proposed pipeline with the virtual
queues pinned to zero, i.e. optimized without considering data age. It shares
run_slot's code path outright.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .model import SlotDecision, SystemConfig
from .environment import offload_rate
from .scheduler import SlotObservation, run_slot, solve_allocation

_RATE_FLOOR = 1e-9


@dataclass(frozen=True)
class PfState:
    """Exponentially smoothed per-device delivered rates for the PF weights."""

    avg_rate: Tuple[float, ...]
    window: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.window <= 1.0:
            raise ValueError("PfState: window must lie in (0, 1]")
        if any(r <= 0.0 for r in self.avg_rate):
            raise ValueError("PfState: smoothed rates must be positive")


def initial_pf_state(n_devices: int, window: float = 0.1) -> PfState:
    return PfState(avg_rate=(_RATE_FLOOR,) * n_devices, window=window)


def pf_decide(obs: SlotObservation, env, state: PfState, cfg: SystemConfig,
              expired: Optional[Sequence[float]] = None) -> SlotDecision:
    """Proportional-fair decision for one slot.

    `expired` is the per-device head-of-line mass that has reached the age
    limit (computed by the caller from its batch ledger); PF drops exactly
    that, capped at the per-slot discard ceiling. Admission is uncontrolled.
    """
    del env
    n = cfg.n_devices
    w = np.empty(n)
    d = np.empty(n)
    for i in range(n):
        base = max(state.avg_rate[i], _RATE_FLOOR)
        w[i] = cfg.bandwidth_hz / base
        d[i] = obs.delta[i]
        if d[i] <= 0.0:
            raise ValueError("pf_decide: needs positive channel coefficients")
    _, mu0, mu = solve_allocation(w, d, cfg.sigma)
    rate = tuple(
        offload_rate(cfg, obs.delta[i], mu0, float(mu[i]), i) for i in range(n)
    )
    admit = tuple(obs.arrivals)
    if expired is None:
        drop = (0.0,) * n
    else:
        drop = tuple(min(expired[i], cfg.a_max[i]) for i in range(n))
    return SlotDecision(float(mu0), tuple(float(m) for m in mu), admit, drop, rate)


def pf_update(state: PfState, delivered: Sequence[float]) -> PfState:
    """Advance the smoothed rates with this slot's delivered amounts."""
    win = state.window
    new = tuple(
        max((1.0 - win) * old + win * got, _RATE_FLOOR)
        for old, got in zip(state.avg_rate, delivered)
    )
    return PfState(avg_rate=new, window=win)


def hdo_decide(obs: SlotObservation, cfg: SystemConfig, env) -> SlotDecision:
    """Age-blind decision: the proposed pipeline with zero virtual queues."""
    zeroed = SlotObservation(
        q=obs.q,
        z=(0.0,) * len(obs.q),
        s=obs.s,
        delta=obs.delta,
        arrivals=obs.arrivals,
    )
    return run_slot(zeroed, cfg, env)

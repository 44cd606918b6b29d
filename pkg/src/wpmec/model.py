"""Domain types and exact queue/age dynamics shared by every policy.

Queues are fluid (real-valued) and tracked two ways at once: a scalar backlog
updated by the clamped recursions, and a FIFO ledger of age-stamped batches
that supports head-of-line age queries. Offloading always consumes ledger mass
before discard does. All step functions are pure: they return new values and
never mutate their inputs.

Internal data unit is megabits (see SystemConfig.unit_scale_bits); one slot is
slot_seconds long with rates expressed per slot.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Tuple

N_DEVICES_DEFAULT = 10


@dataclass(frozen=True)
class SystemConfig:
    """All physical, algorithmic and experiment parameters for one cell.

    Sequences are per-device tuples of length n_devices. The defaults
    reproduce the ten-device reference setup: devices at 3..12 m, path-loss
    exponent 2, 0.2 MHz band, -90 dBm noise, 2 W transfer power, 80 %
    harvesting efficiency, 1 Mb/slot arrival ceiling and 0.05 Mb/slot AP
    processing ceiling per device.
    """

    n_devices: int = N_DEVICES_DEFAULT
    bandwidth_hz: float = 0.2e6
    ap_power_w: float = 2.0
    noise_w: float = 1e-9
    path_loss_exp: float = 2.0
    device_distance_m: Tuple[float, ...] = tuple(3.0 + i for i in range(N_DEVICES_DEFAULT))
    harvest_eff: Tuple[float, ...] = (0.8,) * N_DEVICES_DEFAULT
    a_max: Tuple[float, ...] = (1.0,) * N_DEVICES_DEFAULT
    r_max: Tuple[float, ...] = (0.05,) * N_DEVICES_DEFAULT
    c_max: Tuple[float, ...] = (2.0,) * N_DEVICES_DEFAULT
    v_param: float = 400.0
    drop_price: float = 2.0
    epsilon: Tuple[float, ...] = (0.5,) * N_DEVICES_DEFAULT
    g_max_slots: int = 500
    feedback_interval: int = 5
    slot_seconds: float = 1.0
    unit_scale_bits: float = 1e6
    # no-discard mode: models an unbounded drop price; the discard rule is
    # short-circuited to "never drop" while drop_price keeps a large finite
    # value for every other formula
    never_drop: bool = False
    # accuracy of the Lambert-W evaluation (inner tier) and of the Lagrange
    # multiplier search (outer tier) in the time allocator
    kappa: float = 1e-12
    sigma: float = 1e-9
    # per-slot stochastic models: "uniform" on [0, max], "constant" at max,
    # or "bernoulli" (max with probability 1/2, else 0)
    arrival_model: str = "uniform"
    proc_model: str = "uniform"
    # throughput accounting: "delivered" counts data reaching the AP,
    # min(rate, backlog); "admitted" counts data accepted into device buffers
    throughput_accounting: str = "delivered"

    def __post_init__(self):
        n = self.n_devices
        if n < 1:
            raise ValueError("SystemConfig: need at least one device")
        for name in ("device_distance_m", "harvest_eff", "a_max", "r_max",
                     "c_max", "epsilon"):
            seq = getattr(self, name)
            if len(seq) != n:
                raise ValueError(f"SystemConfig: {name} must have length {n}")
        if self.bandwidth_hz <= 0 or self.ap_power_w <= 0 or self.noise_w <= 0:
            raise ValueError("SystemConfig: rates and powers must be positive")
        if self.drop_price < 1.0:
            raise ValueError("SystemConfig: drop_price must be >= 1")
        if self.feedback_interval < 1:
            raise ValueError("SystemConfig: feedback_interval must be >= 1")
        if self.slot_seconds <= 0 or self.unit_scale_bits <= 0:
            raise ValueError("SystemConfig: slot_seconds/unit_scale_bits must be positive")
        for i in range(n):
            if not (0.0 < self.harvest_eff[i] < 1.0):
                raise ValueError("SystemConfig: harvest_eff must lie in (0, 1)")
            if self.a_max[i] < 0 or self.r_max[i] < 0 or self.c_max[i] <= 0:
                raise ValueError("SystemConfig: nonnegative rate caps required")
            # the virtual-queue arrival rate must sit in (0, a_max]; a device
            # with no arrivals at all degenerates to epsilon = 0
            if self.a_max[i] > 0:
                if not (0.0 < self.epsilon[i] <= self.a_max[i]):
                    raise ValueError("SystemConfig: epsilon must lie in (0, a_max]")
            elif self.epsilon[i] != 0.0:
                raise ValueError("SystemConfig: epsilon must be 0 when a_max is 0")
        if self.arrival_model not in ("uniform", "constant", "bernoulli"):
            raise ValueError(f"SystemConfig: unknown arrival_model {self.arrival_model!r}")
        if self.proc_model not in ("uniform", "constant", "bernoulli"):
            raise ValueError(f"SystemConfig: unknown proc_model {self.proc_model!r}")
        if self.throughput_accounting not in ("delivered", "admitted"):
            raise ValueError(
                f"SystemConfig: unknown throughput_accounting "
                f"{self.throughput_accounting!r}")

    def with_infinite_drop_price(self, proxy: float = 1e9) -> "SystemConfig":
        """Unbounded-drop-price variant: large finite price, discard disabled."""
        return replace(self, drop_price=proxy, never_drop=True)


@dataclass(frozen=True)
class DataBatch:
    """A contiguous chunk of admitted data, stamped with its admission slot."""

    size: float
    admitted_slot: int

    def __post_init__(self):
        if self.size <= 0.0:
            raise ValueError("DataBatch: size must be positive")
        if self.admitted_slot < 0:
            raise ValueError("DataBatch: admitted_slot must be >= 0")


@dataclass(frozen=True)
class DeviceState:
    """One device's data queue, virtual queue and current channel."""

    q_backlog: float = 0.0
    z_backlog: float = 0.0
    batches: Tuple[DataBatch, ...] = ()
    channel_gain: float = 0.0
    delta: float = 0.0


@dataclass(frozen=True)
class ApState:
    """Per-device AP-side backlogs and the current processing capacities."""

    s_backlogs: Tuple[float, ...]
    r_current: Tuple[float, ...]


@dataclass(frozen=True)
class SlotDecision:
    """One slot's control vector: transfer/offload portions, admit, drop, rate."""

    mu0: float
    mu: Tuple[float, ...]
    admit: Tuple[float, ...]
    drop: Tuple[float, ...]
    rate: Tuple[float, ...]

    def __post_init__(self):
        if self.mu0 < 0.0 or any(m < 0.0 for m in self.mu):
            raise ValueError("SlotDecision: time portions must be nonnegative")
        if self.mu0 + sum(self.mu) > 1.0 + 1e-9:
            raise ValueError("SlotDecision: time portions exceed the slot")
        if any(a < 0.0 for a in self.admit) or any(d < 0.0 for d in self.drop):
            raise ValueError("SlotDecision: admit/drop must be nonnegative")
        if any(r < 0.0 for r in self.rate):
            raise ValueError("SlotDecision: rates must be nonnegative")


def _consume_fifo(batches: Tuple[DataBatch, ...], amount: float) -> Tuple[DataBatch, ...]:
    """Remove `amount` of mass from the head of the ledger, splitting batches.

    A split keeps the original admission slot on the remaining half (age is
    defined by admission time).
    """
    if amount <= 0.0:
        return batches
    out = []
    remaining = amount
    for b in batches:
        if remaining <= 0.0:
            out.append(b)
        elif b.size <= remaining:
            remaining -= b.size
        else:
            out.append(DataBatch(b.size - remaining, b.admitted_slot))
            remaining = 0.0
    return tuple(out)


def step_device_queue(state: DeviceState, rate: float, drop: float,
                      admit: float, now: int) -> DeviceState:
    """Advance one device queue by a slot: offload, then discard, then admit.

    New backlog is max(Q - rate - drop, 0) + admit. Ledger mass is consumed
    head-first, offloading before discard; admitted data is appended as a new
    batch stamped with `now`.
    """
    if rate < 0.0 or drop < 0.0 or admit < 0.0:
        raise ValueError("step_device_queue: rate, drop, admit must be >= 0")
    q_new = max(state.q_backlog - rate - drop, 0.0) + admit
    offloaded = min(rate, state.q_backlog)
    discarded = min(drop, state.q_backlog - offloaded)
    batches = _consume_fifo(state.batches, offloaded)
    batches = _consume_fifo(batches, discarded)
    if admit > 0.0:
        batches = batches + (DataBatch(admit, now),)
    return replace(state, q_backlog=q_new, batches=batches)


def step_ap_queue(s: float, r: float, offloaded: float) -> float:
    """AP backlog recursion: max(s - r, 0) + offloaded.

    `offloaded` must be min(rate, device backlog) computed before the device
    update for the same slot.
    """
    if s < 0.0 or r < 0.0 or offloaded < 0.0:
        raise ValueError("step_ap_queue: inputs must be >= 0")
    return max(s - r, 0.0) + offloaded


def step_virtual_queue(z: float, rate: float, drop: float, eps: float,
                       p: float) -> float:
    """Age-tracking virtual queue: max(z - rate/p - p*drop + p*eps, 0).

    Served by offloading (scaled down by the drop price p) and by discards
    (scaled up by p); fed at the constant persistence rate eps.
    """
    if z < 0.0 or rate < 0.0 or drop < 0.0 or eps < 0.0:
        raise ValueError("step_virtual_queue: inputs must be >= 0")
    if p < 1.0:
        raise ValueError("step_virtual_queue: p must be >= 1")
    return max(z - rate / p - p * drop + p * eps, 0.0)


def max_age(state: DeviceState, now: int) -> int:
    """Slots elapsed since the head-of-line batch was admitted; 0 if empty."""
    if not state.batches:
        return 0
    return now - state.batches[0].admitted_slot


def ledger_mass(state: DeviceState) -> float:
    """Total ledger mass; tracks q_backlog to float rounding."""
    return math.fsum(b.size for b in state.batches)

"""Partial and outdated network-state information.

The access point plans with per-device snapshots of the data and virtual
queues rather than live values. A device's snapshot is rewritten at the end of
any slot in which it offloaded (its feedback rides along with the data), and
unconditionally once the snapshot has been used for m consecutive slots, so
snapshot ages always stay in {1, ..., m}. A snapshot written at the end of
slot t carries the post-update backlogs, i.e. the true state at the start of
slot t+1; with m = 1 every slot is therefore planned on exact state and the
partial-feedback policy reproduces the complete-feedback one.

AP-side backlogs are local to the AP and never stale; device-side admission
and discard always run on true local state.
"""

from dataclasses import dataclass, replace
from typing import Iterable, Sequence, Tuple

from .model import ApState
from .scheduler import SlotObservation


@dataclass(frozen=True)
class FeedbackStore:
    """Last reported queue values per device and how long they have served."""

    q_snapshot: Tuple[float, ...]
    z_snapshot: Tuple[float, ...]
    snapshot_age: Tuple[int, ...]

    def __post_init__(self):
        n = len(self.q_snapshot)
        if len(self.z_snapshot) != n or len(self.snapshot_age) != n:
            raise ValueError("FeedbackStore: field lengths differ")
        if any(a < 1 for a in self.snapshot_age):
            raise ValueError("FeedbackStore: snapshot ages start at 1")


def initial_store(n_devices: int) -> FeedbackStore:
    """Cold store for an initially empty system: zero snapshots, age 1."""
    return FeedbackStore(
        q_snapshot=(0.0,) * n_devices,
        z_snapshot=(0.0,) * n_devices,
        snapshot_age=(1,) * n_devices,
    )


def observe(store: FeedbackStore, s: ApState, delta: Sequence[float],
            arrivals: Sequence[float]) -> SlotObservation:
    """AP-side observation: snapshot queues, live AP backlogs."""
    return SlotObservation(
        q=store.q_snapshot,
        z=store.z_snapshot,
        s=tuple(s.s_backlogs),
        delta=tuple(delta),
        arrivals=tuple(arrivals),
    )


def refresh(store: FeedbackStore, i: int, true_q: float, true_z: float,
            t: int) -> FeedbackStore:
    """Rewrite device i's snapshot with its current true backlogs.

    Called at the end of slot t when device i offloaded in slot t, and
    unconditionally when its snapshot age has reached the feedback interval.
    The age resets so the next slot observes a fresh (age 1) snapshot.
    """
    del t  # the snapshot carries values, not timestamps
    q = list(store.q_snapshot)
    z = list(store.z_snapshot)
    ages = list(store.snapshot_age)
    q[i] = true_q
    z[i] = true_z
    ages[i] = 1
    return replace(store, q_snapshot=tuple(q), z_snapshot=tuple(z),
                   snapshot_age=tuple(ages))


def end_of_slot(store: FeedbackStore, refreshed: Iterable[int],
                true_q: Sequence[float], true_z: Sequence[float],
                t: int) -> FeedbackStore:
    """Apply slot-t refreshes, then age every non-refreshed snapshot by one."""
    refreshed = set(refreshed)
    for i in refreshed:
        store = refresh(store, i, true_q[i], true_z[i], t)
    return replace(
        store,
        snapshot_age=tuple(
            1 if i in refreshed else a + 1
            for i, a in enumerate(store.snapshot_age)
        ),
    )

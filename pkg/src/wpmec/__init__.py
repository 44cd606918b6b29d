"""Deterministic simulator and optimizer for data-age-aware scheduling in a
wireless-powered mobile-edge-computing cell.

Drift-plus-penalty control (admission, discard, transfer/offload time split)
with complete and outdated-feedback variants, proportional-fair and age-blind
baselines, worst-case backlog/age bound verification, and a seeded sweep
harness.
"""

from .model import (ApState, DataBatch, DeviceState, SlotDecision,
                    SystemConfig, max_age, step_ap_queue, step_device_queue,
                    step_virtual_queue)
from .environment import (EnvDraw, EnvStream, channel_delta, draw_slot,
                          harvested_energy, offload_rate)
from .numerics import BisectionSpec, bisect, lambert_w0, xi
from .scheduler import (BoundReport, SlotObservation, allocate_time,
                        compute_bounds, decide_admission, decide_discard,
                        run_slot, select_offload_set)
from .feedback import FeedbackStore, end_of_slot, initial_store, observe, refresh
from .baselines import PfState, hdo_decide, initial_pf_state, pf_decide, pf_update
from .harness import (ExperimentPlan, RunMetrics, SlotTrace, BoundViolation,
                      jain, simulate_run, sweep)

__version__ = "0.1.0"

__all__ = [
    "ApState", "DataBatch", "DeviceState", "SlotDecision", "SystemConfig",
    "max_age", "step_ap_queue", "step_device_queue", "step_virtual_queue",
    "EnvDraw", "EnvStream", "channel_delta", "draw_slot", "harvested_energy",
    "offload_rate",
    "BisectionSpec", "bisect", "lambert_w0", "xi",
    "BoundReport", "SlotObservation", "allocate_time", "compute_bounds",
    "decide_admission", "decide_discard", "run_slot", "select_offload_set",
    "FeedbackStore", "end_of_slot", "initial_store", "observe", "refresh",
    "PfState", "hdo_decide", "initial_pf_state", "pf_decide", "pf_update",
    "ExperimentPlan", "RunMetrics", "SlotTrace", "BoundViolation", "jain",
    "simulate_run", "sweep",
    "__version__",
]

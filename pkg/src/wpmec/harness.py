"""Experiment driver: single runs, parameter sweeps, metrics and CSV output.

A run advances the compiled engine over a seeded environment trace and reports
throughput, utility, fairness, worst-case backlogs and head-of-line ages, drop
totals and solver residuals. Worst-case backlog/age bounds are asserted every
slot for the proposed policies; violations abort the run with a slot dump
unless the caller downgrades them to recording.

Sweeps execute the cartesian product policy x V x p x seed in a fixed order,
optionally across processes, and emit one deterministic CSV row per run:

    policy,V,p,seed,avg_throughput_mb,avg_utility,jain,max_age_slots,
    max_q_mb,max_z,max_s_mb,total_dropped_mb
"""

import concurrent.futures
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import engine
from .environment import EnvStream
from .model import SystemConfig
from .scheduler import compute_bounds

POLICIES = ("PCF", "PPF", "PF", "HDO")
_POLICY_CODE = {
    "PCF": engine.POLICY_PCF,
    "PPF": engine.POLICY_PPF,
    "PF": engine.POLICY_PF,
    "HDO": engine.POLICY_HDO,
}
_CHECK_CODE = {"off": engine.CHECK_OFF, "record": engine.CHECK_RECORD,
               "assert": engine.CHECK_ASSERT}
_VIOL_NAMES = ("q_backlog", "z_backlog", "s_backlog", "age",
               "stale_q", "stale_z")

CSV_HEADER = ("policy,V,p,seed,avg_throughput_mb,avg_utility,jain,"
              "max_age_slots,max_q_mb,max_z,max_s_mb,total_dropped_mb")
TRACE_HEADER = ("slot,device,q_mb,z,s_mb,age_slots,mu0,mu,rate_mb,"
                "admit_mb,drop_mb,offloaded_mb")

DEFAULT_WARMUP = 500

PF_WINDOW = 0.1


class BoundViolation(RuntimeError):
    """A worst-case backlog/age bound failed; these are theorem checks."""


@dataclass(frozen=True)
class SlotTrace:
    """Per-slot, per-device series of one run (columnar)."""

    mu0: np.ndarray
    q: np.ndarray
    z: np.ndarray
    s: np.ndarray
    age: np.ndarray
    mu: np.ndarray
    rate: np.ndarray
    admit: np.ndarray
    drop: np.ndarray
    offloaded: np.ndarray


@dataclass(frozen=True)
class RunMetrics:
    """Aggregates of one run; per-device sequences are device-indexed."""

    avg_throughput: float
    avg_utility: float
    jain_index: float
    jain_degenerate: bool
    max_age_per_device: Tuple[int, ...]
    max_q: Tuple[float, ...]
    max_z: Tuple[float, ...]
    max_s: Tuple[float, ...]
    total_dropped: float
    delivered_per_device: Tuple[float, ...]
    max_stationarity_resid: float
    max_per_device_resid: float
    max_budget_resid: float
    solver_iter_max: int
    bound_violations: Tuple[int, ...]
    first_violation: Optional[Tuple[int, str, int, float, float]]
    per_slot_series: Optional[SlotTrace] = None


@dataclass(frozen=True)
class ExperimentPlan:
    """A sweep: policies x v_grid x p_grid x seeds over one base config."""

    policies: Tuple[str, ...]
    v_grid: Tuple[float, ...]
    p_grid: Tuple[float, ...]
    n_seeds: int
    horizon_slots: int
    base: SystemConfig = field(default_factory=SystemConfig)
    warmup_slots: int = DEFAULT_WARMUP

    def __post_init__(self):
        if not self.policies or not self.v_grid or not self.p_grid:
            raise ValueError("ExperimentPlan: grids must be non-empty")
        for pol in self.policies:
            if pol not in POLICIES:
                raise ValueError(f"ExperimentPlan: unknown policy {pol!r}")
        if self.n_seeds < 1 or self.horizon_slots < 1:
            raise ValueError("ExperimentPlan: need n_seeds >= 1, horizon >= 1")
        if self.warmup_slots < 0:
            raise ValueError("ExperimentPlan: warmup must be >= 0")


def jain(values: Sequence[float]) -> float:
    """Jain fairness index (sum x)^2 / (N sum x^2); 1.0 for an all-zero input."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("jain: empty input")
    if np.any(vals < 0.0):
        raise ValueError("jain: values must be nonnegative")
    sq = float(np.sum(vals * vals))
    if sq == 0.0:
        return 1.0
    total = float(np.sum(vals))
    return total * total / (vals.size * sq)


def config_for(cfg: SystemConfig, v: float, p: float) -> SystemConfig:
    if math.isinf(p):
        return replace(cfg, v_param=v).with_infinite_drop_price()
    return replace(cfg, v_param=v, drop_price=p, never_drop=False)


def simulate_run(cfg: SystemConfig, policy: str, seed: int, *,
                 slots: int, warmup: int = DEFAULT_WARMUP,
                 check: str = "assert", trace: bool = False) -> RunMetrics:
    """Execute one seeded run of `slots` slots under the given policy.

    check: "assert" stops at the first backlog/age bound violation and raises
    BoundViolation (proposed policies only); "record" counts violations into
    the metrics; "off" skips the checks. Metrics averages exclude the first
    `warmup` slots; drop totals and maxima cover the whole run.
    """
    if policy not in POLICIES:
        raise ValueError(f"simulate_run: unknown policy {policy!r}")
    if check not in _CHECK_CODE:
        raise ValueError(f"simulate_run: unknown check mode {check!r}")
    if slots < 1:
        raise ValueError("simulate_run: need at least one slot")
    n = cfg.n_devices
    stream = EnvStream(cfg, seed)
    gains, arrivals, proc = stream.draw_trace(slots)

    check_code = _CHECK_CODE[check]
    if policy in ("PF", "HDO"):
        check_code = engine.CHECK_OFF  # worst-case bounds hold for the
        # proposed policies only
    bounds = compute_bounds(cfg, cfg.c_max)
    p = cfg.drop_price
    m = cfg.feedback_interval
    stale_q = np.array([(cfg.c_max[i] + cfg.a_max[i]) * m for i in range(n)])
    stale_z = np.array([(cfg.c_max[i] / p + p * cfg.a_max[i]) * m
                        for i in range(n)])

    out = engine.run_core(
        slots, n, _POLICY_CODE[policy], check_code,
        cfg.bandwidth_hz, cfg.noise_w, cfg.ap_power_w, cfg.slot_seconds,
        cfg.unit_scale_bits,
        np.asarray(cfg.harvest_eff), np.asarray(cfg.a_max),
        np.asarray(cfg.c_max), np.asarray(cfg.epsilon),
        cfg.v_param, p, 1 if cfg.never_drop else 0, cfg.sigma, m,
        PF_WINDOW, cfg.g_max_slots,
        gains, arrivals, proc,
        np.asarray(bounds.q_max), np.asarray(bounds.z_max),
        np.asarray(bounds.s_max), np.asarray(bounds.g_max, dtype=np.float64),
        stale_q, stale_z,
        warmup, 1 if trace else 0,
    )
    (delivered, admitted, util_sum, counted, dropped, max_age, max_q, max_z,
     max_s, stat_resid, dev_resid, budget_resid, iter_max, viol, fv_slot,
     fv_kind, fv_dev, fv_value, fv_bound,
     t_mu0, t_q, t_z, t_s, t_age, t_mu, t_rate, t_admit, t_drop, t_off,
     _q_end, _z_end, _s_end) = out

    first = None
    if fv_slot >= 0:
        first = (int(fv_slot), _VIOL_NAMES[int(fv_kind)], int(fv_dev),
                 float(fv_value), float(fv_bound))
    if check_code == engine.CHECK_ASSERT and first is not None:
        raise BoundViolation(
            f"{policy} V={cfg.v_param} p={'inf' if cfg.never_drop else p} "
            f"seed={seed}: {first[1]} bound violated at slot {first[0]}, "
            f"device {first[2]}: value {first[3]:.6g} > bound {first[4]:.6g}"
        )

    series = None
    if trace:
        series = SlotTrace(t_mu0, t_q, t_z, t_s, t_age, t_mu, t_rate,
                           t_admit, t_drop, t_off)
    delivered_t = tuple(float(x) for x in delivered)
    accounted = (tuple(float(x) for x in admitted)
                 if cfg.throughput_accounting == "admitted" else delivered_t)
    degenerate = all(x == 0.0 for x in accounted)
    denom = max(counted, 1)
    return RunMetrics(
        avg_throughput=float(sum(accounted)) / denom,
        avg_utility=float(util_sum) / denom,
        jain_index=jain(accounted),
        jain_degenerate=degenerate,
        max_age_per_device=tuple(int(x) for x in max_age),
        max_q=tuple(float(x) for x in max_q),
        max_z=tuple(float(x) for x in max_z),
        max_s=tuple(float(x) for x in max_s),
        total_dropped=float(dropped),
        delivered_per_device=delivered_t,
        max_stationarity_resid=float(stat_resid),
        max_per_device_resid=float(dev_resid),
        max_budget_resid=float(budget_resid),
        solver_iter_max=int(iter_max),
        bound_violations=tuple(int(x) for x in viol),
        first_violation=first,
        per_slot_series=series,
    )


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def _p_label(p: float) -> str:
    return "inf" if math.isinf(p) else _fmt(p)


def run_to_row(policy: str, v: float, p: float, seed: int,
               metrics: RunMetrics) -> str:
    return ",".join([
        policy, _fmt(v), _p_label(p), str(seed),
        _fmt(metrics.avg_throughput), _fmt(metrics.avg_utility),
        _fmt(metrics.jain_index), str(max(metrics.max_age_per_device)),
        _fmt(max(metrics.max_q)), _fmt(max(metrics.max_z)),
        _fmt(max(metrics.max_s)), _fmt(metrics.total_dropped),
    ])


def _sweep_cell(args):
    cfg_base, policy, v, p, seed, slots, warmup, check = args
    cfg = config_for(cfg_base, v, p)
    try:
        metrics = simulate_run(cfg, policy, seed, slots=slots, warmup=warmup,
                               check=check)
        return (policy, v, p, seed, metrics, None)
    except BoundViolation as exc:
        return (policy, v, p, seed, None, str(exc))


def sweep(plan: ExperimentPlan, *, check: str = "assert",
          parallel: int = 1):
    """Run the plan's full grid; returns (results, failures).

    results: one (policy, v, p, seed, RunMetrics) per completed run, in plan
    order. failures: (policy, v, p, seed, message) for runs aborted by a
    bound violation; other cells are unaffected. Execution order never
    changes the outputs, so parallel and serial sweeps agree byte-for-byte.
    """
    jobs = [
        (plan.base, policy, v, p, seed, plan.horizon_slots,
         plan.warmup_slots, check)
        for policy in plan.policies
        for v in plan.v_grid
        for p in plan.p_grid
        for seed in range(plan.n_seeds)
    ]
    if parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallel) as ex:
            outcomes = list(ex.map(_sweep_cell, jobs, chunksize=1))
    else:
        outcomes = [_sweep_cell(j) for j in jobs]
    results = []
    failures = []
    for policy, v, p, seed, metrics, err in outcomes:
        if err is None:
            results.append((policy, v, p, seed, metrics))
        else:
            failures.append((policy, v, p, seed, err))
    return results, failures


def results_to_csv(results) -> str:
    lines = [CSV_HEADER]
    lines.extend(run_to_row(pol, v, p, seed, m)
                 for pol, v, p, seed, m in results)
    return "\n".join(lines) + "\n"


def trace_to_csv(series: SlotTrace) -> str:
    slots, n = series.q.shape
    lines = [TRACE_HEADER]
    for t in range(slots):
        for i in range(n):
            lines.append(",".join([
                str(t), str(i), _fmt(series.q[t, i]), _fmt(series.z[t, i]),
                _fmt(series.s[t, i]), str(int(series.age[t, i])),
                _fmt(series.mu0[t]), _fmt(series.mu[t, i]),
                _fmt(series.rate[t, i]), _fmt(series.admit[t, i]),
                _fmt(series.drop[t, i]), _fmt(series.offloaded[t, i]),
            ]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# flat key=value configuration files
# ---------------------------------------------------------------------------

_SCALAR_FLOAT_KEYS = {
    "bandwidth_hz", "ap_power_w", "noise_w", "path_loss_exp", "v_param",
    "slot_seconds", "unit_scale_bits", "kappa", "sigma",
}
_PER_DEVICE_KEYS = {
    "device_distance_m", "harvest_eff", "a_max", "r_max", "c_max", "epsilon",
}
_INT_KEYS = {"n_devices", "g_max_slots", "feedback_interval"}
_BOOL_KEYS = {"never_drop"}
_STR_KEYS = {"arrival_model", "proc_model", "throughput_accounting"}
_PLAN_KEYS = {"policy", "policies", "v_grid", "p_grid", "n_seeds",
              "horizon_slots", "warmup_slots"}
_DROP_PRICE_KEY = "drop_price"


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment; unknown keys error."""
    known = (_SCALAR_FLOAT_KEYS | _PER_DEVICE_KEYS | _INT_KEYS | _BOOL_KEYS
             | _STR_KEYS | _PLAN_KEYS | {_DROP_PRICE_KEY})
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_float(value: str) -> float:
    if value.lower() in ("inf", "infinite", "infinity"):
        return math.inf
    return float(value)


def _parse_list(value: str):
    return [v.strip() for v in value.split(",") if v.strip()]


def config_from_mapping(raw: Dict[str, str],
                        base: Optional[SystemConfig] = None) -> SystemConfig:
    """Build a SystemConfig from parsed key=value pairs over a base config."""
    cfg = base if base is not None else SystemConfig()
    updates = {}
    n = int(raw["n_devices"]) if "n_devices" in raw else cfg.n_devices
    if "n_devices" in raw:
        updates["n_devices"] = n
        # re-broadcast defaults that no longer match the device count
        for name in _PER_DEVICE_KEYS:
            seq = getattr(cfg, name)
            if len(seq) != n and name not in raw:
                if name == "device_distance_m":
                    updates[name] = tuple(3.0 + i for i in range(n))
                else:
                    updates[name] = (seq[0],) * n
    for key, value in raw.items():
        if key in _PLAN_KEYS or key == "n_devices":
            continue
        if key in _SCALAR_FLOAT_KEYS:
            updates[key] = _parse_float(value)
        elif key in _INT_KEYS:
            updates[key] = int(value)
        elif key in _BOOL_KEYS:
            updates[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _STR_KEYS:
            updates[key] = value
        elif key == _DROP_PRICE_KEY:
            p = _parse_float(value)
            if math.isinf(p):
                updates["drop_price"] = 1e9
                updates["never_drop"] = True
            else:
                updates["drop_price"] = p
        elif key in _PER_DEVICE_KEYS:
            vals = [_parse_float(v) for v in _parse_list(value)]
            if len(vals) == 1:
                vals = vals * n
            if len(vals) != n:
                raise ValueError(
                    f"config: {key} needs 1 or {n} values, got {len(vals)}")
            updates[key] = tuple(vals)
    return replace(cfg, **updates)


def plan_from_mapping(raw: Dict[str, str],
                      base: Optional[SystemConfig] = None) -> ExperimentPlan:
    """Build an ExperimentPlan (and its base config) from parsed pairs."""
    cfg = config_from_mapping(raw, base)
    if "policies" in raw:
        policies = tuple(_parse_list(raw["policies"]))
    elif "policy" in raw:
        policies = (raw["policy"].strip(),)
    else:
        policies = ("PCF",)
    v_grid = tuple(_parse_float(v) for v in _parse_list(raw["v_grid"])) \
        if "v_grid" in raw else (cfg.v_param,)
    p_grid = tuple(_parse_float(v) for v in _parse_list(raw["p_grid"])) \
        if "p_grid" in raw else (cfg.drop_price,)
    return ExperimentPlan(
        policies=policies,
        v_grid=v_grid,
        p_grid=p_grid,
        n_seeds=int(raw.get("n_seeds", "1")),
        horizon_slots=int(raw.get("horizon_slots", "1000")),
        base=cfg,
        warmup_slots=int(raw.get("warmup_slots", str(DEFAULT_WARMUP))),
    )

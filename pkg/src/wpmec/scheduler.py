"""Per-slot optimal control: admission, discard, uplink exclusion and the
semi-closed time allocation, plus the theoretical bound calculators.

The drift-plus-penalty decomposition makes each slot separable: admission and
discard have closed forms per device, and the transfer/offload time split
reduces to a one-dimensional search for the Lagrange multiplier of the time
budget. For each candidate multiplier lam, the per-device airtime ratio
R_i = delta_i*mu0/mu_i solves Xi(R_i) = ln2*lam/w_i, evaluated through the
principal Lambert W branch and polished by one Newton step in Xi-space to
guard the branch-point cancellation. The multiplier search is a bracketed
bisection with Newton acceleration on the budget stationarity function

    f(lam) = sum_i (w_i*delta_i/ln2) / (1 + R_i(lam)) - lam,

which is strictly decreasing with an analytic bracket [0, sum_i w_i*delta_i/ln2].
"""

import math
from dataclasses import dataclass
from typing import Sequence, Set, Tuple

import numpy as np
from numba import njit

from .environment import offload_rate
from .model import SlotDecision, SystemConfig
from .numerics import LN2, ConvergenceError, lambert_w0, xi

_SOLVER_MAX_ITER = 300

# beyond this, exp(-ln2*lam/w - 1) underflows: the Lambert argument is an
# exact -0.0, the airtime ratio diverges and the device's portion is zero
_UNDERFLOW_EXPONENT = -700.0


@dataclass(frozen=True)
class SlotObservation:
    """The controller's per-slot view: backlogs, channel coefficients, arrivals.

    Under partial feedback q and z are snapshots; s is AP-local and always
    current.
    """

    q: Tuple[float, ...]
    z: Tuple[float, ...]
    s: Tuple[float, ...]
    delta: Tuple[float, ...]
    arrivals: Tuple[float, ...]

    def __post_init__(self):
        n = len(self.q)
        for name in ("z", "s", "delta", "arrivals"):
            if len(getattr(self, name)) != n:
                raise ValueError("SlotObservation: field lengths differ")
        for name in ("q", "z", "s", "delta", "arrivals"):
            if any(v < 0.0 for v in getattr(self, name)):
                raise ValueError(f"SlotObservation: {name} must be nonnegative")


@dataclass(frozen=True)
class BoundReport:
    """Closed-form worst-case backlogs, ages and optimality-gap constants."""

    b1: float
    b2: float
    q_max: Tuple[float, ...]
    z_max: Tuple[float, ...]
    s_max: Tuple[float, ...]
    g_max: Tuple[float, ...]


def decide_admission(q_i: float, arrival: float, v: float) -> float:
    """Utility-optimal admitted amount for one device.

    Admit the whole arrival while v >= (arrival+1)*q; otherwise the interior
    stationary point max(v/q - 1, 0). Empty queues always admit everything.
    """
    if q_i < 0.0 or arrival < 0.0 or v < 0.0:
        raise ValueError("decide_admission: inputs must be >= 0")
    if v >= (arrival + 1.0) * q_i:
        return arrival
    return max(v / q_i - 1.0, 0.0)


def decide_discard(q_i: float, z_i: float, v: float, p: float,
                   a_max_i: float) -> float:
    """Bang-bang discard: the full ceiling once q + z strictly exceeds v*p."""
    if q_i < 0.0 or z_i < 0.0 or v < 0.0 or a_max_i < 0.0:
        raise ValueError("decide_discard: inputs must be >= 0")
    if p < 1.0:
        raise ValueError("decide_discard: p must be >= 1")
    return a_max_i if q_i + z_i > v * p else 0.0


def select_offload_set(obs: SlotObservation, p: float) -> Set[int]:
    """Devices that receive airtime: those with s - q - z/p strictly negative.

    Devices whose AP backlog already dominates their own (s >= q + z/p) get
    zero airtime; a tie is excluded.
    """
    return {
        i for i in range(len(obs.q))
        if obs.s[i] - obs.q[i] - obs.z[i] / p < 0.0
    }


@njit(cache=True)
def _ratio_from_multiplier(lam: float, w: float) -> float:
    """Airtime ratio R = delta*mu0/mu solving Xi(R) = ln2*lam/w.

    Closed form through Lambert W: R = -1 - 1/W0(-exp(-ln2*lam/w - 1)),
    then Newton corrections on Xi(R) = y, whose derivative is R/(1+R)^2.
    For y below 1e-6 the Lambert argument sits so close to the branch point
    that the offset is lost to rounding, so the series inverse of
    Xi(R) = R^2/2 - 2R^3/3 + ... is used instead. Returns inf when the
    exponent underflows (the device's portion vanishes).
    """
    y = LN2 * lam / w
    if y < 1e-6:
        s = math.sqrt(2.0 * y)
        r = s + (2.0 / 3.0) * s * s - (1.0 / 12.0) * s * s * s
    else:
        t = -y - 1.0
        if t < _UNDERFLOW_EXPONENT:
            return np.inf
        u = lambert_w0(-math.exp(t))
        if u >= 0.0:
            return np.inf
        r = -1.0 - 1.0 / u
        if r <= 0.0:
            return np.inf
    if y < 1e-10:
        # Xi evaluates with ~1e-17 absolute noise; Newton would only inject it
        return r
    for _ in range(2):
        g = xi(r) - y
        gp = r / ((1.0 + r) * (1.0 + r))
        if gp <= 0.0:
            break
        r_new = r - g / gp
        if r_new <= 0.0:
            r_new = 0.5 * r
        r = r_new
        if abs(g) <= 1e-15 * (1.0 + y):
            break
    return r


@njit(cache=True)
def _solve_time_split(w, delta, sigma):
    """Multiplier search for the reduced uplink problem over the active set.

    w, delta: positive arrays over active devices. Returns
    (lam, mu0, mu, stat_resid, iters); stat_resid is |f(lam)| at exit.
    The search is bisection on the analytic bracket with Newton steps taken
    whenever they stay inside; f' = -sum_i delta_i/R_i - 1.
    """
    k = w.shape[0]
    mu = np.zeros(k)
    if k == 0:
        return 0.0, 0.0, mu, 0.0, 0

    ksum = 0.0
    for i in range(k):
        ksum += w[i] * delta[i] / LN2
    lo = 0.0
    hi = ksum  # f(ksum) < 0 because every R_i(lam) > 0
    lam = 0.5 * hi
    f = 0.0
    iters = 0
    for it in range(_SOLVER_MAX_ITER):
        iters = it + 1
        f = -lam
        fp = -1.0
        for i in range(k):
            r = _ratio_from_multiplier(lam, w[i])
            if np.isinf(r):
                continue
            f += (w[i] * delta[i] / LN2) / (1.0 + r)
            fp -= delta[i] / r
        if abs(f) <= sigma * (1.0 + lam):
            break
        if f > 0.0:
            lo = lam
        else:
            hi = lam
        nxt = lam - f / fp
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if nxt == lam:
            break
        lam = nxt

    total = 0.0
    for i in range(k):
        r = _ratio_from_multiplier(lam, w[i])
        if np.isinf(r):
            mu[i] = 0.0
        else:
            mu[i] = delta[i] / r
        total += mu[i]
    mu0 = 1.0 / (1.0 + total)
    for i in range(k):
        mu[i] *= mu0
    return lam, mu0, mu, abs(f), iters


def solve_allocation(w: np.ndarray, delta: np.ndarray, sigma: float = 1e-9):
    """Python-facing wrapper returning (lam, mu0, mu) with convergence check."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    lam, mu0, mu, resid, iters = _solve_time_split(w, delta, sigma)
    if w.size and resid > sigma * (1.0 + lam) and iters >= _SOLVER_MAX_ITER:
        raise ConvergenceError(
            f"time allocation: residual {resid:g} after {iters} iterations "
            f"(lam={lam:g}, n_active={w.size})"
        )
    return lam, mu0, mu


def allocate_time(obs: SlotObservation, active: Set[int], p: float,
                  kappa: float = 1e-12, sigma: float = 1e-9,
                  bandwidth_hz: float = 1.0):
    """Optimal transfer portion mu0 and per-device offload portions.

    Active devices must have strictly positive weight (q + z/p - s) and
    positive channel coefficient. The returned portions satisfy
    mu0 + sum(mu) = 1 whenever the active set is non-empty; an empty set
    yields an idle slot of all zeros. kappa is accepted for interface
    completeness; the Lambert evaluation always converges to machine
    precision, which is at least as tight as any practical kappa.
    """
    del kappa
    n = len(obs.q)
    mu_full = [0.0] * n
    idx = sorted(active)
    if not idx:
        return 0.0, tuple(mu_full)
    w = np.empty(len(idx))
    d = np.empty(len(idx))
    for j, i in enumerate(idx):
        w[j] = (obs.q[i] + obs.z[i] / p - obs.s[i]) * bandwidth_hz
        d[j] = obs.delta[i]
        if w[j] <= 0.0:
            raise ValueError(f"allocate_time: device {i} has non-positive weight")
        if d[j] <= 0.0:
            raise ValueError(f"allocate_time: device {i} has non-positive delta")
    _, mu0, mu = solve_allocation(w, d, sigma)
    for j, i in enumerate(idx):
        mu_full[i] = float(mu[j])
    return float(mu0), tuple(mu_full)


def compute_bounds(cfg: SystemConfig, c_cap: Sequence[float]) -> BoundReport:
    """Worst-case backlog/age bounds and the optimality-gap constants.

    Per device: q_max = V*(2 - e^-p) + a_max; z_max = p*(V + eps);
    s_max = q_max + z_max/p + c_cap; g_max = ceil((q_max + z_max/p)/eps).
    The gap constants are summed over devices; the feedback constant scales
    with the feedback interval m.
    """
    v, p, m = cfg.v_param, cfg.drop_price, cfg.feedback_interval
    q_max, z_max, s_max, g_max = [], [], [], []
    b1 = 0.0
    b2 = 0.0
    for i in range(cfg.n_devices):
        a = cfg.a_max[i]
        c = c_cap[i]
        r = cfg.r_max[i]
        eps = cfg.epsilon[i]
        qm = v * (2.0 - math.exp(-p)) + a
        zm = p * (v + eps)
        q_max.append(qm)
        z_max.append(zm)
        s_max.append(qm + zm / p + c)
        g_max.append(math.ceil((qm + zm / p) / eps) if eps > 0.0 else math.inf)
        b1 += 0.5 * max(eps ** 2, (a + c / p ** 2 - eps) ** 2) \
            + 0.5 * ((c + a) ** 2 + a ** 2 + c ** 2 + r ** 2)
        b2 += m * c * ((1.0 + 1.0 / p ** 2) * c + 2.0 * a)
    return BoundReport(b1, b2, tuple(q_max), tuple(z_max), tuple(s_max),
                       tuple(g_max))


def run_slot(obs: SlotObservation, cfg: SystemConfig, env) -> SlotDecision:
    """Full per-slot decision under the given observation.

    Composes exclusion, time allocation, capped rates, admission and discard
    into one control vector. Device-side rules read the observation's q and z;
    the caller is responsible for feeding true local state there when
    simulating partial feedback.
    """
    del env  # the observation already carries delta and arrivals
    p = cfg.drop_price
    active = select_offload_set(obs, p)
    mu0, mu = allocate_time(obs, active, p, cfg.kappa, cfg.sigma,
                            cfg.bandwidth_hz)
    n = cfg.n_devices
    rate = tuple(
        offload_rate(cfg, obs.delta[i], mu0, mu[i], i) for i in range(n)
    )
    admit = tuple(
        decide_admission(obs.q[i], obs.arrivals[i], cfg.v_param)
        for i in range(n)
    )
    if cfg.never_drop:
        drop = (0.0,) * n
    else:
        drop = tuple(
            decide_discard(obs.q[i], obs.z[i], cfg.v_param, p, cfg.a_max[i])
            for i in range(n)
        )
    return SlotDecision(mu0, mu, admit, drop, rate)

"""Scalar special functions and root finding used by the time-allocation solver.

All routines are plain float64 math, jitted so the simulation engine can call
them from inside its own compiled loop. They are equally usable as ordinary
Python functions.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

LN2 = math.log(2.0)

# branch point of the principal Lambert W branch, -1/e
BRANCH_POINT = -math.exp(-1.0)

# arguments within this distance of the branch point collapse to W0 = -1
# (Halley stagnates there because W0' diverges)
_BRANCH_PAD = 1e-12


@njit(cache=True)
def lambert_w0(x):
    """Principal branch of the Lambert W function on [-1/e, inf).

    Returns w >= -1 with w*exp(w) = x. Seeds: branch-point series in
    sqrt(2*(1 + e*x)) near -1/e, a short Taylor series near 0, and
    log(x) - log(log(x)) for large x; polished with Halley iterations
    until the step is at machine precision.
    """
    if x < BRANCH_POINT:
        if x >= BRANCH_POINT - _BRANCH_PAD:
            return -1.0
        raise ValueError("lambert_w0: argument below -1/e")
    if x <= BRANCH_POINT + _BRANCH_PAD:
        return -1.0
    if x == 0.0:
        return 0.0

    if x < -0.25:
        q = math.sqrt(2.0 * (1.0 + math.e * x))
        w = -1.0 + q - q * q / 3.0 + (11.0 / 72.0) * q * q * q
    elif x < 1.0:
        w = x * (1.0 - x + 1.5 * x * x)
        if w <= -1.0:
            w = -0.9999
    else:
        lx = math.log(x)
        w = lx - math.log(lx) if lx > 1.0 else lx

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        w1 = w + 1.0
        if w1 == 0.0:
            break
        denom = ew * w1 - (w + 2.0) * f / (2.0 * w1)
        if denom == 0.0:
            break
        dw = f / denom
        w -= dw
        if abs(dw) <= 1e-16 * (1.0 + abs(w)):
            break
    if w < -1.0:
        w = -1.0
    return w


@njit(cache=True)
def xi(x):
    """Xi(x) = ln(1+x) + 1/(1+x) - 1, strictly increasing for x > 0.

    This is the stationarity function of the per-device airtime share in the
    uplink allocation problem; its inverse is evaluated through lambert_w0.
    """
    if x <= -1.0:
        raise ValueError("xi: argument must be > -1")
    return math.log1p(x) + 1.0 / (1.0 + x) - 1.0


@dataclass(frozen=True)
class BisectionSpec:
    """Bracketed bisection parameters: interval [lo, hi], target width tol."""

    lo: float
    hi: float
    tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("BisectionSpec: requires lo < hi")
        if self.tol <= 0:
            raise ValueError("BisectionSpec: requires tol > 0")


class BracketingError(ValueError):
    """f(lo) and f(hi) do not straddle zero."""


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted before reaching the requested tolerance."""


def bisect(f, spec: BisectionSpec) -> float:
    """Root of a monotone function on [spec.lo, spec.hi] by plain bisection.

    Requires a sign change over the bracket. Stops when the interval is
    narrower than spec.tol; raises ConvergenceError if max_iter bisections
    do not get there.
    """
    lo, hi = spec.lo, spec.hi
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketingError(
            f"bisect: no sign change on [{lo}, {hi}] (f(lo)={flo}, f(hi)={fhi})"
        )
    for _ in range(spec.max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= spec.tol:
            return 0.5 * (lo + hi)
    raise ConvergenceError(
        f"bisect: interval still {hi - lo:g} wide after {spec.max_iter} iterations"
    )


def lambert_w0_array(x: np.ndarray) -> np.ndarray:
    """Elementwise lambert_w0 over an array (convenience for tests/plots)."""
    out = np.empty_like(np.asarray(x, dtype=np.float64))
    flat_in = np.asarray(x, dtype=np.float64).ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        flat_out[i] = lambert_w0(flat_in[i])
    return out

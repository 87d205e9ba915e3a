"""Range estimator for two independently sampled instances.

The estimate is a function of the determining vector ``(phi1, phi2)`` of
the outcome.  With ``phi1 >= phi2`` (the other case is symmetric) it is
``tau1 / min(tau1, phi1) * (phi1 - phi2)**p`` when ``phi2 > tau2``, and
otherwise

    p*tau1*tau2/min(phi1, tau1) * integral_{max(0, phi1-tau2)}^{phi1-phi2} y**(p-1)/(phi1-y) dy
        + tau1 * max(0, phi1-tau2)**p / min(phi1, tau1)

which has closed forms for p = 1 and p = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from ._stable import g_minus_one, s_minus_one, straddle_variance
from .outcomes import DeterminingVector

PHI_FLOOR = 1e-300
_QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


@dataclass(frozen=True)
class IndEstimatorParams:
    p: float
    tau1: float
    tau2: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("thresholds must be positive")


def _integral(phi1: float, phi2: float, tau2: float, p: float) -> float:
    """``integral y**(p-1)/(phi1-y) dy`` over ``[max(0, phi1-tau2), phi1-phi2]``."""
    a = max(0.0, phi1 - tau2)
    b = phi1 - phi2
    if b <= a:
        return 0.0
    mid = 0.5 * (a + b)
    if a == 0.0:
        # algebraic weight y**(p-1) absorbs the endpoint singularity for p < 1
        lower, _ = integrate.quad(lambda y: 1.0 / (phi1 - y), 0.0, mid, weight="alg", wvar=(p - 1.0, 0.0), **_QUAD)
    else:
        lower, _ = integrate.quad(lambda y: y ** (p - 1.0) / (phi1 - y), a, mid, **_QUAD)
    # s = phi1 - y = exp(t) tames the 1/(phi1-y) growth when phi2 << phi1
    upper, _ = integrate.quad(
        lambda t: (phi1 - math.exp(t)) ** (p - 1.0), math.log(phi2), math.log(phi1 - mid), **_QUAD
    )
    return lower + upper


def _estimate_sorted(phi1: float, phi2: float, tau1: float, tau2: float, p: float) -> float:
    if phi1 == 0.0:
        return 0.0
    scale = tau1 / min(tau1, phi1)
    if phi2 > tau2:
        return scale * (phi1 - phi2) ** p
    excess = max(0.0, phi1 - tau2)
    return scale * (p * tau2 * _integral(phi1, phi2, tau2, p) + excess**p)


def _check_phi(phi1, phi2):
    phi1 = np.asarray(phi1, dtype=np.float64)
    phi2 = np.asarray(phi2, dtype=np.float64)
    if np.any((phi1 < 0) | (phi2 < 0)):
        raise ValueError("determining vectors are nonnegative")
    lone_zero = (np.minimum(phi1, phi2) == 0) & (np.maximum(phi1, phi2) > 0)
    if np.any(lone_zero):
        raise ValueError("determining vector with one zero and one positive entry cannot arise")
    return phi1, phi2


def rg_L_independent_array(phi1, phi2, tau1, tau2, p: float, closed_form: bool = True) -> np.ndarray:
    """Vectorized estimator over arrays of determining vectors."""
    phi1, phi2 = _check_phi(phi1, phi2)
    phi1, phi2, tau1, tau2 = np.broadcast_arrays(phi1, phi2, np.asarray(tau1, float), np.asarray(tau2, float))
    swap = phi2 > phi1
    a = np.where(swap, phi2, phi1)
    b = np.where(swap, phi1, phi2)
    ta = np.where(swap, tau2, tau1)
    tb = np.where(swap, tau1, tau2)
    if not closed_form or p not in (1, 2):
        flat = [
            _estimate_sorted(float(x), max(float(y), PHI_FLOOR) if x > 0 else 0.0, float(s), float(t), p)
            for x, y, s, t in zip(a.ravel(), b.ravel(), ta.ravel(), tb.ravel())
        ]
        return np.array(flat, dtype=np.float64).reshape(a.shape)
    pos = a > 0
    b = np.where(pos, np.maximum(b, PHI_FLOOR), 1.0)
    a_safe = np.where(pos, a, 1.0)
    scale = ta / np.minimum(ta, a_safe)
    excess = np.maximum(0.0, a_safe - tb)
    cap = np.minimum(a_safe, tb)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.log(cap / b)
        if p == 1:
            inner = tb * log_term + excess
        else:
            inner = 2.0 * tb * (b - cap + a_safe * log_term) + excess**2
        revealed = scale * (a_safe - b) ** p
    out = np.where(b > tb, revealed, scale * inner)
    return np.where(pos, np.maximum(out, 0.0), 0.0)


def rg_L_independent(phi: DeterminingVector | Sequence[float], params: IndEstimatorParams) -> float:
    """Estimate of ``rg_p`` from a determining vector."""
    phi1, phi2 = (float(x) for x in phi)
    return float(rg_L_independent_array(phi1, phi2, params.tau1, params.tau2, params.p))


def var_rg_L_independent_equal_tau(v: Sequence[float], tau: float, p: float) -> float:
    """Closed-form variance with both thresholds equal to ``tau`` (p in {1, 2})."""
    return float(var_rg_L_independent_equal_tau_array(v[0], v[1], tau, p))


def var_rg_L_independent_equal_tau_array(v1, v2, tau, p: float) -> np.ndarray:
    if p not in (1, 2):
        raise ValueError("closed-form variance is available for p = 1 and p = 2 only")
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    hi, lo = np.maximum(v1, v2), np.minimum(v1, v2)
    tau = np.asarray(tau, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        # x*log(c/x) -> 0 as x -> 0
        lo_log_tau = np.where(lo > 0, lo * np.log(tau / np.where(lo > 0, lo, 1.0)), 0.0)
        hi_safe = np.where(hi > 0, hi, 1.0)
        # below the threshold: written so every term is nonnegative
        x = (hi - lo) / hi_safe
        ratio_sq = (tau / hi_safe) ** 2
        mid = straddle_variance(hi, np.minimum(lo, tau), tau, p)
        if p == 1:
            low = (hi - lo) ** 2 * (ratio_sq - 1 + ratio_sq * s_minus_one(x))
        else:
            low = (hi - lo) ** 4 * (ratio_sq - 1 + ratio_sq * g_minus_one(x))
    out = np.where(lo >= tau, 0.0, np.where(hi >= tau, mid, low))
    out = np.where(hi == 0, 0.0, out)
    return np.maximum(out, 0.0)


def expected_over_outcomes(
    fn: Callable[[float, float], float], v: Sequence[float], tau1: float, tau2: float
) -> float:
    """Expectation of ``fn(phi1, phi2)`` over independent seeds, by 1-D quadrature.

    Given the inclusion pattern the determining vector depends only on the seed
    of the unsampled entry, so each pattern is a single integral.
    """
    v1, v2 = float(v[0]), float(v[1])
    q1, q2 = min(1.0, v1 / tau1), min(1.0, v2 / tau2)
    total = q1 * q2 * fn(v1, v2) if q1 > 0 and q2 > 0 else 0.0
    if q1 > 0 and q2 < 1:
        pts = [v1 / tau2] if q2 < v1 / tau2 < 1 else None
        val, _ = integrate.quad(lambda u: fn(v1, min(u * tau2, v1)), q2, 1.0, points=pts, **_QUAD)
        total += q1 * val
    if q2 > 0 and q1 < 1:
        pts = [v2 / tau1] if q1 < v2 / tau1 < 1 else None
        val, _ = integrate.quad(lambda u: fn(min(u * tau1, v2), v2), q1, 1.0, points=pts, **_QUAD)
        total += q2 * val
    return total


def expected_square_independent(v: Sequence[float], tau1: float, tau2: float, p: float) -> float:
    params = IndEstimatorParams(p, tau1, tau2)
    return expected_over_outcomes(lambda a, b: rg_L_independent((a, b), params) ** 2, v, tau1, tau2)


def variance_independent(v: Sequence[float], tau1: float, tau2: float, p: float) -> float:
    """Variance for any thresholds and ``p``; closed forms when they apply."""
    if tau1 == tau2 and p in (1, 2):
        return var_rg_L_independent_equal_tau(v, tau1, p)
    mean = abs(float(v[0]) - float(v[1])) ** p
    return max(expected_square_independent(v, tau1, tau2, p) - mean**2, 0.0)

"""Estimators of ``rg_p`` for coordinated (shared-seed) outcomes.

On a coordinated outcome the information is monotone in the seed: a smaller
seed reveals at least as much.  The lower bound function ``LB(u)`` (the
infimum of ``rg_p`` over consistent vectors when the seed is ``u``) drives
every estimator here:

* L estimator: ``LB(zeta)/zeta - integral_zeta^1 LB(u)/u**2 du``.
* U estimator: optimal for vectors whose minimum is 0.
* v-optimal estimates: negated slope of the lower convex hull of ``LB``
  anchored at ``(1, 0)``; they give the minimum attainable ``E[est**2]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from ._stable import g_minus_one, s_minus_one, straddle_variance
from .outcomes import Outcome, lower_bound_rg, rg
from .seeds import Mode

_QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


def _require_coordinated(o: Outcome) -> None:
    if o.mode is not Mode.COORDINATED:
        raise ValueError("coordinated estimators need a shared-seed outcome")


@dataclass(frozen=True)
class CoordOutcomeView:
    """Summary of an equal-threshold coordinated outcome.

    ``m`` is the largest known value, ``n`` the minimum when every entry is
    known (else 0) and ``vmin`` the minimum or its bound ``zeta * tau``.
    """

    m: float
    n: float
    vmin: float
    zeta: float
    tau: float
    r: int
    size: int

    @classmethod
    def of(cls, o: Outcome) -> "CoordOutcomeView":
        _require_coordinated(o)
        if not o.equal_tau:
            raise ValueError("this estimator needs equal thresholds across instances")
        known = o.known
        zeta, tau = o.seeds[0], o.thresholds[0]
        if not known:
            return cls(0.0, 0.0, 0.0, zeta, tau, o.r, 0)
        full = len(known) == o.r
        lo = min(known)
        return cls(max(known), lo if full else 0.0, lo if full else zeta * tau, zeta, tau, o.r, len(known))


# ---------------------------------------------------------------------------
# L estimator


def rg_L_equal_tau_array(m, vmin, tau, p: float) -> np.ndarray:
    """L estimate from ``(m, vmin, tau)``; closed form for p in {1, 2}, series otherwise.

    Rows with ``m == 0`` (nothing sampled) give 0.
    """
    m = np.asarray(m, dtype=np.float64)
    vmin = np.asarray(vmin, dtype=np.float64)
    m, vmin, tau = np.broadcast_arrays(m, vmin, np.asarray(tau, dtype=np.float64))
    live = m > 0
    if p not in (1, 2):
        out = np.zeros(m.shape)
        flat = out.reshape(-1)
        for j in np.flatnonzero(live):
            flat[j] = _rg_L_equal_tau_general(float(m.flat[j]), float(vmin.flat[j]), float(tau.flat[j]), p)
        return out
    ms = np.where(live, m, 1.0)
    vs = np.where(live, vmin, 1.0)
    log_term = np.log(np.minimum(ms, tau) / np.minimum(vs, tau))
    if p == 1:
        est = np.maximum(ms - tau, 0.0) - np.maximum(vs - tau, 0.0) + tau * log_term
    else:
        hi_v = np.maximum(vs, tau)
        est = np.maximum(ms, tau) ** 2 - hi_v**2 - 2.0 * hi_v * (ms - vs) + 2.0 * tau * ms * log_term
    return np.where(live, np.maximum(est, 0.0), 0.0)


def _resid_primitive(y: float, p: float, terms: int = 64) -> float:
    """``integral_0^y ((1-t)**p - 1 + p*t) / t**2 dt`` for ``0 <= y <= 1``.

    A power series in ``y`` up to 1/2; beyond, the value at 1 minus a series in
    ``(1-y)**(p+j)``, both converging at least as fast as ``2**-j``.
    """
    if y <= 0.5:
        a, yk, total = p * (p - 1) / 2, y, 0.0
        for k in range(2, 2 + terms):
            total += a * yk / (k - 1)
            a *= (k - p) / (k + 1)
            yk *= y
        return total
    s = 1.0 - y
    at_one = 1.0 - p + p * (special.digamma(p) + np.euler_gamma)
    j = np.arange(terms)
    tail = float(np.sum((j + 1) * s ** (p + j + 1) / (p + j + 1)))
    return float(at_one - tail + s / y + p * math.log(y))


def _rg_L_equal_tau_general(m: float, vmin: float, tau: float, p: float) -> float:
    if vmin >= m:
        return 0.0
    lo, hi = min(1.0, vmin / tau), min(1.0, m / tau)
    if lo >= 1.0:
        return (m - vmin) ** p
    # (m - x*tau)**p / x**2 = m**p/x**2 - p*m**(p-1)*tau/x + resid(x); the first two
    # integrate exactly and cancel against the leading term, leaving a bounded remainder
    lead = tau * m**p * math.expm1(p * math.log1p(-vmin / m)) / vmin
    # the remainder in y = x*tau/m, where y <= 1 on [lo, hi]
    rest = tau * m ** (p - 1) * (_resid_primitive(min(hi * tau / m, 1.0), p) - _resid_primitive(lo * tau / m, p))
    est = lead + m**p / hi + p * m ** (p - 1) * tau * math.log(hi / lo) - rest
    return max(est, 0.0)


def _lb_over_u_sq(top: float, low: float, c: float, l: float, r: float, p: float) -> float:
    """``integral_l^r (top - min(low, c*u))**p / u**2 du`` (``c = inf`` means no bound)."""
    cut = low / c if c < math.inf else 0.0
    total = 0.0
    e = min(r, cut)
    if e > l:
        # the bound c*u is the binding minimum below ``cut``
        if p == 1:
            total += top * (1.0 / l - 1.0 / e) - c * math.log(e / l)
        elif p == 2:
            total += top * top * (1.0 / l - 1.0 / e) - 2.0 * top * c * math.log(e / l) + c * c * (e - l)
        elif e == top / c:
            # (top - c*u)**p vanishes at e; the algebraic weight absorbs it for p < 1
            val, _ = integrate.quad(lambda u: c**p / (u * u), l, e, weight="alg", wvar=(0.0, p), **_QUAD)
            total += val
        else:
            val, _ = integrate.quad(lambda u: max(top - c * u, 0.0) ** p / (u * u), l, e, **_QUAD)
            total += val
        l = e
    if r > l:
        total += (top - low) ** p * (1.0 / l - 1.0 / r)
    return total


def rg_L_general(o: Outcome, p: float) -> float:
    """L estimate for arbitrary per-instance thresholds, integrating ``LB`` piecewise."""
    _require_coordinated(o)
    zeta = o.seeds[0]
    lead = lower_bound_rg(o, p) / zeta
    sampled = o.sampled
    if not sampled or zeta >= 1.0:
        return max(lead, 0.0)
    ratio = {i: o.values[i] / o.thresholds[i] for i in sampled}
    cuts = sorted({zeta, 1.0} | {x for x in ratio.values() if zeta < x < 1.0})
    tail = 0.0
    for l, r in zip(cuts[:-1], cuts[1:]):
        keep = [i for i in sampled if ratio[i] >= r]
        if not keep:
            break
        vals = [o.values[i] for i in keep]
        rest = [o.thresholds[i] for i in range(o.r) if i not in keep]
        c = min(rest) if rest else math.inf
        tail += _lb_over_u_sq(max(vals), min(vals), c, l, r, p)
    return max(lead - tail, 0.0)


def rg_L_coordinated(o: Outcome, p: float) -> float:
    """L estimate of ``rg_p`` on a coordinated outcome."""
    _require_coordinated(o)
    if not o.sampled:
        return 0.0
    if o.equal_tau:
        view = CoordOutcomeView.of(o)
        return float(rg_L_equal_tau_array(view.m, view.vmin, view.tau, p))
    return rg_L_general(o, p)


def var_rg_L_coordinated(v: Sequence[float], tau: float, p: float) -> float:
    """Closed-form variance of the L estimator with equal thresholds (p in {1, 2})."""
    return float(var_rg_L_coordinated_array(max(v), min(v), tau, p))


def var_rg_L_coordinated_array(vmax, vmin, tau, p: float) -> np.ndarray:
    if p not in (1, 2):
        raise ValueError("closed-form variance is available for p = 1 and p = 2 only")
    M = np.asarray(vmax, dtype=np.float64)
    m = np.asarray(vmin, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    R = M - m
    pos = m > 0
    ms = np.where(pos, m, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        m_log_tau = np.where(pos, m * np.log(tau / ms), 0.0)
        # below the threshold: written so every term is nonnegative
        Ms = np.where(M > 0, M, 1.0)
        x = R / Ms
        ratio = tau / Ms
    if p == 1:
        below = R**2 * (ratio - 1 + ratio * s_minus_one(x))
    else:
        below = R**4 * (ratio - 1 + ratio * g_minus_one(x))
    straddle = straddle_variance(M, np.minimum(m, tau), tau, int(p))
    out = np.where(m >= tau, 0.0, np.where(M <= tau, below, straddle))
    return np.maximum(np.where(M == 0, 0.0, out), 0.0)


# ---------------------------------------------------------------------------
# U estimator


def _eta0(m: float, tau: float, p: float) -> float:
    return (p * tau - m) / ((p - 1.0) * tau)


def rg_U_scalar(m: float, n: float, zeta: float, tau: float, p: float, size: int = 1) -> float:
    """Algorithm for the U estimate from the outcome summary ``(m, n, zeta)``."""
    if size == 0 or m == 0:
        return 0.0
    if n >= tau:
        return (m - n) ** p
    if p <= 1:
        if n == 0:
            return m**p * tau / min(m, tau)
        c = min(m, tau)
        return (tau / n) * ((m - n) ** p - (c - n) / c * m**p)
    if m <= tau:
        return p * tau * max(m - zeta * tau, 0.0) ** (p - 1) if zeta * tau > n else 0.0
    eta = _eta0(m, tau, p)
    if 0 < eta < 1:
        chord = (m - eta * tau) ** p / (1 - eta)
        if zeta >= max(eta, n / tau):
            return chord
        if n / tau < zeta < eta:
            return p * tau * max(m - zeta * tau, 0.0) ** (p - 1)
        if n / tau <= eta:
            return 0.0
        return tau * (m - n) ** p / n - (tau - n) * chord / n
    if zeta * tau > n:
        return m**p
    return (tau / n) * (m - n) ** p - m**p * (tau / n - 1)


def rg_U_array(m, n, zeta, tau, p: float) -> np.ndarray:
    """Vectorized U estimate; ``m == 0`` rows give 0."""
    m, n, zeta, tau = (np.asarray(x, dtype=np.float64) for x in (m, n, zeta, tau))
    m, n, zeta, tau = np.broadcast_arrays(m, n, zeta, tau)
    partial = zeta * tau > n
    ns = np.where(n > 0, n, 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if p <= 1:
            c = np.minimum(m, tau)
            cs = np.where(c > 0, c, 1.0)
            est = np.where(
                n == 0,
                m**p * tau / cs,
                (tau / ns) * ((m - n) ** p - (c - n) / cs * m**p),
            )
        else:
            curve = p * tau * np.maximum(m - zeta * tau, 0.0) ** (p - 1)
            eta = (p * tau - m) / ((p - 1.0) * tau)
            has_eta = (eta > 0) & (eta < 1)
            eta_s = np.where(has_eta, eta, 0.5)
            chord = np.maximum(m - eta_s * tau, 0.0) ** p / (1 - eta_s)
            with_eta = np.select(
                [partial & (zeta >= eta_s), partial, n / tau <= eta_s],
                [chord, curve, 0.0],
                tau * (m - n) ** p / ns - (tau - n) * chord / ns,
            )
            no_eta = np.where(partial, m**p, (tau / ns) * (m - n) ** p - m**p * (tau / ns - 1))
            est = np.where(m <= tau, np.where(partial, curve, 0.0), np.where(has_eta, with_eta, no_eta))
        est = np.where(n >= tau, (m - n) ** p, est)
    return np.where(m > 0, np.maximum(est, 0.0), 0.0)


def rg_U_coordinated(o: Outcome, p: float) -> float:
    view = CoordOutcomeView.of(o)
    return rg_U_scalar(view.m, view.n, view.zeta, view.tau, p, view.size)


def expected_square_U(v: Sequence[float], tau: float, p: float) -> float:
    """``E[U**2]`` for data ``v`` with equal threshold ``tau``, by exact piecewise integration."""
    M, lo = float(max(v)), float(min(v))
    if M == 0:
        return 0.0
    a, b = min(1.0, lo / tau), min(1.0, M / tau)
    total = 0.0
    if a > 0:
        total += a * rg_U_scalar(M, lo, 0.5 * a, tau, p, len(v)) ** 2
    if b <= a:
        return total

    def curve_sq(c, d):
        return p * p * tau * ((M - c * tau) ** (2 * p - 1) - (M - d * tau) ** (2 * p - 1)) / (2 * p - 1)

    if p <= 1:
        total += (b - a) * (M**p * tau / min(M, tau)) ** 2
    elif M <= tau:
        total += curve_sq(a, b)
    else:
        eta = _eta0(M, tau, p)
        if 0 < eta < 1:
            s = min(max(eta, a), b)
            total += curve_sq(a, s) + (b - s) * ((M - eta * tau) ** p / (1 - eta)) ** 2
        else:
            total += (b - a) * M ** (2 * p)
    return total


def variance_U(v: Sequence[float], tau: float, p: float) -> float:
    return max(expected_square_U(v, tau, p) - rg(v, p) ** 2, 0.0)


# ---------------------------------------------------------------------------
# numeric moments over the shared seed


def expected_over_seed(
    fn: Callable[[Outcome], float],
    v: Sequence[float],
    tau,
    extra_points: Sequence[float] = (),
) -> float:
    """``integral_0^1 fn(outcome(u, v)) du`` with breakpoints where the outcome changes."""
    taus = [tau] * len(v) if np.isscalar(tau) else list(tau)
    # a value is revealed at x/t of its own threshold and meets another entry's bound at x/t of that one
    kinks = {x / t for x in v for t in taus if 0 < x / t < 1}
    pts = sorted(kinks | {x for x in extra_points if 0 < x < 1})
    edges = [0.0] + pts + [1.0]
    total = 0.0
    for l, r in zip(edges[:-1], edges[1:]):
        if r > l:
            val, _ = integrate.quad(lambda u: fn(Outcome.coordinated(v, u, taus)), l, r, **_QUAD)
            total += val
    return total


def _u_points(v, tau, p) -> list[float]:
    M = max(v)
    if p > 1 and M > tau:
        return [_eta0(M, tau, p)]
    return []


def expected_square_L(v: Sequence[float], tau, p: float) -> float:
    if np.isscalar(tau) and p in (1, 2):
        return var_rg_L_coordinated(v, tau, p) + rg(v, p) ** 2
    return expected_over_seed(lambda o: rg_L_coordinated(o, p) ** 2, v, tau)


def variance_L(v: Sequence[float], tau, p: float) -> float:
    return max(expected_square_L(v, tau, p) - rg(v, p) ** 2, 0.0)


# ---------------------------------------------------------------------------
# v-optimal estimates


@dataclass(frozen=True)
class HullSegment:
    """Piece of the lower hull on ``[start, end]``.

    ``kind`` is ``"chord"`` (constant estimate ``slope``), ``"curve"``
    (estimate ``p*tau*(M - u*tau)**(p-1)``) or ``"zero"``.
    """

    start: float
    end: float
    kind: str
    slope: float = 0.0


@dataclass(frozen=True)
class LowerHull:
    M: float
    m: float
    tau: float
    p: float
    alpha: Optional[float]
    segments: tuple[HullSegment, ...]

    @property
    def rg(self) -> float:
        return (self.M - self.m) ** self.p

    def _segment(self, u: float) -> Optional[HullSegment]:
        for seg in self.segments:
            if seg.start <= u <= seg.end:
                return seg
        return None

    def estimate(self, u: float) -> float:
        """Negated hull slope at ``u`` (the v-optimal estimate)."""
        seg = self._segment(u)
        if seg is None or seg.kind == "zero":
            return 0.0
        if seg.kind == "chord":
            return seg.slope
        return self.p * self.tau * max(self.M - u * self.tau, 0.0) ** (self.p - 1)

    def value(self, u: float) -> float:
        """Hull height ``H(u)``."""
        h = self.rg
        for seg in self.segments:
            if u <= seg.start:
                break
            e = min(u, seg.end)
            if seg.kind == "chord":
                h -= seg.slope * (e - seg.start)
            elif seg.kind == "curve":
                h = (self.M - e * self.tau) ** self.p
        return max(h, 0.0)

    def expected_square(self) -> float:
        total = 0.0
        M, tau, p = self.M, self.tau, self.p
        for seg in self.segments:
            if seg.kind == "chord":
                total += seg.slope**2 * (seg.end - seg.start)
            elif seg.kind == "curve":
                total += (
                    p * p * tau * ((M - seg.start * tau) ** (2 * p - 1) - (M - seg.end * tau) ** (2 * p - 1)) / (2 * p - 1)
                )
        return total


def _tangent_point(M: float, R: float, tau: float, p: float, a: float, b: float) -> Optional[float]:
    """Where the line from ``(0, R)`` touches ``(M - u*tau)**p``; ``None`` if not on ``[a, b]``."""

    def g(x):
        return (M - x * tau) ** (p - 1) * (M + (p - 1) * x * tau) - R

    ga, gb = g(a), g(b)
    if ga <= 0:
        return a
    if gb >= 0:
        return None
    return optimize.brentq(g, a, b, xtol=1e-12, rtol=4 * np.finfo(float).eps)


def v_optimal_hull(v: Sequence[float], tau: float, p: float) -> LowerHull:
    """Lower convex hull of the lower bound function of ``v``, anchored at ``(1, 0)``."""
    M, m = float(max(v)), float(min(v))
    tau, p = float(tau), float(p)
    R = (M - m) ** p
    if M == m:
        return LowerHull(M, m, tau, p, None, (HullSegment(0.0, 1.0, "zero"),))
    b = min(1.0, M / tau)
    a = m / tau
    if a >= 1.0:
        return LowerHull(M, m, tau, p, None, (HullSegment(0.0, 1.0, "chord", R),))
    if p <= 1:
        segs = [HullSegment(0.0, b, "chord", R / b)]
        if b < 1:
            segs.append(HullSegment(b, 1.0, "zero"))
        return LowerHull(M, m, tau, p, b, tuple(segs))
    alpha = _tangent_point(M, R, tau, p, a, b)
    if M <= tau:
        segs = []
        if alpha > 0:
            segs.append(HullSegment(0.0, alpha, "chord", (R - (M - alpha * tau) ** p) / alpha))
        segs.append(HullSegment(alpha, b, "curve"))
        if b < 1:
            segs.append(HullSegment(b, 1.0, "zero"))
        return LowerHull(M, m, tau, p, alpha, tuple(segs))
    beta = _eta0(M, tau, p)
    if alpha is None or not (a <= beta < 1) or alpha > beta:
        return LowerHull(M, m, tau, p, None, (HullSegment(0.0, 1.0, "chord", R),))
    segs = []
    if alpha > 0:
        segs.append(HullSegment(0.0, alpha, "chord", (R - (M - alpha * tau) ** p) / alpha))
    segs.append(HullSegment(alpha, beta, "curve"))
    segs.append(HullSegment(beta, 1.0, "chord", (M - beta * tau) ** p / (1 - beta)))
    return LowerHull(M, m, tau, p, alpha, tuple(segs))


def v_optimal_estimate(v: Sequence[float], tau: float, p: float, u: float) -> float:
    return v_optimal_hull(v, tau, p).estimate(u)


def min_expected_square(v: Sequence[float], tau: float, p: float) -> float:
    """Smallest ``E[est**2]`` any unbiased nonnegative estimator attains at ``v``."""
    return v_optimal_hull(v, tau, p).expected_square()

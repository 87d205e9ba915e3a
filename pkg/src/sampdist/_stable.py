"""Cancellation-free pieces of the closed-form variances.

With ``x = (max - min) / max`` and ``L = -log1p(-x)`` the below-threshold
variances reduce to

    S(x) = 2 * (x - (1 - x) * L) / x**2                 = 1 + sum_{k>=3} 2 x**(k-2) / (k (k-1))
    G(x) = 2 * (2x + x**2 - 4x**3/3 - 2(1 - x**2) L) / x**4 = 1 + sum_{k>=5} 8 x**(k-4) / (k (k-2))

whose direct forms lose every digit as ``x -> 0``.  These helpers return
``S - 1`` and ``G - 1``, by power series for small ``x``.
"""

from __future__ import annotations

import numpy as np

_SERIES_MAX_X = 0.3
_TERMS = 64


def _series(x: np.ndarray, coef) -> np.ndarray:
    out = np.zeros_like(x)
    for c in coef[::-1]:
        out = out * x + c
    return out


_S_COEF = np.array([2.0 / (k * (k - 1)) for k in range(3, 3 + _TERMS)])
_G_COEF = np.array([8.0 / (k * (k - 2)) for k in range(5, 5 + _TERMS)])


def s_minus_one(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    small = x < _SERIES_MAX_X
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 0.5, np.minimum(x, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        one_minus_L = np.where(xl < 1.0, (1.0 - xl) * -np.log1p(-xl), 0.0)
        direct = 2.0 * (xl - one_minus_L) / xl**2 - 1.0
    return np.where(small, xs * _series(xs, _S_COEF), direct)


def g_minus_one(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    small = x < _SERIES_MAX_X
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 0.5, np.minimum(x, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_part = np.where(xl < 1.0, (1.0 - xl**2) * -np.log1p(-xl), 0.0)
        direct = 2.0 * (2 * xl + xl**2 - 4 * xl**3 / 3 - 2 * log_part) / xl**4 - 1.0
    return np.where(small, xs * _series(xs, _G_COEF), direct)


def straddle_variance(M, m, tau, p: int) -> np.ndarray:
    """Variance of the L estimator (independent or coordinated) when ``m < tau <= M``.

    With ``w = 1 - m/tau`` and ``mu = M/tau = 1 + delta`` the p = 2 form is
    ``tau**4 * sum_k c_k w**k`` with nonnegative ``c_k``:
    ``c_3 = 4 delta**2 / 3``, ``c_4 = (5 delta + 2 delta**2) / 3`` and
    ``c_k = 8 mu**2 / (k (k-1)) + 8 mu / (k (k-1) (k-2))`` beyond.  The p = 1
    form is ``tau**2 * w**2 * (S(w) - 1)``.
    """
    M, m, tau = (np.asarray(a, dtype=np.float64) for a in (M, m, tau))
    w = (tau - m) / tau
    if p == 1:
        return tau**2 * w**2 * s_minus_one(w)
    small = w < _SERIES_MAX_X
    ws = np.where(small, w, 0.0)
    # rows off the series branch, or with nothing to add, can have huge M/tau
    mu = np.where(small & (w > 0), M / tau, 1.0)
    delta = mu - 1.0
    ks = np.arange(5, 5 + _TERMS, dtype=np.float64)
    a = 8.0 / (ks * (ks - 1))
    b = 8.0 / (ks * (ks - 1) * (ks - 2))
    tail = _series(ws, a) * mu**2 + _series(ws, b) * mu
    series = ws**3 * (4 * delta**2 / 3 + ws * (5 * delta + 2 * delta**2) / 3 + ws**2 * tail)
    pos = m > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ms = np.where(pos, m, 1.0)
        m_log_tau = np.where(pos, m * np.log(tau / ms), 0.0)
    direct = (
        4 * M * tau * (m - 2 * M) * m_log_tau
        + 4 * M * m * tau**2
        + tau**4 / 3
        + 8 * m**3 * tau / 3
        - 6 * M * m**2 * tau
        - 4 * M**2 * m**2
        - 2 * m**2 * tau**2
        - m**4
        + 4 * M * m**3
        + 4 * M**2 * tau**2
        - 2 * M * tau**3
    )
    return np.where(small, tau**4 * series, direct)

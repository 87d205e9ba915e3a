"""Estimator with the smallest worst-case variance ratio to the v-optimal bound.

Work in units where ``max(v) = 1`` and ``max(v) <= tau``.  A partial outcome
(minimum unknown) reveals the bound ``y = u*tau/max(v)`` on ``min/max`` and
gets the normalized estimate ``F(y)``.  A full outcome reveals ``z = min/max``;
unbiasedness fixes its estimate to ``G(z) = ((1-z)**p - Phi(z)) / z`` with
``Phi(z) = integral_z^1 F``.  Scaled back, estimates are ``tau * max**(p-1)``
times these and ``E[est**2] = tau * max**(2p-1) * Q(z)`` where

    Q(z) = z * G(z)**2 + integral_z^1 F**2.

``F`` is piecewise constant on a geometric grid of ``z`` values.  For a
candidate ratio ``c`` the grid is swept from ``z = 1`` downwards, each cell
taking the largest value that keeps ``Q <= c * Q*`` and ``G >= 0`` at the
cell's left end, where ``Q*`` is the v-optimal ``E[est**2]``.  The smallest
feasible ``c`` is found by bisection.  Outcomes with ``max(v) > tau`` fall
back to the L estimator.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coordinated import CoordOutcomeView, min_expected_square, rg_L_equal_tau_array, expected_square_L
from .outcomes import Outcome

FORMAT_TAG = "sampdist-oc-table"
FORMAT_VERSION = 1
MIN_RESOLUTION = 100


@dataclass(frozen=True, eq=False)
class OCTable:
    """Normalized OC estimates.

    ``grid`` descends from 1 to ``z_min``; ``values[j]`` is ``F`` on
    ``(grid[j+1], grid[j]]``, and ``tail`` is ``F`` below ``z_min``.
    """

    p: float
    grid_resolution: int
    z_min: float
    c: float
    grid: np.ndarray
    values: np.ndarray
    tail: float

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        self.grid.setflags(write=False)
        self.values.setflags(write=False)
        widths = self.grid[:-1] - self.grid[1:]
        # cumulative mass and second moment from z = 1 down to each grid point
        phi = np.concatenate([[0.0], np.cumsum(self.values * widths)])
        sq = np.concatenate([[0.0], np.cumsum(self.values**2 * widths)])
        object.__setattr__(self, "_phi", phi)
        object.__setattr__(self, "_sq", sq)

    def _cell(self, z: float) -> int:
        # index j with grid[j+1] < z <= grid[j]; len(values) for the tail
        j = int(np.searchsorted(-self.grid, -z, side="right")) - 1
        return min(max(j, 0), len(self.values))

    def F(self, y: float) -> float:
        """Normalized estimate on a partial outcome with bound ``y``."""
        if y > 1.0:
            return 0.0
        j = self._cell(y)
        return float(self.values[j]) if j < len(self.values) else self.tail

    def Phi(self, z: float) -> float:
        z = min(max(z, 0.0), 1.0)
        j = self._cell(z)
        if j < len(self.values):
            return float(self._phi[j] + self.values[j] * (self.grid[j] - z))
        return float(self._phi[-1] + self.tail * (self.z_min - z))

    def square_integral(self, z: float) -> float:
        """``integral_z^1 F**2``."""
        z = min(max(z, 0.0), 1.0)
        j = self._cell(z)
        if j < len(self.values):
            return float(self._sq[j] + self.values[j] ** 2 * (self.grid[j] - z))
        return float(self._sq[-1] + self.tail**2 * (self.z_min - z))

    def G(self, z: float) -> float:
        """Normalized estimate on a full outcome with ``min/max = z``."""
        if z <= 0 or z >= 1:
            return 0.0
        return max(((1.0 - z) ** self.p - self.Phi(z)) / z, 0.0)

    def Q(self, z: float) -> float:
        """Normalized ``E[est**2]`` for data with ``min/max = z``."""
        return z * self.G(z) ** 2 + self.square_integral(z)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "p": self.p,
            "grid_resolution": self.grid_resolution,
            "z_min": self.z_min,
            "c": self.c,
            "tail": self.tail,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OCTable":
        if d.get("format") != FORMAT_TAG or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported OC table file")
        return cls(
            float(d["p"]), int(d["grid_resolution"]), float(d["z_min"]), float(d["c"]),
            np.array(d["grid"]), np.array(d["values"]), float(d["tail"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "OCTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def qstar(z: float, p: float) -> float:
    """Normalized v-optimal ``E[est**2]`` for data ``(1, z)`` with ``tau = 1``."""
    return min_expected_square((1.0, z), 1.0, p)


def oc_grid(grid_resolution: int, z_min: float, near_one: float = 1e-8) -> np.ndarray:
    """Descending grid from 1 to ``z_min``.

    ``grid_resolution`` points are geometric in ``z``; above ``z = 1/2`` they are
    replaced by points geometric in ``1 - z`` with the same ratio, reaching down
    to ``1 - near_one``, so every cell is narrow relative to its distance from
    both ends.
    """
    body = np.geomspace(1.0, z_min, grid_resolution)
    step = math.log(body[0] / body[1])
    n_near = max(int(math.ceil(math.log(0.5 / near_one) / step)) + 1, 2)
    near = 1.0 - np.geomspace(near_one, 0.5, n_near)
    return np.concatenate([[1.0], near, body[body < 0.5]])


def _sweep(c: float, p: float, z: np.ndarray, qs: np.ndarray) -> Optional[np.ndarray]:
    values = np.empty(len(z) - 1)
    phi = 0.0
    sq = 0.0
    for j in range(1, len(z)):
        w = z[j - 1] - z[j]
        zj = z[j]
        d0 = (1.0 - zj) ** p - phi
        # Q(zj) as a quadratic in the cell value f: A f^2 + B f + C0
        A = w * w / zj + w
        B = -2.0 * d0 * w / zj
        C0 = d0 * d0 / zj + sq
        disc = B * B - 4.0 * A * (C0 - c * qs[j])
        if disc < 0:
            return None
        root = math.sqrt(disc)
        low = max((-B - root) / (2 * A), 0.0)
        # a zero first cell keeps the ratio bounded as min/max -> 1
        f = low if j == 1 else min((-B + root) / (2 * A), d0 / w)
        if f < low:
            return None
        values[j - 1] = f
        phi += f * w
        sq += f * f * w
    return values


def oc_build(
    p: float,
    grid_resolution: int = 2000,
    z_min: float = 1e-4,
    c_tol: float = 1e-3,
    c_max: float = 4.0,
    near_one: float = 1e-8,
) -> OCTable:
    """Build the OC table for exponent ``p``; ``c`` is the achieved worst ratio on the grid.

    ``grid_resolution`` points are placed geometrically down to ``z_min``; a
    quarter as many more refine the cells next to ``z = 1`` down to a width
    of ``near_one``.
    """
    if grid_resolution < MIN_RESOLUTION:
        raise ValueError(f"grid_resolution must be at least {MIN_RESOLUTION}")
    if not 0 < z_min < 1:
        raise ValueError("z_min must lie in (0, 1)")
    p = float(p)
    z = oc_grid(grid_resolution, z_min, near_one)
    qs = np.array([0.0] + [qstar(x, p) for x in z[1:]])
    lo, hi = 1.0, c_max
    best = _sweep(hi, p, z, qs)
    if best is None:
        raise RuntimeError(f"no feasible table with ratio {c_max}")
    while hi - lo > c_tol:
        mid = 0.5 * (lo + hi)
        found = _sweep(mid, p, z, qs)
        if found is None:
            lo = mid
        else:
            hi, best = mid, found
    widths = z[:-1] - z[1:]
    tail = (1.0 - float(np.dot(best, widths))) / z_min
    table = OCTable(p, grid_resolution, z_min, hi, z, best, max(tail, 0.0))
    achieved = max(table.Q(x) / q for x, q in zip(z[1:], qs[1:]))
    return OCTable(p, grid_resolution, z_min, float(achieved), z, best, max(tail, 0.0))


def oc_estimate(table: OCTable, o: Outcome) -> float:
    """OC estimate on a coordinated equal-threshold outcome."""
    view = CoordOutcomeView.of(o)
    return float(oc_estimate_array(table, view.m, view.n, view.zeta, view.tau)[()])


def oc_estimate_array(table: OCTable, m, n, zeta, tau) -> np.ndarray:
    """Vectorized OC estimate from outcome summaries (``n = 0`` marks partial outcomes)."""
    m, n, zeta, tau = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (m, n, zeta, tau)))
    p = table.p
    out = np.zeros(m.shape)
    live = m > 0
    over = live & (m > tau)
    if np.any(over):
        vmin = np.where(n > 0, n, zeta * tau)
        out[over] = rg_L_equal_tau_array(m[over], vmin[over], tau[over], p)
    inside = live & ~over
    if np.any(inside):
        idx = np.flatnonzero(inside)
        ms, ns, zs, ts = m.flat[idx], n.flat[idx], zeta.flat[idx], tau.flat[idx]
        scale = ts * ms ** (p - 1)
        vals = np.empty(len(idx))
        for k in range(len(idx)):
            if ns[k] > 0:
                vals[k] = table.G(ns[k] / ms[k])
            else:
                vals[k] = table.F(zs[k] * ts[k] / ms[k])
        out.flat[idx] = scale * vals
    return out


def expected_square_oc(table: OCTable, v: Sequence[float], tau: float) -> float:
    """``E[est**2]`` of the OC estimator at data ``v`` (equal thresholds)."""
    M, m = float(max(v)), float(min(v))
    if M == 0:
        return 0.0
    if M > tau:
        return expected_square_L(v, tau, table.p)
    return tau * M ** (2 * table.p - 1) * table.Q(m / M)

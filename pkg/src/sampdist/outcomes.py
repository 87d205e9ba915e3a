"""Per-key outcomes assembled from the samples of several instances.

An outcome is what the estimators see for one key: for every instance the
value (when sampled), the seed ``u`` and the inclusion threshold ``tau``.
An unsampled entry is known only to lie below ``u * tau``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .sampler import InstanceSample
from .seeds import FixedSeeds, Mode, SeedSource, key_digests, seed_for, seeds_for


def rg(v: Sequence[float], p: float = 1.0) -> float:
    """Exponentiated range ``(max(v) - min(v)) ** p``."""
    return float((max(v) - min(v)) ** p)


@dataclass(frozen=True)
class Outcome:
    """Single-key view across ``r`` instances.

    ``values[i]`` is ``None`` when the key was not sampled in instance ``i``.
    """

    values: tuple[Optional[float], ...]
    seeds: tuple[float, ...]
    thresholds: tuple[float, ...]
    mode: Mode = Mode.INDEPENDENT

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(None if x is None else float(x) for x in self.values))
        object.__setattr__(self, "seeds", tuple(float(x) for x in self.seeds))
        object.__setattr__(self, "thresholds", tuple(float(x) for x in self.thresholds))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not len(self.values) == len(self.seeds) == len(self.thresholds):
            raise ValueError("values, seeds and thresholds must have equal length")
        if any(not 0.0 < u <= 1.0 for u in self.seeds):
            raise ValueError("seeds must lie in (0, 1]")
        if any(not t > 0 for t in self.thresholds):
            raise ValueError("thresholds must be positive")
        if self.mode is Mode.COORDINATED and len(set(self.seeds)) > 1:
            raise ValueError("coordinated outcomes share one seed")

    @classmethod
    def from_data(cls, v, seeds, thresholds, mode=Mode.INDEPENDENT) -> "Outcome":
        """Outcome produced by data ``v`` under the Poisson rule ``v_i >= u_i * tau_i``."""
        vals = tuple(x if x > 0 and x >= u * t else None for x, u, t in zip(v, seeds, thresholds))
        return cls(vals, tuple(seeds), tuple(thresholds), mode)

    @classmethod
    def coordinated(cls, v, u: float, tau) -> "Outcome":
        if np.isscalar(tau):
            tau = [tau] * len(v)
        return cls.from_data(v, [u] * len(v), tau, Mode.COORDINATED)

    @property
    def r(self) -> int:
        return len(self.values)

    @property
    def sampled(self) -> tuple[int, ...]:
        return tuple(i for i, x in enumerate(self.values) if x is not None)

    @property
    def known(self) -> list[float]:
        return [x for x in self.values if x is not None]

    def bound(self, i: int) -> float:
        """Upper bound ``u_i * tau_i`` on an unsampled entry."""
        return self.seeds[i] * self.thresholds[i]

    @property
    def equal_tau(self) -> bool:
        return len(set(self.thresholds)) == 1


class DeterminingVector(NamedTuple):
    phi1: float
    phi2: float


def build_outcome(samples: Sequence[InstanceSample], key: str, hash: SeedSource | None = None) -> Outcome:
    """Outcome of ``key`` across ``samples``; seeds are recomputed from the hash."""
    if not samples:
        raise ValueError("need at least one sample")
    hash = samples[0].hash if hash is None else hash
    modes = {s.hash.mode for s in samples} | {hash.mode}
    if len(modes) != 1:
        raise ValueError("samples declare inconsistent coordination modes")
    values = tuple(s.entries.get(key) for s in samples)
    seeds = tuple(seed_for(hash, key, s.instance_id) for s in samples)
    taus = tuple(s.effective_threshold(key) for s in samples)
    return Outcome(values, seeds, taus, hash.mode)


def consistent_with_zero(o: Outcome) -> bool:
    """True iff the closure of the consistent set holds a vector with all entries equal."""
    known = o.known
    if not known:
        return True
    c = known[0]
    if any(x != c for x in known):
        return False
    return all(o.values[i] is not None or c <= o.bound(i) for i in range(o.r))


def determining_vector(o: Outcome) -> DeterminingVector:
    """Range-minimal vector in the closure of the consistent set (two independent instances)."""
    if o.r != 2:
        raise ValueError("determining vectors are defined for r = 2")
    v1, v2 = o.values
    if v1 is None and v2 is None:
        return DeterminingVector(0.0, 0.0)
    if v2 is None:
        return DeterminingVector(v1, min(o.bound(1), v1))
    if v1 is None:
        return DeterminingVector(min(o.bound(0), v2), v2)
    return DeterminingVector(v1, v2)


def _lower_bound(known: Sequence[float], unsampled_bounds: Sequence[float], p: float) -> float:
    if not known:
        return 0.0
    lo = min(known)
    if unsampled_bounds:
        lo = min(lo, min(unsampled_bounds))
    d = max(known) - lo
    return d**p if d > 0 else 0.0


def lower_bound_rg(o: Outcome, p: float) -> float:
    """Infimum of ``rg_p`` over the vectors consistent with a coordinated outcome."""
    if o.mode is not Mode.COORDINATED:
        raise ValueError("the lower bound function is defined for coordinated outcomes")
    bounds = [o.bound(i) for i in range(o.r) if o.values[i] is None]
    return _lower_bound(o.known, bounds, p)


def lower_bound_rg_at(v: Sequence[float], tau, u: float, p: float) -> float:
    """Lower bound function evaluated for data ``v`` at shared seed ``u``."""
    if np.isscalar(tau):
        tau = [tau] * len(v)
    known, bounds = [], []
    for x, t in zip(v, tau):
        if x > 0 and x >= u * t:
            known.append(float(x))
        else:
            bounds.append(u * t)
    return _lower_bound(known, bounds, p)


# ---------------------------------------------------------------------------
# batches


@dataclass
class OutcomeBatch:
    """Outcomes of many keys as arrays of shape ``(n_keys, r)``.

    ``values`` holds 0 where ``known`` is False.
    """

    keys: list[str]
    known: np.ndarray
    values: np.ndarray
    seeds: np.ndarray
    tau: np.ndarray
    mode: Mode

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def r(self) -> int:
        return self.values.shape[1]

    def row(self, j: int) -> Outcome:
        vals = tuple(float(x) if k else None for x, k in zip(self.values[j], self.known[j]))
        return Outcome(vals, tuple(self.seeds[j]), tuple(self.tau[j]), self.mode)

    def equal_tau(self) -> np.ndarray:
        return np.all(self.tau == self.tau[:, :1], axis=1)


def build_outcomes(
    samples: Sequence[InstanceSample],
    keys: Sequence[str] | None = None,
    hash: SeedSource | None = None,
) -> OutcomeBatch:
    """Batch version of :func:`build_outcome`; defaults to keys sampled somewhere."""
    if not samples:
        raise ValueError("need at least one sample")
    hash = samples[0].hash if hash is None else hash
    modes = {s.hash.mode for s in samples} | {hash.mode}
    if len(modes) != 1:
        raise ValueError("samples declare inconsistent coordination modes")
    if keys is None:
        keys = sorted(set().union(*(s.entries for s in samples)))
    keys = list(keys)
    n, r = len(keys), len(samples)
    known = np.zeros((n, r), dtype=bool)
    values = np.zeros((n, r))
    seeds = np.empty((n, r))
    tau = np.empty((n, r))
    digests = None if isinstance(hash, FixedSeeds) or n == 0 else key_digests(keys)
    for i, s in enumerate(samples):
        for j, k in enumerate(keys):
            x = s.entries.get(k)
            if x is not None:
                known[j, i] = True
                values[j, i] = x
        if s.scheme == "poisson_pps":
            tau[:, i] = s.T
        else:
            tau[:, i] = np.where(known[:, i], s.T, s.T_prime)
        if n:
            seeds[:, i] = seeds_for(hash, keys, s.instance_id, digests=digests)
    return OutcomeBatch(keys, known, values, seeds, tau, hash.mode)

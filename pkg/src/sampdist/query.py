"""L_p^p, L_p and one-sided distance queries over sampled keys."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from . import coordinated as coord
from .independent import (
    rg_L_independent_array,
    var_rg_L_independent_equal_tau_array,
    variance_independent,
)
from .oc import OCTable, expected_square_oc, oc_build, oc_estimate_array
from .outcomes import OutcomeBatch, build_outcomes
from .sampler import POISSON, Instance, InstanceSample
from .seeds import Mode, SeedSource

IND_L = "ind_L"
COORD_L = "coord_L"
COORD_U = "coord_U"
COORD_OC = "coord_OC"
ESTIMATORS = (IND_L, COORD_L, COORD_U, COORD_OC)

LP_CAVEAT = "p-th root of an unbiased L_p^p estimate; biased"


class PredicateKind(str, enum.Enum):
    ALL = "all"
    EXACT_SET = "exact_set"
    PREFIX = "prefix"


@dataclass(frozen=True)
class KeyPredicate:
    """Selection on key metadata only (never on values)."""

    kind: PredicateKind = PredicateKind.ALL
    keys: frozenset = frozenset()
    prefix: str = ""

    @classmethod
    def all(cls) -> "KeyPredicate":
        return cls()

    @classmethod
    def exact_set(cls, keys: Iterable[str]) -> "KeyPredicate":
        return cls(PredicateKind.EXACT_SET, frozenset(keys))

    @classmethod
    def with_prefix(cls, prefix: str) -> "KeyPredicate":
        return cls(PredicateKind.PREFIX, prefix=prefix)

    @classmethod
    def parse(cls, text: str) -> "KeyPredicate":
        """``all``, ``keys:a,b,c`` or ``prefix:abc``."""
        if text == "all":
            return cls.all()
        kind, sep, arg = text.partition(":")
        if sep and kind == "keys":
            return cls.exact_set(k for k in arg.split(",") if k)
        if sep and kind == "prefix":
            return cls.with_prefix(arg)
        raise ValueError(f"cannot parse predicate {text!r}; use all, keys:a,b or prefix:x")

    def __call__(self, key: str) -> bool:
        if self.kind is PredicateKind.ALL:
            return True
        if self.kind is PredicateKind.EXACT_SET:
            return key in self.keys
        return key.startswith(self.prefix)

    def select(self, keys: Iterable[str]) -> list[str]:
        return [k for k in keys if self(k)]

    def describe(self) -> str:
        if self.kind is PredicateKind.ALL:
            return "all"
        if self.kind is PredicateKind.EXACT_SET:
            return "keys:" + ",".join(sorted(self.keys))
        return "prefix:" + self.prefix


@dataclass
class EstimateReport:
    query: str
    estimate: float
    estimator: str
    p: float
    instance_ids: list[int]
    n_keys: int
    predicate: str = "all"
    variance: Optional[float] = None
    note: Optional[str] = None
    per_key: Optional[dict[str, float]] = field(default=None, repr=False)

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(d, separators=(",", ":"))


# ---------------------------------------------------------------------------
# per-key estimation kernel


@lru_cache(maxsize=8)
def default_oc_table(p: float) -> OCTable:
    return oc_build(p)


def _check_mode(batch_mode: Mode, r: int, estimator: str) -> None:
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATORS)}")
    if estimator == IND_L:
        if batch_mode is not Mode.INDEPENDENT:
            raise ValueError("ind_L needs independently seeded samples")
        if r != 2:
            raise ValueError("ind_L is defined for two instances")
    elif batch_mode is not Mode.COORDINATED:
        raise ValueError(f"{estimator} needs coordinated (shared-seed) samples")


def coordinated_summary(batch: OutcomeBatch):
    """Per-row ``(m, n, vmin, zeta, tau)`` for equal-threshold coordinated rows."""
    known = batch.known
    m = np.where(known, batch.values, 0.0).max(axis=1)
    full = known.all(axis=1)
    lo = np.where(known, batch.values, np.inf).min(axis=1)
    zeta = batch.seeds[:, 0]
    tau = batch.tau[:, 0]
    n = np.where(full, lo, 0.0)
    vmin = np.where(full, lo, zeta * tau)
    return m, n, vmin, zeta, tau


def estimate_batch(
    batch: OutcomeBatch,
    p: float,
    estimator: str,
    oc_table: OCTable | None = None,
) -> np.ndarray:
    """Per-key ``rg_p`` estimates for every row of ``batch``."""
    _check_mode(batch.mode, batch.r, estimator)
    if len(batch) == 0:
        return np.zeros(0)
    if estimator == IND_L:
        k1, k2 = batch.known[:, 0], batch.known[:, 1]
        v1, v2 = batch.values[:, 0], batch.values[:, 1]
        b1 = batch.seeds[:, 0] * batch.tau[:, 0]
        b2 = batch.seeds[:, 1] * batch.tau[:, 1]
        phi1 = np.where(k1, v1, np.where(k2, np.minimum(b1, v2), 0.0))
        phi2 = np.where(k2, v2, np.where(k1, np.minimum(b2, v1), 0.0))
        return rg_L_independent_array(phi1, phi2, batch.tau[:, 0], batch.tau[:, 1], p)
    eq = batch.equal_tau()
    m, n, vmin, zeta, tau = coordinated_summary(batch)
    if estimator == COORD_L:
        out = rg_L_equal_tau_rows(m, vmin, tau, p, eq)
        for j in np.flatnonzero(~eq):
            out[j] = coord.rg_L_general(batch.row(j), p)
        return out
    if not eq.all():
        raise ValueError(
            f"{estimator} needs equal thresholds across instances for every key "
            "(Poisson PPS with one common T)"
        )
    if estimator == COORD_U:
        return coord.rg_U_array(m, n, zeta, tau, p)
    if oc_table is None and np.all((m > tau) | (m == 0)):
        # every row falls back to L, so no table is needed
        return rg_L_equal_tau_rows(m, vmin, tau, p, m > 0)
    table = oc_table if oc_table is not None else default_oc_table(float(p))
    if table.p != p:
        raise ValueError(f"OC table was built for p={table.p}, query has p={p}")
    return oc_estimate_array(table, m, n, zeta, tau)


def rg_L_equal_tau_rows(m, vmin, tau, p, mask) -> np.ndarray:
    out = np.zeros(len(m))
    if np.any(mask):
        out[mask] = coord.rg_L_equal_tau_array(m[mask], vmin[mask], tau[mask], p)
    return out


def one_sided_mask(batch: OutcomeBatch, direction: str) -> np.ndarray:
    """Rows whose consistent set (closure) meets ``v1 <= v2`` (plus) or ``v2 <= v1`` (minus)."""
    if batch.r != 2:
        raise ValueError("one-sided distances are defined for two instances")
    if direction not in ("plus", "minus"):
        raise ValueError("direction must be 'plus' or 'minus'")
    a, b = (0, 1) if direction == "plus" else (1, 0)
    ka, kb = batch.known[:, a], batch.known[:, b]
    va, vb = batch.values[:, a], batch.values[:, b]
    bound_b = batch.seeds[:, b] * batch.tau[:, b]
    return ~ka | (kb & (va <= vb)) | (~kb & (va <= bound_b))


# ---------------------------------------------------------------------------
# analytic per-key variances from true data


def key_variances(
    values: np.ndarray,
    thresholds: Sequence[float],
    p: float,
    estimator: str,
    oc_table: OCTable | None = None,
) -> np.ndarray:
    """Variance of the per-key estimate under Poisson sampling with per-instance thresholds.

    ``values`` has shape ``(n_keys, r)`` and holds the true values (0 for absent).
    """
    values = np.asarray(values, dtype=np.float64)
    taus = [float(t) for t in thresholds]
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if len(values) == 0:
        return np.zeros(0)
    equal = len(set(taus)) == 1
    hi, lo = values.max(axis=1), values.min(axis=1)
    if estimator == IND_L:
        if values.shape[1] != 2:
            raise ValueError("ind_L is defined for two instances")
        if equal and p in (1, 2):
            return var_rg_L_independent_equal_tau_array(hi, lo, taus[0], p)
        return np.array([variance_independent(row, taus[0], taus[1], p) for row in values])
    if estimator == COORD_L:
        if equal and p in (1, 2):
            return coord.var_rg_L_coordinated_array(hi, lo, taus[0], p)
        tau_arg = taus[0] if equal else taus
        return np.array([coord.variance_L(row, tau_arg, p) for row in values])
    if not equal:
        raise ValueError(f"{estimator} needs equal thresholds across instances")
    tau = taus[0]
    if estimator == COORD_U:
        return np.array([coord.variance_U((h, l), tau, p) for h, l in zip(hi, lo)])
    table = oc_table if oc_table is not None else default_oc_table(float(p))
    return np.array(
        [max(expected_square_oc(table, (h, l), tau) - (h - l) ** (2 * p), 0.0) for h, l in zip(hi, lo)]
    )


def _truth_variance(samples, truth, keys_pred, p, estimator, oc_table) -> float:
    if any(s.scheme != POISSON for s in samples):
        raise ValueError("analytic variance is available for Poisson PPS samples")
    if len(truth) != len(samples):
        raise ValueError("need one true instance per sample")
    support = sorted(set().union(*(t.entries for t in truth)))
    support = [k for k in support if keys_pred(k)]
    vals = np.array([[t.get(k) for t in truth] for k in support]).reshape(len(support), len(truth))
    var = key_variances(vals, [s.T for s in samples], p, estimator, oc_table)
    return math.fsum(var)


# ---------------------------------------------------------------------------
# queries


def _selected_batch(samples, pred, hash) -> OutcomeBatch:
    if not samples:
        raise ValueError("need at least one sample")
    pred = pred or KeyPredicate.all()
    # keys sampled nowhere contribute 0 and are never enumerated
    keys = pred.select(sorted(set().union(*(s.entries for s in samples))))
    return build_outcomes(samples, keys, hash)


def estimate_lpp(
    samples: Sequence[InstanceSample],
    pred: KeyPredicate | None = None,
    p: float = 1.0,
    estimator: str = COORD_L,
    *,
    hash: SeedSource | None = None,
    oc_table: OCTable | None = None,
    truth: Sequence[Instance] | None = None,
    per_key: bool = False,
) -> EstimateReport:
    """Estimate ``L_p^p`` over the keys selected by ``pred``."""
    pred = pred or KeyPredicate.all()
    batch = _selected_batch(samples, pred, hash)
    _check_mode(batch.mode, batch.r, estimator)
    est = estimate_batch(batch, p, estimator, oc_table)
    variance = _truth_variance(samples, truth, pred, p, estimator, oc_table) if truth is not None else None
    return EstimateReport(
        "lpp", math.fsum(est), estimator, p, [s.instance_id for s in samples], len(batch),
        pred.describe(), variance, None, dict(zip(batch.keys, est.tolist())) if per_key else None,
    )


def estimate_lp(samples, pred=None, p: float = 1.0, estimator: str = COORD_L, **kwargs) -> EstimateReport:
    """``L_p`` as the p-th root of the ``L_p^p`` estimate."""
    rep = estimate_lpp(samples, pred, p, estimator, **kwargs)
    rep.query = "lp"
    rep.estimate = rep.estimate ** (1.0 / p) if rep.estimate > 0 else 0.0
    rep.variance = None
    rep.note = LP_CAVEAT
    return rep


def estimate_one_sided(
    samples: Sequence[InstanceSample],
    pred: KeyPredicate | None = None,
    p: float = 1.0,
    direction: str = "plus",
    estimator: str = COORD_L,
    *,
    hash: SeedSource | None = None,
    oc_table: OCTable | None = None,
    per_key: bool = False,
) -> EstimateReport:
    """Estimate ``sum max(0, v1 - v2)**p`` (plus) or ``sum max(0, v2 - v1)**p`` (minus)."""
    if len(samples) != 2:
        raise ValueError("one-sided distances are defined for two instances")
    pred = pred or KeyPredicate.all()
    batch = _selected_batch(samples, pred, hash)
    _check_mode(batch.mode, batch.r, estimator)
    est = estimate_batch(batch, p, estimator, oc_table)
    if len(batch):
        est = np.where(one_sided_mask(batch, direction), 0.0, est)
    return EstimateReport(
        f"one_sided_{direction}", math.fsum(est), estimator, p, [s.instance_id for s in samples],
        len(batch), pred.describe(), None, None, dict(zip(batch.keys, est.tolist())) if per_key else None,
    )

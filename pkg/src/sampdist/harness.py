"""Evaluation pipeline: ingest, synthetic data, analytic and Monte Carlo CV^2, CSV output.

The Monte Carlo path works on aligned value arrays instead of per-key dicts
so that sweeps over ``10**5`` keys stay fast; it produces the same outcomes
as sampling each instance and joining through :mod:`sampdist.query`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .oc import OCTable, oc_build
from .outcomes import OutcomeBatch
from .query import ESTIMATORS, IND_L, KeyPredicate, estimate_batch, key_variances
from .sampler import POISSON, PRIORITY, Instance, pps_threshold_for_expected_size
from .seeds import HashConfig, Mode, key_digests, seeds_from_digests

CSV_COLUMNS = [
    "scheme", "param", "sampled_fraction", "p", "estimator",
    "estimate", "true_value", "cv2_analytic", "cv2_empirical",
]
MIN_REPORTED_TRIALS = 100


# ---------------------------------------------------------------------------
# instance files


def ingest(path: Union[str, os.PathLike], instance_id: int = 1) -> Instance:
    """Read ``key<TAB>value`` lines; zero values are dropped."""
    entries: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            key, sep, value = line.partition("\t")
            if not sep or "\t" in value:
                raise ValueError(f"{path}:{lineno}: expected key<TAB>value")
            if key in entries:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                v = float(value)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: value {value!r} is not a number") from None
            if math.isnan(v) or v < 0 or math.isinf(v):
                raise ValueError(f"{path}:{lineno}: value must be finite and nonnegative")
            entries[key] = v
    return Instance(entries, instance_id)


def write_instance(inst: Instance, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k in inst.keys:
            fh.write(f"{k}\t{inst.entries[k]!r}\n")


def zipf_pair(
    n_keys: int,
    exponent: float = 1.0,
    noise: float = 0.2,
    churn: float = 0.0,
    seed: int = 0,
    scale: float = 1e6,
) -> tuple[Instance, Instance]:
    """Two instances with Zipf values and a perturbed second copy.

    Instance 2 multiplies each value by ``1 + eps`` with ``eps ~ U[-noise, noise]``.
    With ``churn > 0`` that fraction of keys is deleted from instance 2 and an
    equal number of fresh keys inserted with the deleted values reshuffled.
    """
    rng = np.random.default_rng(seed)
    width = len(str(2 * n_keys))
    keys = [f"k{i:0{width}d}" for i in range(n_keys)]
    v1 = scale / np.arange(1, n_keys + 1, dtype=np.float64) ** exponent
    v2 = v1 * (1.0 + rng.uniform(-noise, noise, n_keys))
    second = dict(zip(keys, v2.tolist()))
    n_churn = int(round(churn * n_keys))
    if n_churn:
        gone = rng.choice(n_keys, n_churn, replace=False)
        moved = v2[gone][rng.permutation(n_churn)]
        for i in gone:
            del second[keys[i]]
        for j, x in enumerate(moved):
            second[f"k{n_keys + j:0{width}d}"] = float(x)
    return Instance(dict(zip(keys, v1.tolist())), 1), Instance(second, 2)


def two_key_example():
    """Values (8, 3) and (12, 11) used in worked variance examples."""
    return Instance({"h1": 8.0, "h2": 12.0}, 1), Instance({"h1": 3.0, "h2": 11.0}, 2)


# ---------------------------------------------------------------------------
# sample specifications


@dataclass(frozen=True)
class SampleSpec:
    """How each instance is sampled in a sweep.

    Poisson PPS uses one threshold ``T`` for every instance, either given or
    solved so the expected total sample is ``fraction`` of all positive
    entries.  Priority sampling uses ``k`` per instance, or
    ``round(fraction * n_i)``.
    """

    scheme: str = POISSON
    T: Optional[float] = None
    k: Optional[int] = None
    fraction: Optional[float] = None

    def __post_init__(self):
        if self.scheme not in (POISSON, PRIORITY):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        given = [x is not None for x in (self.T, self.k, self.fraction)]
        if sum(given) != 1:
            raise ValueError("give exactly one of T, k or fraction")
        if self.scheme == POISSON and self.k is not None:
            raise ValueError("Poisson PPS is parameterized by T or fraction")
        if self.scheme == PRIORITY and self.T is not None:
            raise ValueError("priority sampling is parameterized by k or fraction")
        if self.fraction is not None and not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")

    @property
    def param(self) -> str:
        if self.fraction is not None:
            return f"fraction={self.fraction!r}"
        if self.T is not None:
            return f"T={self.T!r}"
        return f"k={self.k}"

    def thresholds(self, instances: Sequence[Instance]) -> list[float]:
        """Per-instance Poisson thresholds."""
        if self.scheme != POISSON:
            raise ValueError("thresholds are defined for Poisson PPS")
        if self.T is not None:
            return [float(self.T)] * len(instances)
        pooled = np.concatenate([inst.values for inst in instances])
        T = pps_threshold_for_expected_size(pooled, self.fraction * len(pooled))
        return [T] * len(instances)

    def sizes(self, instances: Sequence[Instance]) -> list[int]:
        if self.scheme != PRIORITY:
            raise ValueError("sample sizes are defined for priority sampling")
        if self.k is not None:
            return [int(self.k)] * len(instances)
        return [max(1, int(round(self.fraction * len(inst)))) for inst in instances]

    @classmethod
    def from_dict(cls, d: dict) -> "SampleSpec":
        return cls(**d)


# ---------------------------------------------------------------------------
# aligned data and fast trials


class AlignedData:
    """Instances aligned on the sorted union of their keys."""

    def __init__(self, instances: Sequence[Instance], pred: KeyPredicate | None = None):
        if len(instances) < 2:
            raise ValueError("need at least two instances")
        self.instances = list(instances)
        self.pred = pred or KeyPredicate.all()
        self.keys = sorted(set().union(*(inst.entries for inst in instances)))
        self.values = np.array([[inst.get(k) for inst in instances] for k in self.keys]).reshape(
            len(self.keys), len(instances)
        )
        self.instance_ids = [inst.instance_id for inst in instances]
        self.selected = np.array([self.pred(k) for k in self.keys], dtype=bool)
        self._thresholds: dict[SampleSpec, list[float]] = {}

    def thresholds(self, spec: SampleSpec) -> list[float]:
        if spec not in self._thresholds:
            self._thresholds[spec] = spec.thresholds(self.instances)
        return self._thresholds[spec]

    @cached_property
    def digests(self) -> np.ndarray:
        return key_digests(self.keys)

    @property
    def r(self) -> int:
        return len(self.instances)

    def true_lpp(self, p: float) -> float:
        v = self.values[self.selected]
        return math.fsum((v.max(axis=1) - v.min(axis=1)) ** p)

    def support_size(self) -> int:
        """Positive entries among the selected keys, over all instances."""
        return int((self.values[self.selected] > 0).sum())

    def seeds(self, cfg: HashConfig) -> np.ndarray:
        if cfg.coordinated:
            u = seeds_from_digests(cfg, self.digests, self.instance_ids[0])
            return np.repeat(u[:, None], self.r, axis=1)
        return np.column_stack([seeds_from_digests(cfg, self.digests, i) for i in self.instance_ids])

    def trial(self, spec: SampleSpec, cfg: HashConfig) -> tuple[OutcomeBatch, int]:
        """Outcomes of the selected keys sampled somewhere, and the selected sample size."""
        u = self.seeds(cfg)
        v = self.values
        n, r = v.shape
        if spec.scheme == POISSON:
            T = np.array(self.thresholds(spec))
            known = (v > 0) & (v >= u * T)
            tau = np.broadcast_to(T, (n, r))
        else:
            ks = spec.sizes(self.instances)
            known = np.zeros((n, r), dtype=bool)
            tau = np.empty((n, r))
            for i, k in enumerate(ks):
                pos = np.flatnonzero(v[:, i] > 0)
                if len(pos) < k + 1:
                    raise ValueError(f"instance {self.instance_ids[i]} has too few entries for k={k}")
                prio = v[pos, i] / u[pos, i]
                # keys are sorted, so the stable sort breaks ties as the sampler does
                order = np.argsort(-prio, kind="stable")
                known[pos[order[:k]], i] = True
                T, T_prime = prio[order[k]], prio[order[k - 1]]
                tau[:, i] = np.where(known[:, i], T, T_prime)
        rows = np.flatnonzero(known.any(axis=1) & self.selected)
        batch = OutcomeBatch(
            [self.keys[j] for j in rows],
            known[rows],
            np.where(known[rows], v[rows], 0.0),
            u[rows],
            np.ascontiguousarray(tau[rows]),
            cfg.mode,
        )
        return batch, int(known[rows].sum())


def mode_for(estimator: str) -> Mode:
    return Mode.INDEPENDENT if estimator == IND_L else Mode.COORDINATED


# ---------------------------------------------------------------------------
# variance evaluation


def cv2_analytic(
    instances: Sequence[Instance],
    pred: KeyPredicate | None,
    spec: SampleSpec,
    p: float,
    estimator: str,
    oc_table: OCTable | None = None,
) -> float:
    """``sum of per-key variances / L_p^p(H)**2`` under Poisson PPS."""
    if spec.scheme != POISSON:
        raise ValueError("analytic CV^2 needs Poisson PPS (priority thresholds are random)")
    data = instances if isinstance(instances, AlignedData) else AlignedData(instances, pred)
    truth = data.true_lpp(p)
    if truth == 0:
        raise ValueError("L_p^p over the selected keys is 0; CV^2 is undefined")
    var = key_variances(data.values[data.selected], data.thresholds(spec), p, estimator, oc_table)
    return math.fsum(var) / truth**2


@dataclass
class EmpiricalRow:
    spec: SampleSpec
    p: float
    estimator: str
    mean: float
    variance: float
    cv2: float
    true_value: float
    sampled_fraction: float
    trials: int
    estimates: np.ndarray = field(repr=False, default=None)


def _seed_list(seeds: Optional[Sequence[int]], trials: int, start: int = 0) -> list[int]:
    return list(seeds) if seeds is not None else list(range(start, start + trials))


def monte_carlo(
    data: AlignedData,
    specs: Sequence[SampleSpec],
    ps: Sequence[float],
    estimators: Sequence[str],
    seeds: Sequence[int],
    oc_tables: dict | None = None,
) -> list[EmpiricalRow]:
    """Run every (spec, p, estimator) over ``seeds``; rows follow the argument order."""
    for e in estimators:
        if e not in ESTIMATORS:
            raise ValueError(f"unknown estimator {e!r}")
    oc_tables = oc_tables or {}
    seeds = list(seeds)
    support = data.support_size()
    results: dict[tuple, np.ndarray] = {}
    fractions: dict[tuple, float] = {}
    for si, spec in enumerate(specs):
        for mode in dict.fromkeys(mode_for(e) for e in estimators):
            ests = {(p, e): np.empty(len(seeds)) for p in ps for e in estimators if mode_for(e) is mode}
            sizes = np.empty(len(seeds))
            for t, s in enumerate(seeds):
                batch, size = data.trial(spec, HashConfig(s, mode))
                sizes[t] = size
                for (p, e), arr in ests.items():
                    arr[t] = math.fsum(estimate_batch(batch, p, e, oc_tables.get(p)))
            for key, arr in ests.items():
                results[(si,) + key] = arr
                fractions[(si,) + key] = float(sizes.mean()) / support if support else 0.0
    rows = []
    for si, spec in enumerate(specs):
        for p in ps:
            truth = data.true_lpp(p)
            for e in estimators:
                arr = results[(si, p, e)]
                var = float(np.var(arr, ddof=1)) if len(arr) > 1 else 0.0
                cv2 = var / truth**2 if truth > 0 else math.nan
                rows.append(EmpiricalRow(spec, p, e, float(np.mean(arr)), var, cv2, truth, fractions[(si, p, e)], len(arr), arr))
    return rows


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """One evaluation sweep.

    ``instances`` lists instance files (two or more, joined on keys);
    alternatively ``synthetic`` holds keyword arguments for :func:`zipf_pair`.
    Trials use ``seeds`` when given, else ``trials`` consecutive seeds from
    ``seed_start``.
    """

    specs: list[SampleSpec]
    p: list[float] = field(default_factory=lambda: [1.0])
    estimators: list[str] = field(default_factory=lambda: [IND_L, "coord_L"])
    instances: list[str] = field(default_factory=list)
    synthetic: Optional[dict] = None
    predicate: str = "all"
    trials: int = 100
    seeds: Optional[list[int]] = None
    seed_start: int = 0
    output: Optional[str] = None
    oc_grid_resolution: int = 2000

    def __post_init__(self):
        self.specs = [s if isinstance(s, SampleSpec) else SampleSpec.from_dict(s) for s in self.specs]
        self.p = [float(x) for x in self.p]
        if self.synthetic is None and len(self.instances) < 2:
            raise ValueError("an experiment needs at least one instance pair")
        if self.synthetic is not None and self.instances:
            raise ValueError("give either instance files or a synthetic generator, not both")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ValueError(f"unknown estimator {e!r}")
        if not self.specs:
            raise ValueError("need at least one sample spec")
        shared_tau = [e for e in self.estimators if e in ("coord_U", "coord_OC")]
        if shared_tau and any(s.scheme != POISSON for s in self.specs):
            raise ValueError(f"{', '.join(shared_tau)} need Poisson PPS specs (equal thresholds)")

    @property
    def seed_list(self) -> list[int]:
        return _seed_list(self.seeds, self.trials, self.seed_start)

    def load_instances(self, base: Union[str, os.PathLike, None] = None) -> list[Instance]:
        if self.synthetic is not None:
            return list(zipf_pair(**self.synthetic))
        out = []
        for i, path in enumerate(self.instances, 1):
            if base is not None and not os.path.isabs(path):
                path = os.path.join(base, path)
            out.append(ingest(path, i))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path: Union[str, os.PathLike]) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["specs"] = [{k: v for k, v in asdict(s).items() if v is not None} for s in self.specs]
        return d


def cv2_empirical(config: ExperimentConfig, instances: Sequence[Instance] | None = None) -> list[EmpiricalRow]:
    instances = instances if instances is not None else config.load_instances()
    data = AlignedData(instances, KeyPredicate.parse(config.predicate))
    tables = _oc_tables(config)
    return monte_carlo(data, config.specs, config.p, config.estimators, config.seed_list, tables)


def _oc_tables(config: ExperimentConfig) -> dict:
    if "coord_OC" not in config.estimators:
        return {}
    return {p: oc_build(p, config.oc_grid_resolution) for p in config.p}


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def run(
    config: ExperimentConfig,
    out: Union[str, os.PathLike, TextIO, None] = None,
    instances: Sequence[Instance] | None = None,
) -> list[dict]:
    """Sample, estimate and evaluate; write CSV rows in config order."""
    instances = instances if instances is not None else config.load_instances()
    pred = KeyPredicate.parse(config.predicate)
    data = AlignedData(instances, pred)
    tables = _oc_tables(config)
    emp = monte_carlo(data, config.specs, config.p, config.estimators, config.seed_list, tables)
    rows = []
    for row in emp:
        analytic = None
        if row.spec.scheme == POISSON and row.true_value > 0:
            analytic = cv2_analytic(data, pred, row.spec, row.p, row.estimator, tables.get(row.p))
        rows.append(
            {
                "scheme": row.spec.scheme,
                "param": row.spec.param,
                "sampled_fraction": _fmt(row.sampled_fraction),
                "p": _fmt(row.p),
                "estimator": row.estimator,
                "estimate": _fmt(row.mean),
                "true_value": _fmt(row.true_value),
                "cv2_analytic": _fmt(analytic),
                "cv2_empirical": _fmt(row.cv2) if row.trials >= MIN_REPORTED_TRIALS else "",
            }
        )
    target = out if out is not None else config.output
    if target is not None:
        write_csv(rows, target)
    return rows


def write_csv(rows: Iterable[dict], out: Union[str, os.PathLike, TextIO]) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh)
        return
    w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


def csv_text(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()

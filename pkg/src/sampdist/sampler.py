"""Poisson PPS and priority (bottom-k) sampling of a single instance."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO, Union

import numpy as np

from .seeds import (
    HASH_NAME,
    HASH_VERSION,
    FixedSeeds,
    HashConfig,
    Mode,
    SeedSource,
    describe,
    key_digests,
    seeds_for,
)

POISSON = "poisson_pps"
PRIORITY = "priority"
FORMAT_TAG = "sampdist-sample"
FORMAT_VERSION = 1


def _check_key(key: str) -> str:
    if not isinstance(key, str):
        raise TypeError(f"keys must be str, got {type(key).__name__}")
    if "\t" in key or "\n" in key or "\r" in key:
        raise ValueError(f"key {key!r} contains a tab or newline")
    return key


def _check_value(key: str, value) -> float:
    v = float(value)
    if math.isnan(v) or v < 0 or math.isinf(v):
        raise ValueError(f"value for key {key!r} must be finite and nonnegative, got {value!r}")
    return v


@dataclass(eq=False)
class Instance:
    """One dataset: a mapping from keys to positive values.

    Zero-valued entries are dropped on construction; a key that is not
    stored has value 0.
    """

    entries: dict[str, float]
    instance_id: int = 1

    def __post_init__(self):
        clean = {}
        for k, v in self.entries.items():
            v = _check_value(_check_key(k), v)
            if v > 0:
                clean[k] = v
        self.entries = clean

    @classmethod
    def from_arrays(cls, keys, values, instance_id: int = 1) -> "Instance":
        return cls(dict(zip(keys, (float(x) for x in values))), instance_id)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, key: str) -> float:
        return self.entries.get(key, 0.0)

    @cached_property
    def keys(self) -> list[str]:
        return sorted(self.entries)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([self.entries[k] for k in self.keys], dtype=np.float64)

    @cached_property
    def digests(self) -> np.ndarray:
        return key_digests(self.keys)

    def seeds(self, hash: SeedSource) -> np.ndarray:
        digests = None if isinstance(hash, FixedSeeds) else self.digests
        return seeds_for(hash, self.keys, self.instance_id, digests=digests)


@dataclass
class InstanceSample:
    """Sampled entries of one instance plus the thresholds estimators need.

    For Poisson PPS ``T`` is the global threshold.  For priority sampling
    ``T`` is the (k+1)th largest priority and ``T_prime`` the kth largest.
    """

    instance_id: int
    scheme: str
    entries: dict[str, float]
    T: float
    hash: SeedSource
    T_prime: float | None = None
    k: int | None = None
    sampled_keys: list[str] = field(init=False)

    def __post_init__(self):
        if self.scheme not in (POISSON, PRIORITY):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == PRIORITY and (self.T_prime is None or self.k is None):
            raise ValueError("priority samples need k and T_prime")
        self.sampled_keys = sorted(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def mode(self) -> Mode:
        return self.hash.mode

    def effective_threshold(self, key: str) -> float:
        """Inclusion threshold tau seen by ``key`` (T for Poisson; T or T' for priority)."""
        if self.scheme == POISSON:
            return self.T
        return self.T if key in self.entries else self.T_prime

    def to_text(self) -> str:
        buf = io.StringIO()
        write_sample(self, buf)
        return buf.getvalue()


def effective_thresholds(sample: InstanceSample, key: str) -> float:
    return sample.effective_threshold(key)


def poisson_pps_sample(inst: Instance, T: float, hash: SeedSource) -> InstanceSample:
    """Keep every key with ``v >= u * T``."""
    T = float(T)
    if not T > 0 or math.isinf(T):
        raise ValueError("threshold T must be positive and finite")
    u = inst.seeds(hash)
    mask = inst.values >= u * T
    keys = inst.keys
    chosen = {keys[i]: float(inst.values[i]) for i in np.flatnonzero(mask)}
    return InstanceSample(inst.instance_id, POISSON, chosen, T, hash)


def priority_sample(inst: Instance, k: int, hash: SeedSource) -> InstanceSample:
    """Keep the ``k`` keys with the largest priorities ``v / u``.

    Ties in priority go to the lexicographically smaller key.
    """
    k = int(k)
    n = len(inst)
    if k < 1:
        raise ValueError("k must be a positive integer")
    if n < k + 1:
        raise ValueError(f"priority sampling with k={k} needs at least {k + 1} positive entries, got {n}")
    prio = inst.values / inst.seeds(hash)
    # keys are sorted already, so a stable sort on -prio breaks ties by key
    order = np.argsort(-prio, kind="stable")
    keys = inst.keys
    chosen = {keys[i]: float(inst.values[i]) for i in order[:k]}
    T = float(prio[order[k]])
    T_prime = float(prio[order[k - 1]])
    return InstanceSample(inst.instance_id, PRIORITY, chosen, T, hash, T_prime=T_prime, k=k)


def expected_sample_size(values, T: float) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(np.minimum(1.0, v / T).sum())


def pps_threshold_for_expected_size(inst: Union[Instance, Iterable[float]], target: float) -> float:
    """Threshold ``T`` with ``sum(min(1, v/T)) == target``.

    Solved exactly: with the ``j`` largest values capped at probability 1,
    the remaining mass gives ``T = rest / (target - j)``.
    """
    values = inst.values if isinstance(inst, Instance) else np.asarray(list(inst), dtype=np.float64)
    values = values[values > 0]
    n = len(values)
    target = float(target)
    if not target > 0:
        raise ValueError("target expected size must be positive")
    if target > n:
        raise ValueError(f"target {target} exceeds the number of positive entries ({n})")
    v = np.sort(values)[::-1]
    # suffix[j] = sum of v[j:]
    suffix = np.concatenate([np.cumsum(v[::-1])[::-1], [0.0]])
    for j in range(n):
        if target - j <= 0:
            break
        T = suffix[j] / (target - j)
        if v[j] <= T * (1 + 1e-12) and (j == 0 or T <= v[j - 1] * (1 + 1e-12)):
            return float(T)
    return float(v[-1])


# ---------------------------------------------------------------------------
# serialization


def write_sample(sample: InstanceSample, out: Union[str, os.PathLike, TextIO]) -> None:
    """Write the header block and ``key<TAB>value`` records."""
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            write_sample(sample, fh)
        return
    header = {"format": f"{FORMAT_TAG} v{FORMAT_VERSION}", "scheme": sample.scheme}
    if sample.scheme == PRIORITY:
        header["k"] = str(sample.k)
    header["T"] = repr(sample.T)
    if sample.scheme == PRIORITY:
        header["T_prime"] = repr(sample.T_prime)
    header["instance_id"] = str(sample.instance_id)
    header.update(describe(sample.hash))
    for name, value in header.items():
        out.write(f"#{name}={value}\n")
    for key in sample.sampled_keys:
        if key.startswith("#"):
            raise ValueError(f"key {key!r} would be read back as a header line")
        out.write(f"{key}\t{sample.entries[key]!r}\n")


def read_sample(src: Union[str, os.PathLike, TextIO]) -> InstanceSample:
    if isinstance(src, (str, os.PathLike)):
        with open(src, encoding="utf-8") as fh:
            return read_sample(fh)
    header: dict[str, str] = {}
    entries: dict[str, float] = {}
    for lineno, line in enumerate(src, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        if line.startswith("#"):
            name, sep, value = line[1:].partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: malformed header {line!r}")
            header[name] = value
            continue
        key, sep, value = line.partition("\t")
        if not sep:
            raise ValueError(f"line {lineno}: expected key<TAB>value")
        if key in entries:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = _check_value(key, value)
    if header.get("format") != f"{FORMAT_TAG} v{FORMAT_VERSION}":
        raise ValueError(f"unsupported sample format {header.get('format')!r}")
    if header.get("hash") != f"{HASH_NAME} v{HASH_VERSION}":
        raise ValueError(f"unsupported hash {header.get('hash')!r}")
    cfg = HashConfig(int(header["global_seed"]), Mode(header["mode"]))
    scheme = header["scheme"]
    kwargs = {}
    if scheme == PRIORITY:
        kwargs = {"k": int(header["k"]), "T_prime": float(header["T_prime"])}
    return InstanceSample(int(header["instance_id"]), scheme, entries, float(header["T"]), cfg, **kwargs)


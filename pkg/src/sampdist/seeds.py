"""Per-key random seeds derived from hashing.

Every (key, instance) pair gets a seed ``u`` in ``(0, 1]``.  With coordinated
sampling the seed depends on the key alone, so all instances share it; with
independent sampling the instance id is mixed into the hash input.

The hash is ``blake2b`` (8-byte digest) of the UTF-8 key, followed by two
rounds of the splitmix64 finalizer keyed by a salt derived from the global
seed (and, for independent mode, the instance id).  The 64-bit output ``h``
is mapped to ``u = (h + 1) / 2**64`` in binary64 arithmetic.  Scalar and
vectorized paths produce bit-identical values.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

HASH_NAME = "blake2b64-splitmix64"
HASH_VERSION = 1

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
# domain-separation tags for the two modes
_TAG_COORD = 0x636F6F7264696E61
_TAG_INDEP = 0x696E646570656E64
_TWO64 = 2.0**64

Key = Union[str, bytes]


class Mode(str, enum.Enum):
    INDEPENDENT = "independent"
    COORDINATED = "coordinated"


def _coerce_mode(mode) -> Mode:
    return mode if isinstance(mode, Mode) else Mode(str(mode))


@dataclass(frozen=True)
class HashConfig:
    """Seed-generation parameters shared by every sample built from them."""

    global_seed: int = 0
    mode: Mode = Mode.INDEPENDENT

    def __post_init__(self):
        if not 0 <= int(self.global_seed) <= MASK64:
            raise ValueError("global_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "global_seed", int(self.global_seed))
        object.__setattr__(self, "mode", _coerce_mode(self.mode))

    @property
    def coordinated(self) -> bool:
        return self.mode is Mode.COORDINATED


@dataclass(frozen=True)
class FixedSeeds:
    """Explicit seed table, for reproducing worked examples.

    In coordinated mode ``table`` maps ``key -> u``; in independent mode it
    maps ``(instance_id, key) -> u``.  Missing entries raise ``KeyError``.
    """

    table: Mapping = field(default_factory=dict)
    mode: Mode = Mode.INDEPENDENT

    def __post_init__(self):
        object.__setattr__(self, "mode", _coerce_mode(self.mode))
        for u in self.table.values():
            if not 0.0 < u <= 1.0:
                raise ValueError(f"seed {u!r} outside (0, 1]")

    @property
    def coordinated(self) -> bool:
        return self.mode is Mode.COORDINATED

    def lookup(self, key: Key, instance: int) -> float:
        key = _as_text(key)
        if self.coordinated:
            return float(self.table[key])
        return float(self.table[(instance, key)])


SeedSource = Union[HashConfig, FixedSeeds]


def _as_bytes(key: Key) -> bytes:
    return key if isinstance(key, bytes) else key.encode("utf-8")


def _as_text(key: Key) -> str:
    return key.decode("utf-8") if isinstance(key, bytes) else key


def _splitmix64(x: int) -> int:
    x = (x + _GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * _M1) & MASK64
    x = ((x ^ (x >> 27)) * _M2) & MASK64
    return x ^ (x >> 31)


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2**64
    x = x + np.uint64(_GAMMA)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(_M1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(_M2)
    return x ^ (x >> np.uint64(31))


def key_digest(key: Key) -> int:
    """Unkeyed 64-bit digest of a key (little-endian blake2b-64)."""
    return int.from_bytes(hashlib.blake2b(_as_bytes(key), digest_size=8).digest(), "little")


def key_digests(keys: Iterable[Key]) -> np.ndarray:
    return np.fromiter((key_digest(k) for k in keys), dtype=np.uint64)


def _salt(cfg: HashConfig, instance: int) -> int:
    if cfg.coordinated:
        return _splitmix64(cfg.global_seed ^ _TAG_COORD)
    inner = _splitmix64(cfg.global_seed ^ _TAG_INDEP)
    return _splitmix64(inner ^ (int(instance) & MASK64))


def _to_unit(h: int) -> float:
    return (float(h) + 1.0) / _TWO64


def seed_for(cfg: SeedSource, key: Key, instance: int) -> float:
    """Seed ``u`` in ``(0, 1]`` for ``key`` in ``instance``."""
    if isinstance(cfg, FixedSeeds):
        return cfg.lookup(key, instance)
    h = _splitmix64(_splitmix64(key_digest(key) ^ _salt(cfg, instance)))
    return _to_unit(h)


def seeds_from_digests(cfg: HashConfig, digests: np.ndarray, instance: int) -> np.ndarray:
    """Vectorized :func:`seed_for` over precomputed :func:`key_digests`."""
    x = np.asarray(digests, dtype=np.uint64) ^ np.uint64(_salt(cfg, instance))
    h = _splitmix64_array(_splitmix64_array(x))
    return (h.astype(np.float64) + 1.0) / _TWO64


def seeds_for(
    cfg: SeedSource,
    keys: Sequence[Key],
    instance: int,
    digests: np.ndarray | None = None,
) -> np.ndarray:
    """Seeds for many keys of one instance; ``digests`` may be passed to skip rehashing."""
    if isinstance(cfg, FixedSeeds):
        return np.array([cfg.lookup(k, instance) for k in keys], dtype=np.float64)
    if digests is None:
        digests = key_digests(keys)
    return seeds_from_digests(cfg, digests, instance)


def describe(cfg: SeedSource) -> dict:
    """Header fields identifying how seeds were produced."""
    if isinstance(cfg, FixedSeeds):
        raise ValueError("explicit seed tables cannot be serialized; use a HashConfig")
    return {
        "hash": f"{HASH_NAME} v{HASH_VERSION}",
        "global_seed": str(cfg.global_seed),
        "mode": cfg.mode.value,
    }

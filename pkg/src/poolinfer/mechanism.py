"""Obfuscation mechanisms: count-mean-sketch variants and the identity baseline.

The sketch mechanism hashes an object into one of ``m`` buckets, builds the
one-hot indicator vector, and flips every bit independently with probability
``xi = 1 / (1 + exp(epsilon / 2))``.  The Hadamard variant transmits a single
(possibly sign-flipped) coordinate of the Hadamard transform of that one-hot
vector, with flip probability ``xi' = 1 / (1 + exp(epsilon))``.  The no-hash
variant removes collisions entirely (identity hash, ``m`` equal to the
universe size), and the non-private variant reveals the object unchanged.

The hash family is realized as a keyed PRF (see :mod:`poolinfer.streams`)
instead of stored random tables: ``bucket = prf(hash_seed, j, x) mod m``.
For a fixed hash index the buckets are indistinguishable from independent
uniform draws, which is all the attack and the estimator rely on.  The true
family used in deployed sketches is not public; a keyed PRF stand-in removes
any regularity without the memory cost of explicit tables.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .streams import mix64, mix64_scalar, prf64

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_XMUL = np.uint64(0xC2B2AE3D27D4EB4F)


class Variant(str, enum.Enum):
    CMS = "cms"
    HCMS = "hcms"
    NO_HASH_CMS = "nohash"
    NON_PRIVATE = "nonprivate"


@dataclass(frozen=True)
class MechanismConfig:
    """Parameters governing obfuscation: variant, privacy loss, sketch shape, hash key."""

    variant: Variant
    epsilon: float
    m: int
    num_hashes: int
    hash_seed: int | None = None  # None until resolved against a master seed

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.m < 1:
            raise ConfigurationError(f"m must be >= 1, got {self.m}")
        if self.num_hashes < 1:
            raise ConfigurationError(f"num_hashes must be >= 1, got {self.num_hashes}")
        if self.variant is Variant.HCMS and self.m & (self.m - 1) != 0:
            raise ConfigurationError(f"HCMS requires m to be a power of two, got m={self.m}")
        if self.variant is Variant.NO_HASH_CMS and self.num_hashes != 1:
            raise ConfigurationError("no-hash sketch uses a single bijective hash (num_hashes=1)")

    def validate_for_universe(self, universe_size: int) -> None:
        if self.variant is Variant.NO_HASH_CMS and self.m != universe_size:
            raise ConfigurationError(
                f"no-hash sketch requires m == universe size ({universe_size}), got m={self.m}"
            )

    @property
    def flip_probabilities(self) -> "FlipProbabilities":
        return FlipProbabilities.from_epsilon(self.epsilon)


@dataclass(frozen=True)
class FlipProbabilities:
    """Per-bit flip probability for the sketch (xi) and Hadamard (xi') variants."""

    xi: float
    xi_prime: float

    @classmethod
    def from_epsilon(cls, epsilon: float) -> "FlipProbabilities":
        # sigmoid(-x) form stays finite for arbitrarily large epsilon
        def flip(x: float) -> float:
            e = math.exp(-x)
            return e / (1.0 + e)

        return cls(xi=flip(epsilon / 2.0), xi_prime=flip(epsilon))


@dataclass(frozen=True)
class CmsObservation:
    """One sketch record: obfuscated bit-vector (0/1 uint8, length m) and hash index."""

    bits: np.ndarray
    hash_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.uint8))


@dataclass(frozen=True)
class HcmsObservation:
    """One Hadamard record: a +/-1 bit, the hash index, and the sampled coordinate."""

    bit: int
    hash_index: int
    coord_index: int


@dataclass(frozen=True)
class RawObservation:
    """Non-private record: the original object."""

    object_id: int


# Columnar batches: the harness, attack, and estimator all work on stacked
# arrays rather than lists of per-record objects.


@dataclass
class CmsBatch:
    hash_indices: np.ndarray  # (n,) uint32
    bits: np.ndarray  # (n, m) uint8

    def __len__(self) -> int:
        return len(self.hash_indices)

    def __getitem__(self, t: int) -> CmsObservation:
        return CmsObservation(bits=self.bits[t], hash_index=int(self.hash_indices[t]))

    @classmethod
    def from_observations(cls, observations: "list[CmsObservation]") -> "CmsBatch":
        return cls(
            hash_indices=np.array([o.hash_index for o in observations], dtype=np.uint32),
            bits=np.stack([o.bits for o in observations]).astype(np.uint8),
        )


@dataclass
class HcmsBatch:
    hash_indices: np.ndarray  # (n,) uint32
    coord_indices: np.ndarray  # (n,) uint32
    bits: np.ndarray  # (n,) int8, values +1/-1

    def __len__(self) -> int:
        return len(self.hash_indices)

    def __getitem__(self, t: int) -> HcmsObservation:
        return HcmsObservation(
            bit=int(self.bits[t]),
            hash_index=int(self.hash_indices[t]),
            coord_index=int(self.coord_indices[t]),
        )

    @classmethod
    def from_observations(cls, observations: "list[HcmsObservation]") -> "HcmsBatch":
        return cls(
            hash_indices=np.array([o.hash_index for o in observations], dtype=np.uint32),
            coord_indices=np.array([o.coord_index for o in observations], dtype=np.uint32),
            bits=np.array([o.bit for o in observations], dtype=np.int8),
        )


@dataclass
class RawBatch:
    objects: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.objects)

    def __getitem__(self, t: int) -> RawObservation:
        return RawObservation(object_id=int(self.objects[t]))

    @classmethod
    def from_observations(cls, observations: "list[RawObservation]") -> "RawBatch":
        return cls(objects=np.array([o.object_id for o in observations], dtype=np.int64))


ObservationBatch = CmsBatch | HcmsBatch | RawBatch


def hash_values(hash_indices, objects, config: MechanismConfig) -> np.ndarray:
    """Vectorized bucket computation ``h_j(x)`` with broadcasting over inputs.

    For the no-hash variant the map is the identity on [0, m).  Otherwise
    the bucket is a keyed PRF of (hash_seed, j, x) reduced modulo m (a mask
    when m is a power of two); two finalizer rounds give full avalanche
    between j and x.
    """
    j = np.asarray(hash_indices)
    x = np.asarray(objects)
    if np.any(j < 0) or np.any(j >= config.num_hashes):
        raise ValueError(f"hash index out of range [0, {config.num_hashes})")
    if np.any(x < 0):
        raise ValueError("object index must be non-negative")
    if config.variant is Variant.NO_HASH_CMS:
        if np.any(x >= config.m):
            raise ValueError(f"object index out of range [0, {config.m}) for identity hash")
        return np.broadcast_arrays(x.astype(np.int64), j)[0].copy()
    if config.hash_seed is None:
        raise ConfigurationError("hash_seed is unresolved; derive it from a master seed first")
    seeded = np.uint64(mix64_scalar(config.hash_seed))
    with np.errstate(over="ignore"):
        u = mix64(seeded ^ (j.astype(np.uint64) * _GOLDEN))
        v = mix64(u ^ (x.astype(np.uint64) * _XMUL))
        if config.m & (config.m - 1) == 0:
            v &= np.uint64(config.m - 1)
        else:
            v %= np.uint64(config.m)
    return v


def hash_value(hash_index: int, obj: int, config: MechanismConfig) -> int:
    """Bucket of a single object under hash function ``hash_index``."""
    return int(hash_values(np.int64(hash_index), np.int64(obj), config))


def hadamard_entry(row: int, col: int, s: int) -> int:
    """Entry of the 2^s x 2^s Hadamard matrix: ``(-1) ** popcount(row & col)``."""
    size = 1 << s
    if not (0 <= row < size and 0 <= col < size):
        raise ValueError(f"indices ({row}, {col}) out of range for a {size}x{size} matrix")
    return -1 if (row & col).bit_count() & 1 else 1


def _hadamard_signs(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Vectorized +/-1 Hadamard entries (indices assumed in range)."""
    parity = np.bitwise_count(np.bitwise_and(rows.astype(np.uint64), cols.astype(np.uint64)))
    return np.where(parity & 1, -1, 1).astype(np.int8)


def cms_obfuscate(obj: int, config: MechanismConfig, rng: np.random.Generator) -> CmsObservation:
    """Obfuscate one object with the sketch: uniform hash choice, one-hot, bit flips.

    Draw order: hash index first, then the m flip indicators.
    """
    batch = cms_obfuscate_batch(np.array([obj], dtype=np.int64), config, rng)
    return batch[0]


def cms_obfuscate_batch(objects: np.ndarray, config: MechanismConfig, rng: np.random.Generator) -> CmsBatch:
    """Vectorized sketch obfuscation; draws all hash indices, then all flips."""
    if config.variant not in (Variant.CMS, Variant.NO_HASH_CMS):
        raise ConfigurationError(f"sketch obfuscation requires a sketch variant, got {config.variant.value}")
    objects = np.asarray(objects, dtype=np.int64)
    n = len(objects)
    xi = config.flip_probabilities.xi
    j = rng.integers(0, config.num_hashes, size=n, dtype=np.uint32)
    bits = (rng.random((n, config.m)) < xi).astype(np.uint8)
    buckets = hash_values(j, objects, config)
    bits[np.arange(n), buckets] ^= 1
    return CmsBatch(hash_indices=j, bits=bits)


def hcms_obfuscate(obj: int, config: MechanismConfig, rng: np.random.Generator) -> HcmsObservation:
    """Obfuscate one object with the Hadamard variant.

    Draw order: hash index, coordinate index, then the flip indicator.
    """
    batch = hcms_obfuscate_batch(np.array([obj], dtype=np.int64), config, rng)
    return batch[0]


def hcms_obfuscate_batch(objects: np.ndarray, config: MechanismConfig, rng: np.random.Generator) -> HcmsBatch:
    """Vectorized Hadamard obfuscation; draws hash indices, coordinates, then flips."""
    if config.variant is not Variant.HCMS:
        raise ConfigurationError(f"Hadamard obfuscation requires variant hcms, got {config.variant.value}")
    objects = np.asarray(objects, dtype=np.int64)
    n = len(objects)
    xi_prime = config.flip_probabilities.xi_prime
    j = rng.integers(0, config.num_hashes, size=n, dtype=np.uint32)
    coords = rng.integers(0, config.m, size=n, dtype=np.uint32)
    flips = rng.random(n) < xi_prime
    buckets = hash_values(j, objects, config)
    signs = _hadamard_signs(coords.astype(np.int64), buckets)
    bits = np.where(flips, -signs, signs).astype(np.int8)
    return HcmsBatch(hash_indices=j, coord_indices=coords, bits=bits)


def nonprivate_obfuscate(obj: int) -> RawObservation:
    """Identity mechanism: the obfuscated object is the original object."""
    return RawObservation(object_id=int(obj))


def obfuscate_batch(objects: np.ndarray, config: MechanismConfig, rng: np.random.Generator) -> ObservationBatch:
    """Dispatch batch obfuscation on the configured variant."""
    if config.variant is Variant.NON_PRIVATE:
        return RawBatch(objects=np.asarray(objects, dtype=np.int64).copy())
    if config.variant is Variant.HCMS:
        return hcms_obfuscate_batch(objects, config, rng)
    return cms_obfuscate_batch(objects, config, rng)


def derive_hash_seed(master_seed: int) -> int:
    """Scenario-wide hash-family key, derived so user streams never overlap it."""
    return prf64(master_seed, "hash-family")

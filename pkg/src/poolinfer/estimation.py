"""Popularity estimation from obfuscated records, and curator-utility metrics.

The estimator inverts the per-bit flip expectation: an observed bit b at an
object's bucket debiases to (b - xi) / (1 - 2 xi), which has expectation 1
for the record's true object and 1/m for any other object under a uniform
hash family.  Summing debiased bits over all records and removing the
uniform collision floor N/m (rescaled by m/(m-1)) yields an unbiased count
estimate per object.  Alternating projections between the unit-sum
hyperplane and the non-negative orthant then turn the raw frequencies into
a valid distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .mechanism import CmsBatch, CmsObservation, MechanismConfig, Variant, cms_obfuscate_batch, hash_values
from .population import Popularity


@dataclass
class ExternalDataset:
    """Columnar store of sketch records sharing one mechanism config.

    Bits are packed little-endian (bit i of a record is bit i%8 of byte
    i//8), matching the on-disk hex encoding.
    """

    hash_indices: np.ndarray  # (N,) uint32
    packed_bits: np.ndarray  # (N, ceil(m/8)) uint8
    mechanism: MechanismConfig

    def __post_init__(self) -> None:
        if self.mechanism.variant not in (Variant.CMS, Variant.NO_HASH_CMS):
            raise ConfigurationError("external datasets hold sketch records")
        if len(self.hash_indices) != len(self.packed_bits):
            raise ConfigurationError("hash index and bit arrays disagree on record count")

    def __len__(self) -> int:
        return len(self.hash_indices)

    def __getitem__(self, r: int) -> CmsObservation:
        bits = np.unpackbits(self.packed_bits[r], count=self.mechanism.m, bitorder="little")
        return CmsObservation(bits=bits, hash_index=int(self.hash_indices[r]))

    @classmethod
    def from_batch(cls, batch: CmsBatch, mechanism: MechanismConfig) -> "ExternalDataset":
        return cls(
            hash_indices=batch.hash_indices.astype(np.uint32),
            packed_bits=np.packbits(batch.bits, axis=1, bitorder="little"),
            mechanism=mechanism,
        )


def sample_external_dataset(
    popularity: Popularity,
    mechanism: MechanismConfig,
    n_records: int,
    rng: np.random.Generator,
    chunk_records: int = 32768,
) -> ExternalDataset:
    """Simulate a curator-side collection: sample objects, obfuscate, pack."""
    if n_records < 1:
        raise ConfigurationError("n_records must be >= 1")
    hash_indices = np.empty(n_records, dtype=np.uint32)
    packed = np.empty((n_records, (mechanism.m + 7) // 8), dtype=np.uint8)
    for start in range(0, n_records, chunk_records):
        stop = min(n_records, start + chunk_records)
        objects = rng.choice(popularity.probs.size, size=stop - start, p=popularity.probs)
        batch = cms_obfuscate_batch(objects, mechanism, rng)
        hash_indices[start:stop] = batch.hash_indices
        packed[start:stop] = np.packbits(batch.bits, axis=1, bitorder="little")
    return ExternalDataset(hash_indices=hash_indices, packed_bits=packed, mechanism=mechanism)


def estimate_frequencies(dataset: ExternalDataset, universe_size: int) -> np.ndarray:
    """Unbiased per-object frequency estimates; entries may be negative.

    Records are grouped by hash index; each group's per-bucket set-bit counts
    are looked up at every object's bucket, debiased, floor-corrected and
    normalized by the record count.
    """
    n_records = len(dataset)
    if n_records < 1:
        raise ConfigurationError("external dataset is empty")
    config = dataset.mechanism
    if config.m < 2:
        raise ConfigurationError("frequency estimation requires m >= 2")
    xi = config.flip_probabilities.xi
    if 1.0 - 2.0 * xi < 1e-6:
        raise NumericalError(f"epsilon={config.epsilon} too small: debiasing is ill-conditioned")

    universe = np.arange(universe_size, dtype=np.int64)
    order = np.argsort(dataset.hash_indices, kind="stable")
    sorted_j = dataset.hash_indices[order]
    group_js, group_starts = np.unique(sorted_j, return_index=True)
    bounds = np.append(group_starts, n_records)

    hits = np.zeros(universe_size)
    for g, j in enumerate(group_js):
        rows = order[bounds[g] : bounds[g + 1]]
        counts = np.unpackbits(dataset.packed_bits[rows], axis=1, count=config.m, bitorder="little").sum(
            axis=0, dtype=np.int64
        )
        buckets = hash_values(np.int64(j), universe, config)
        hits += counts[buckets]

    raw = (hits - n_records * xi) / (1.0 - 2.0 * xi)
    counts_est = (raw - n_records / config.m) * (config.m / (config.m - 1.0))
    return counts_est / n_records


def project_to_simplex(v: np.ndarray, tol: float = 1e-9, max_iter: int = 100_000) -> Popularity:
    """Alternating projections onto {sum = 1} and the non-negative orthant.

    Stops when a full projection cycle moves the iterate by less than ``tol``
    in max-norm, then lands on the hyperplane; residual negatives of
    magnitude at most ``tol`` are clipped and the vector renormalized so the
    result is a valid distribution.
    """
    x = np.asarray(v, dtype=np.float64).copy()
    if x.ndim != 1 or x.size < 1:
        raise ValueError("input must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("input must be finite")
    n = x.size
    for _ in range(max_iter):
        candidate = np.maximum(x + (1.0 - x.sum()) / n, 0.0)
        moved = np.abs(candidate - x).max()
        x = candidate
        if moved < tol:
            break
    else:
        raise NumericalError(f"simplex projection did not converge within {max_iter} iterations")
    x += (1.0 - x.sum()) / n
    x = np.maximum(x, 0.0)
    return Popularity(probs=x / x.sum())


def estimate_popularity(dataset: ExternalDataset, universe_size: int, tol: float = 1e-9) -> Popularity:
    """The full adversary pipeline: debiased frequencies projected to the simplex."""
    return project_to_simplex(estimate_frequencies(dataset, universe_size), tol=tol)


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, Popularity) else np.asarray(p, dtype=np.float64)


def mae(estimated, true) -> float:
    """Mean absolute error between two popularity vectors."""
    a, b = _probs(estimated), _probs(true)
    if a.size != b.size:
        raise ValueError("vectors must have the same length")
    return float(np.abs(a - b).mean())


def mape_top80(estimated, true) -> float:
    """Mean absolute percentage error over the top 80% of objects by true mass.

    The cutoff keeps floor(0.8 * universe) objects, ranked by true
    probability descending with ties broken by object index.  Objects with
    zero true probability inside that set are excluded with a warning.
    """
    a, b = _probs(estimated), _probs(true)
    if a.size != b.size:
        raise ValueError("vectors must have the same length")
    keep = int(np.floor(0.8 * b.size))
    if keep < 1:
        raise ValueError("universe too small for a top-80% cutoff")
    top = np.argsort(-b, kind="stable")[:keep]
    nonzero = b[top] > 0
    if not nonzero.all():
        warnings.warn(f"excluding {int((~nonzero).sum())} zero-probability objects from MAPE")
        top = top[nonzero]
        if top.size == 0:
            raise ValueError("no positive-probability objects in the top-80% set")
    return float((np.abs(a[top] - b[top]) / b[top]).mean() * 100.0)

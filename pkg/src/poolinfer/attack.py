"""Bayesian pool inference: posterior scores over pools from obfuscated records.

For each candidate pool the attack computes a score proportional to the
posterior probability that it is the target's preferred pool, under a
hierarchical model with uniform hyperpriors: preferred-pool hypothesis
``iota`` uniform over the k pools, relevant interest ``gamma`` uniform on
(0, 1], polarization ``delta`` uniform on (1/k, 1].  The score is a double
integral over (gamma, delta) of the product over observations of the
per-observation evidence

    gamma*delta * L[iota]
      + gamma*(1-delta)/(k-1) * sum(L[alt])
      + (1-gamma) * L[neutral]

where ``L[i]`` aggregates, over objects z in pool i, the mechanism
likelihood of the observation given z weighted by the estimated within-pool
popularity share.  Pre-aggregating the inner sum by pool is exact because
the within-pool shape does not depend on the hyperparameters.

The integral is evaluated by tensor-product Gauss-Legendre quadrature
(default 24 nodes per axis).  Products over observations are accumulated in
log space and recombined with a max-shift, so 180 observations at m = 1024
neither underflow nor overflow.  Per-observation likelihoods are kept up to
a positive per-observation factor (scores are defined up to proportionality);
for the sketch mechanism this reduces each object's contribution to 1 when
the observed bit at its bucket is clear and exp(epsilon) when it is set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateEvidenceError
from .mechanism import (
    CmsBatch,
    CmsObservation,
    HcmsBatch,
    HcmsObservation,
    MechanismConfig,
    ObservationBatch,
    RawBatch,
    RawObservation,
    Variant,
    _hadamard_signs,
    hash_values,
)
from .population import PoolSet, Popularity

DEFAULT_QUADRATURE_NODES = 24

PriorHook = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AttackConfig:
    """Adversary-side knobs: pools, estimated popularity, threshold, quadrature."""

    pools: PoolSet
    est_popularity: Popularity
    threshold: float = 0.0
    quadrature_nodes: int = DEFAULT_QUADRATURE_NODES
    prior_hook: PriorHook | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigurationError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.quadrature_nodes < 1:
            raise ConfigurationError("quadrature_nodes must be >= 1")
        if self.est_popularity.probs.size != self.pools.universe_size:
            raise ConfigurationError("estimated popularity length does not match universe size")
        for i, pool in enumerate(self.pools.pools):
            if self.est_popularity.pool_mass(pool) <= 0:
                raise ConfigurationError(f"estimated popularity has zero mass on pool {i}")


@dataclass(frozen=True)
class AttackOutcome:
    """Scores (shared positive scale), MAP estimate or abstention, confidence."""

    scores: tuple[float, ...]
    estimate: int | None
    confidence: float

    @property
    def abstained(self) -> bool:
        return self.estimate is None


def gauss_legendre_grid(
    k: int, nodes_per_axis: int, prior_hook: PriorHook | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensor-product nodes over (0,1) x (1/k, 1): (gamma, delta, weight) flats."""
    x, w = np.polynomial.legendre.leggauss(nodes_per_axis)
    gamma = (x + 1.0) / 2.0
    w_gamma = w / 2.0
    lo = 1.0 / k
    delta = lo + (x + 1.0) / 2.0 * (1.0 - lo)
    w_delta = w * (1.0 - lo) / 2.0
    gg, dd = np.meshgrid(gamma, delta, indexing="ij")
    ww = np.outer(w_gamma, w_delta)
    gamma_flat, delta_flat, w_flat = gg.ravel(), dd.ravel(), ww.ravel()
    if prior_hook is not None:
        w_flat = w_flat * np.asarray(prior_hook(gamma_flat, delta_flat), dtype=np.float64)
    return gamma_flat, delta_flat, w_flat


class PoolLikelihoodContext:
    """Precomputed pool structure for fast likelihood aggregation.

    ``weights[z]`` is the within-pool popularity share of object z and
    ``membership`` is the (universe, k+1) indicator-times-weight matrix, so a
    likelihood-ratio matrix R of shape (n, universe) aggregates to pool
    evidence with one matmul.  A missing neutral pool leaves its column zero.
    """

    def __init__(self, pools: PoolSet, est_popularity: Popularity):
        self.pools = pools
        self.universe = np.arange(pools.universe_size, dtype=np.int64)
        k = pools.k
        weights = np.zeros(pools.universe_size)
        for i, pool in enumerate(pools.pools):
            mass = est_popularity.pool_mass(pool)
            if mass <= 0:
                raise ConfigurationError(f"estimated popularity has zero mass on pool {i}")
            weights[pool] = est_popularity.probs[pool] / mass
        neutral = pools.neutral
        if neutral.size:
            mass = est_popularity.pool_mass(neutral)
            if mass <= 0:
                raise ConfigurationError("estimated popularity has zero mass on the neutral pool")
            weights[neutral] = est_popularity.probs[neutral] / mass
        self.weights = weights
        membership = np.zeros((pools.universe_size, k + 1))
        membership[self.universe, pools.pool_ids] = weights
        self.membership = membership


def _cms_ratio_rows(
    batch: CmsBatch, ctx: PoolLikelihoodContext, config: MechanismConfig, chunk_elems: int = 8_000_000
) -> np.ndarray:
    """Pool-aggregated sketch evidence, chunked over observations.

    Each object contributes exp(epsilon) when the observed bit at its bucket
    is set and 1 otherwise (the per-observation common factor of the flip
    likelihood is dropped).
    """
    n = len(batch)
    universe = ctx.universe
    out = np.empty((n, ctx.pools.k + 1))
    boost = math.exp(config.epsilon) - 1.0
    rows_per_chunk = max(1, chunk_elems // max(1, universe.size))
    for start in range(0, n, rows_per_chunk):
        stop = min(n, start + rows_per_chunk)
        j = batch.hash_indices[start:stop].astype(np.int64)
        buckets = hash_values(j[:, None], universe[None, :], config)
        hit = batch.bits[start:stop, :][np.arange(stop - start)[:, None], buckets]
        ratios = 1.0 + boost * hit
        out[start:stop] = ratios @ ctx.membership
    return out


def _hcms_ratio_rows(
    batch: HcmsBatch, ctx: PoolLikelihoodContext, config: MechanismConfig, chunk_elems: int = 8_000_000
) -> np.ndarray:
    """Pool-aggregated Hadamard evidence: (1 - xi') on sign match, xi' otherwise."""
    n = len(batch)
    universe = ctx.universe
    xi_prime = config.flip_probabilities.xi_prime
    out = np.empty((n, ctx.pools.k + 1))
    rows_per_chunk = max(1, chunk_elems // max(1, universe.size))
    for start in range(0, n, rows_per_chunk):
        stop = min(n, start + rows_per_chunk)
        j = batch.hash_indices[start:stop].astype(np.int64)
        buckets = hash_values(j[:, None], universe[None, :], config)
        signs = _hadamard_signs(batch.coord_indices[start:stop, None].astype(np.int64), buckets)
        match = signs == batch.bits[start:stop, None]
        ratios = np.where(match, 1.0 - xi_prime, xi_prime)
        out[start:stop] = ratios @ ctx.membership
    return out


def _raw_rows(batch: RawBatch, ctx: PoolLikelihoodContext) -> np.ndarray:
    """Non-private evidence: a one-hot-by-pool row with the within-pool share."""
    objs = batch.objects
    if objs.min() < 0 or objs.max() >= ctx.pools.universe_size:
        raise ValueError("observed object id out of range")
    n = len(batch)
    out = np.zeros((n, ctx.pools.k + 1))
    out[np.arange(n), ctx.pools.pool_ids[objs]] = ctx.weights[objs]
    return out


def likelihood_matrix(
    batch: ObservationBatch,
    pools: PoolSet,
    est_popularity: Popularity,
    config: MechanismConfig,
    ctx: PoolLikelihoodContext | None = None,
) -> np.ndarray:
    """Per-observation pool evidence, shape (n, k+1); last column is neutral."""
    ctx = ctx or PoolLikelihoodContext(pools, est_popularity)
    if isinstance(batch, RawBatch):
        return _raw_rows(batch, ctx)
    if isinstance(batch, HcmsBatch):
        if config.variant is not Variant.HCMS:
            raise ConfigurationError("Hadamard observations require variant hcms")
        return _hcms_ratio_rows(batch, ctx, config)
    if config.variant not in (Variant.CMS, Variant.NO_HASH_CMS):
        raise ConfigurationError(f"sketch observations require a sketch variant, got {config.variant.value}")
    if batch.bits.shape[1] != config.m:
        raise ConfigurationError("observation length does not match configured m")
    return _cms_ratio_rows(batch, ctx, config)


def cms_pool_likelihoods(
    obs: CmsObservation, pools: PoolSet, est_popularity: Popularity, config: MechanismConfig
) -> np.ndarray:
    """Pool evidence for one sketch observation (up to a positive factor)."""
    batch = CmsBatch.from_observations([obs])
    return likelihood_matrix(batch, pools, est_popularity, config)[0]


def hcms_pool_likelihoods(
    obs: HcmsObservation, pools: PoolSet, est_popularity: Popularity, config: MechanismConfig
) -> np.ndarray:
    """Pool evidence for one Hadamard observation."""
    batch = HcmsBatch.from_observations([obs])
    return likelihood_matrix(batch, pools, est_popularity, config)[0]


def nonprivate_pool_likelihoods(
    obj: int, pools: PoolSet, est_popularity: Popularity
) -> np.ndarray:
    """Pool evidence for one revealed object: one-hot by pool."""
    batch = RawBatch(objects=np.array([obj], dtype=np.int64))
    ctx = PoolLikelihoodContext(pools, est_popularity)
    return _raw_rows(batch, ctx)[0]


def log_scores_at_prefixes(
    per_obs_likelihoods: np.ndarray,
    k: int,
    prefix_lengths: Sequence[int],
    quadrature_nodes: int = DEFAULT_QUADRATURE_NODES,
    prior_hook: PriorHook | None = None,
) -> np.ndarray:
    """Log-domain pool scores after each requested prefix of the evidence.

    Returns an array of shape (len(prefix_lengths), k).  Scores share an
    arbitrary additive constant per prefix (proportionality).  Accumulation
    over observations follows the given row order (the canonical order).
    """
    L = np.asarray(per_obs_likelihoods, dtype=np.float64)
    if L.ndim != 2 or L.shape[1] != k + 1:
        raise ValueError(f"likelihood matrix must have k+1 = {k + 1} columns")
    n = L.shape[0]
    if n < 1:
        raise DegenerateEvidenceError("at least one observation is required")
    if np.any(L < 0):
        raise DegenerateEvidenceError("likelihoods must be non-negative")
    if np.any(~(L > 0).any(axis=1)):
        raise DegenerateEvidenceError("an observation has zero likelihood under every pool")
    prefixes = list(prefix_lengths)
    if any(p < 1 or p > n for p in prefixes):
        raise ValueError(f"prefix lengths must lie in [1, {n}]")
    if k < 2:
        raise ConfigurationError("pool inference requires k >= 2")

    gamma, delta, weights = gauss_legendre_grid(k, quadrature_nodes, prior_hook)
    alt = gamma * (1.0 - delta) / (k - 1)
    pref = gamma * delta - alt
    neu = 1.0 - gamma

    pool_sum = L[:, :k].sum(axis=1)
    base = pool_sum[:, None] * alt[None, :] + L[:, k][:, None] * neu[None, :]  # (n, q)
    mix = pref[None, :, None] * L[:, None, :k] + base[:, :, None]  # (n, q, k)
    with np.errstate(divide="ignore"):
        log_mix = np.log(mix, out=mix)
    # Log-evidence is summed over segments between the sorted prefixes and
    # accumulated across segments; this fixed association is the canonical
    # accumulation order.
    sorted_prefixes = sorted(set(prefixes))
    segment_starts = np.array([0] + sorted_prefixes[:-1])
    cumulative = np.cumsum(np.add.reduceat(log_mix, segment_starts, axis=0), axis=0)
    at_prefix = {p: cumulative[i] for i, p in enumerate(sorted_prefixes)}
    log_w = np.log(weights)

    out = np.empty((len(prefixes), k))
    for row, p in enumerate(prefixes):
        node_logs = at_prefix[p] + log_w[:, None]  # (q, k)
        shift = node_logs.max(axis=0)
        out[row] = shift + np.log(np.exp(node_logs - shift[None, :]).sum(axis=0))
    return out


def node_log_integrands(
    per_obs_likelihoods: np.ndarray,
    k: int,
    quadrature_nodes: int = DEFAULT_QUADRATURE_NODES,
) -> np.ndarray:
    """Log of the full-evidence integrand at every quadrature node, shape
    (nodes, k); used to cross-check the engine against direct summation."""
    L = np.asarray(per_obs_likelihoods, dtype=np.float64)
    gamma, delta, _ = gauss_legendre_grid(k, quadrature_nodes)
    alt = gamma * (1.0 - delta) / (k - 1)
    pref = gamma * delta - alt
    neu = 1.0 - gamma
    pool_sum = L[:, :k].sum(axis=1)
    base = pool_sum[:, None] * alt[None, :] + L[:, k][:, None] * neu[None, :]
    mix = pref[None, :, None] * L[:, None, :k] + base[:, :, None]
    with np.errstate(divide="ignore"):
        return np.log(mix).sum(axis=0)


def score_pools(
    per_obs_likelihoods: np.ndarray,
    k: int,
    quadrature_nodes: int = DEFAULT_QUADRATURE_NODES,
    prior_hook: PriorHook | None = None,
) -> np.ndarray:
    """Posterior pool scores for the full evidence, max-normalized to avoid
    under/overflow (values share an arbitrary positive scale)."""
    n = np.asarray(per_obs_likelihoods).shape[0]
    logs = log_scores_at_prefixes(per_obs_likelihoods, k, [n], quadrature_nodes, prior_hook)[0]
    return np.exp(logs - logs.max())


def _outcome_from_log_scores(
    log_scores: np.ndarray, threshold: float, rng: np.random.Generator | None
) -> AttackOutcome:
    shifted = np.exp(log_scores - log_scores.max())
    normalized = shifted / shifted.sum()
    best = normalized.max()
    candidates = np.flatnonzero(normalized == best)
    if len(candidates) == 1:
        estimate = int(candidates[0])
    else:
        pick_rng = rng if rng is not None else np.random.default_rng(0)
        estimate = int(candidates[pick_rng.integers(len(candidates))])
    confidence = float(normalized[estimate])
    scores = tuple(float(s) for s in shifted)
    if confidence < threshold:
        return AttackOutcome(scores=scores, estimate=None, confidence=confidence)
    return AttackOutcome(scores=scores, estimate=estimate, confidence=confidence)


def _as_batch(observations) -> ObservationBatch:
    if isinstance(observations, (CmsBatch, HcmsBatch, RawBatch)):
        return observations
    observations = list(observations)
    if not observations:
        raise DegenerateEvidenceError("at least one observation is required")
    first = observations[0]
    if isinstance(first, CmsObservation):
        return CmsBatch.from_observations(observations)
    if isinstance(first, HcmsObservation):
        return HcmsBatch.from_observations(observations)
    if isinstance(first, RawObservation):
        return RawBatch.from_observations(observations)
    if isinstance(first, (int, np.integer)):
        return RawBatch(objects=np.asarray(observations, dtype=np.int64))
    raise TypeError(f"unsupported observation type {type(first).__name__}")


def run_attack(
    observations,
    attack_config: AttackConfig,
    mechanism_config: MechanismConfig,
    rng: np.random.Generator | None = None,
) -> AttackOutcome:
    """Score all pools, pick the MAP estimate, abstain below the threshold.

    Ties in the maximum are broken uniformly at random from ``rng`` (a fixed
    fallback stream is used when none is given, keeping results
    deterministic).
    """
    batch = _as_batch(observations)
    L = likelihood_matrix(batch, attack_config.pools, attack_config.est_popularity, mechanism_config)
    logs = log_scores_at_prefixes(
        L, attack_config.pools.k, [len(batch)], attack_config.quadrature_nodes, attack_config.prior_hook
    )[0]
    return _outcome_from_log_scores(logs, attack_config.threshold, rng)

"""Object popularity, pools, and user behavior.

A universe of objects is partitioned into ``k`` disjoint pools of interest
plus the implied neutral pool (everything else).  A user is described by a
preferred pool, a relevant interest ``gamma`` (probability of sampling from
any pool of interest) and a polarization ``delta`` (conditional probability
of the preferred pool).  The user's sampling distribution combines those
pool-level weights with a within-pool popularity shape:

    preferred pool     weight gamma * delta
    alternative pools  weight gamma * (1 - delta) / (k - 1) each
    neutral pool       weight 1 - gamma

with objects inside each pool drawn proportionally to a popularity
distribution restricted to that pool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

_MASS_TOL = 1e-9


@dataclass(frozen=True)
class PoolSet:
    """Disjoint pools of interest over a universe; the neutral pool is implied."""

    universe_size: int
    pools: tuple[np.ndarray, ...]
    pool_ids: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pools = tuple(np.asarray(p, dtype=np.int64) for p in self.pools)
        object.__setattr__(self, "pools", pools)
        if self.universe_size < 1:
            raise ConfigurationError("universe_size must be >= 1")
        ids = np.full(self.universe_size, len(pools), dtype=np.int32)
        seen = np.zeros(self.universe_size, dtype=bool)
        for i, pool in enumerate(pools):
            if pool.size == 0:
                raise ConfigurationError(f"pool {i} is empty")
            if pool.min() < 0 or pool.max() >= self.universe_size:
                raise ConfigurationError(f"pool {i} has out-of-range object ids")
            if np.unique(pool).size != pool.size or seen[pool].any():
                raise ConfigurationError(f"pool {i} overlaps another pool or repeats ids")
            seen[pool] = True
            ids[pool] = i
        object.__setattr__(self, "pool_ids", ids)

    @property
    def k(self) -> int:
        return len(self.pools)

    @property
    def neutral(self) -> np.ndarray:
        """Object ids outside every pool of interest."""
        return np.flatnonzero(self.pool_ids == self.k)

    @property
    def groups(self) -> list[np.ndarray]:
        """The k pools followed by the neutral pool when it is non-empty."""
        neutral = self.neutral
        return list(self.pools) + ([neutral] if neutral.size else [])


@dataclass(frozen=True)
class Popularity:
    """A probability distribution over the universe."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size < 1:
            raise ConfigurationError("popularity must be a non-empty vector")
        if np.any(probs < 0):
            raise ConfigurationError("popularity entries must be non-negative")
        if abs(probs.sum() - 1.0) > _MASS_TOL:
            raise ConfigurationError(f"popularity mass {probs.sum()} not within {_MASS_TOL} of 1")

    def pool_mass(self, pool: np.ndarray) -> float:
        return float(self.probs[pool].sum())


@dataclass(frozen=True)
class UserProfile:
    """Preferred pool plus behavioral parameters (gamma, delta)."""

    preferred_pool: int
    gamma: float
    delta: float
    tied: bool = False


@dataclass(frozen=True)
class Behavior:
    """A user's sampling distribution over the universe."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))


def zipf_mixture_popularity(pools: PoolSet, exponent: float) -> Popularity:
    """Zipf-within-pool popularity: rank j inside each group carries mass 1/j^s.

    Every group (each pool of interest, and the neutral pool when non-empty)
    is normalized internally and contributes equal total mass, so the mixture
    weights are uniform over groups.  Objects are ranked by their order in
    the pool definition.
    """
    if exponent < 0:
        raise ConfigurationError("zipf exponent must be >= 0")
    probs = np.zeros(pools.universe_size)
    groups = pools.groups
    for group in groups:
        ranks = np.arange(1, group.size + 1, dtype=np.float64)
        shape = ranks ** (-exponent)
        probs[group] = shape / shape.sum() / len(groups)
    return Popularity(probs=probs)


def uniform_random_popularity(universe_size: int, rng: np.random.Generator) -> Popularity:
    """Independent Uniform(0, 1] masses per object, rescaled to total 1."""
    draws = 1.0 - rng.random(universe_size)
    return Popularity(probs=draws / draws.sum())


def perturb_popularity(p: Popularity, sigma: float, rng: np.random.Generator) -> Popularity:
    """Add iid Gaussian noise, then shift by |min| and renormalize.

    ``sigma = 0`` returns the input unchanged (no-noise case).  Otherwise the
    noisy vector is made non-negative by adding the magnitude of its minimum
    entry to every coordinate and dividing by the total.
    """
    if sigma < 0:
        raise ConfigurationError("sigma must be >= 0")
    if sigma == 0:
        return p
    noisy = p.probs + rng.normal(0.0, sigma, size=p.probs.size)
    shifted = noisy + abs(noisy.min())
    return Popularity(probs=shifted / shifted.sum())


def build_user_behavior(p: Popularity, pools: PoolSet, profile: UserProfile) -> Behavior:
    """Combine pool-level weights with the within-pool popularity shape."""
    k = pools.k
    if not 0 < profile.gamma <= 1:
        raise ValueError(f"gamma must be in (0, 1], got {profile.gamma}")
    if not 1.0 / k < profile.delta <= 1:
        raise ValueError(f"delta must be in (1/{k}, 1], got {profile.delta}")
    if not 0 <= profile.preferred_pool < k:
        raise ValueError(f"preferred pool {profile.preferred_pool} out of range")
    probs = np.zeros(pools.universe_size)
    neutral = pools.neutral
    weights = np.full(k, profile.gamma * (1.0 - profile.delta) / (k - 1))
    weights[profile.preferred_pool] = profile.gamma * profile.delta
    for i, pool in enumerate(pools.pools):
        mass = p.pool_mass(pool)
        if mass <= 0:
            raise ConfigurationError(f"pool {i} has zero popularity mass")
        probs[pool] = weights[i] * p.probs[pool] / mass
    neutral_weight = 1.0 - profile.gamma
    if neutral_weight > 0:
        mass = p.pool_mass(neutral) if neutral.size else 0.0
        if mass <= 0:
            raise ConfigurationError("neutral pool has zero popularity mass")
        probs[neutral] = neutral_weight * p.probs[neutral] / mass
    return Behavior(probs=probs)


def sample_objects(behavior: Behavior, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n iid objects from the behavior distribution."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.choice(behavior.probs.size, size=n, p=behavior.probs)


def profile_from_sequence(seq: np.ndarray, pools: PoolSet) -> UserProfile | None:
    """Recover (preferred pool, gamma, delta) by counting pool memberships.

    Returns None when the sequence never touches a pool of interest (the
    user cannot be attacked).  Argmax ties go to the lowest pool index and
    are flagged on the returned profile.
    """
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size == 0:
        raise ValueError("sequence must be non-empty")
    if seq.min() < 0 or seq.max() >= pools.universe_size:
        raise ValueError("sequence contains out-of-range object ids")
    counts = np.bincount(pools.pool_ids[seq], minlength=pools.k + 1)[: pools.k]
    interest = int(counts.sum())
    if interest == 0:
        return None
    top = int(counts.argmax())
    tied = int((counts == counts[top]).sum()) > 1
    if tied:
        logger.debug("preferred-pool tie at counts %s; picking pool %d", counts.tolist(), top)
    gamma = interest / seq.size
    delta = counts[top] / interest
    return UserProfile(preferred_pool=top, gamma=float(gamma), delta=float(delta), tied=tied)


def jsd(p: Popularity, q: Popularity) -> float:
    """Jensen-Shannon divergence with base-2 logs, so the value lies in [0, 1]."""
    a, b = p.probs, q.probs
    if a.size != b.size:
        raise ValueError("distributions must have the same length")
    m = 0.5 * (a + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_a = np.where(a > 0, a * np.log2(np.divide(a, m, where=m > 0)), 0.0)
        kl_b = np.where(b > 0, b * np.log2(np.divide(b, m, where=m > 0)), 0.0)
    return float(0.5 * kl_a.sum() + 0.5 * kl_b.sum())


def pool_entropy(p: Popularity, pool: np.ndarray) -> float:
    """Shannon entropy (bits) of the popularity conditioned on a pool."""
    pool = np.asarray(pool, dtype=np.int64)
    mass = p.pool_mass(pool)
    if mass <= 0:
        raise ConfigurationError("pool has zero popularity mass")
    q = p.probs[pool] / mass
    q = q[q > 0]
    return float(-(q * np.log2(q)).sum())

"""Dense reference scorer for micro-instances.

Evaluates the posterior score integrand literally: at every quadrature node
it sums the full mechanism likelihood times the user representation over
every object in the universe, multiplies across observations in plain
floating point, and integrates with the quadrature weights.  No pool
pre-aggregation, no likelihood factoring, no log-space tricks.  This is the
independent route used to certify the fast engine on small instances
(universe of a dozen objects, a handful of observations).
"""

from __future__ import annotations

import numpy as np

from .attack import PriorHook, gauss_legendre_grid
from .mechanism import (
    CmsBatch,
    HcmsBatch,
    MechanismConfig,
    ObservationBatch,
    RawBatch,
    hash_value,
)
from .population import PoolSet, Popularity


def hadamard_matrix(s: int) -> np.ndarray:
    """2^s x 2^s Hadamard matrix via the recursive block construction."""
    h = np.array([[1]], dtype=np.int64)
    for _ in range(s):
        h = np.block([[h, h], [h, -h]])
    return h


def full_observation_likelihoods(batch: ObservationBatch, config: MechanismConfig, universe_size: int) -> np.ndarray:
    """Exact Pr[observation | z] for every observation and every object z.

    Sketch variants build the one-hot vector per object, count differing bits
    and apply xi^d (1-xi)^(m-d); the Hadamard variant transforms the one-hot
    vector with the recursively built matrix and compares the sampled
    coordinate.  Returns shape (n, universe_size).
    """
    out = np.empty((len(batch), universe_size))
    if isinstance(batch, RawBatch):
        for t in range(len(batch)):
            out[t] = 0.0
            out[t, batch.objects[t]] = 1.0
        return out
    if isinstance(batch, HcmsBatch):
        xi_prime = config.flip_probabilities.xi_prime
        s = config.m.bit_length() - 1
        h_matrix = hadamard_matrix(s)
        for t in range(len(batch)):
            j, l, bit = int(batch.hash_indices[t]), int(batch.coord_indices[t]), int(batch.bits[t])
            for z in range(universe_size):
                one_hot = np.zeros(config.m, dtype=np.int64)
                one_hot[hash_value(j, z, config)] = 1
                transformed = h_matrix @ one_hot
                out[t, z] = (1.0 - xi_prime) if transformed[l] == bit else xi_prime
        return out
    assert isinstance(batch, CmsBatch)
    xi = config.flip_probabilities.xi
    for t in range(len(batch)):
        j = int(batch.hash_indices[t])
        observed = batch.bits[t].astype(np.int64)
        for z in range(universe_size):
            one_hot = np.zeros(config.m, dtype=np.int64)
            one_hot[hash_value(j, z, config)] = 1
            d = int(np.abs(one_hot - observed).sum())
            out[t, z] = (xi**d) * ((1.0 - xi) ** (config.m - d))
    return out


def user_representation(
    pools: PoolSet, est_popularity: Popularity, iota: int, gamma: float, delta: float
) -> np.ndarray:
    """The assumed behavior distribution over all objects for hypothesis iota."""
    k = pools.k
    probs = np.zeros(pools.universe_size)
    for i, pool in enumerate(pools.pools):
        weight = gamma * delta if i == iota else gamma * (1.0 - delta) / (k - 1)
        probs[pool] = weight * est_popularity.probs[pool] / est_popularity.pool_mass(pool)
    neutral = pools.neutral
    if neutral.size:
        probs[neutral] = (1.0 - gamma) * est_popularity.probs[neutral] / est_popularity.pool_mass(neutral)
    return probs


def dense_scores(
    batch: ObservationBatch,
    pools: PoolSet,
    est_popularity: Popularity,
    config: MechanismConfig,
    quadrature_nodes: int,
    prior_hook: PriorHook | None = None,
) -> np.ndarray:
    """Posterior pool scores by direct summation over the whole universe."""
    likelihoods = full_observation_likelihoods(batch, config, pools.universe_size)
    gamma, delta, weights = gauss_legendre_grid(pools.k, quadrature_nodes, prior_hook)
    scores = np.zeros(pools.k)
    for iota in range(pools.k):
        total = 0.0
        for node in range(len(weights)):
            representation = user_representation(pools, est_popularity, iota, gamma[node], delta[node])
            product = 1.0
            for t in range(len(batch)):
                product *= float(likelihoods[t] @ representation)
            total += weights[node] * product
        scores[iota] = total
    return scores


def dense_node_integrands(
    batch: ObservationBatch,
    pools: PoolSet,
    est_popularity: Popularity,
    config: MechanismConfig,
    quadrature_nodes: int,
) -> np.ndarray:
    """Per-node, per-hypothesis integrand values (nodes, k), for node-level checks."""
    likelihoods = full_observation_likelihoods(batch, config, pools.universe_size)
    gamma, delta, _ = gauss_legendre_grid(pools.k, quadrature_nodes)
    out = np.empty((len(gamma), pools.k))
    for iota in range(pools.k):
        for node in range(len(gamma)):
            representation = user_representation(pools, est_popularity, iota, gamma[node], delta[node])
            product = 1.0
            for t in range(len(batch)):
                product *= float(likelihoods[t] @ representation)
            out[node, iota] = product
    return out

"""Game orchestration: scenarios, per-user game instances, and scaled runs.

A scenario fixes the universe, pools, mechanism, true and estimated
popularity, observation counts, and a master seed.  Each game instance
derives all of its randomness from (master_seed, "user", user_index), so
records are reproducible one user at a time, independent of execution order
and worker count, and adding users never perturbs existing ones.

Every user samples one object sequence of the largest requested length;
smaller observation counts attack prefixes of that sequence (mirroring how a
real adversary accumulates submissions over time).
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import metrics
from .attack import (
    AttackOutcome,
    PoolLikelihoodContext,
    _outcome_from_log_scores,
    likelihood_matrix,
    log_scores_at_prefixes,
)
from .errors import ConfigurationError
from .estimation import estimate_popularity, sample_external_dataset
from .mechanism import MechanismConfig, Variant, derive_hash_seed, obfuscate_batch
from .population import (
    PoolSet,
    Popularity,
    UserProfile,
    build_user_behavior,
    jsd,
    perturb_popularity,
    profile_from_sequence,
    sample_objects,
    uniform_random_popularity,
    zipf_mixture_popularity,
)
from .streams import derive_stream, prf64

DEFAULT_N_OBSERVATIONS = (7, 30, 90, 180)


@dataclass(frozen=True)
class Scenario:
    """Declarative description of one experiment scenario (JSON-serializable)."""

    universe_size: int
    pools: tuple[tuple[int, ...], ...]
    mechanism: MechanismConfig
    true_popularity: dict[str, Any]
    est_popularity: dict[str, Any]
    n_observations: tuple[int, ...]
    n_users: int
    master_seed: int
    perturb_sigma: float = 0.0
    quadrature_nodes: int = 24
    name: str = "scenario"
    users: dict[str, Any] | None = None  # None = synthetic; else event-log spec

    def __post_init__(self) -> None:
        object.__setattr__(self, "pools", tuple(tuple(int(x) for x in p) for p in self.pools))
        object.__setattr__(self, "n_observations", tuple(int(n) for n in self.n_observations))
        if len(self.pools) < 2:
            raise ConfigurationError("attack scenarios need at least two pools of interest")
        if not self.n_observations or any(n < 1 for n in self.n_observations):
            raise ConfigurationError("n_observations must be a non-empty list of counts >= 1")
        if self.n_users < 1:
            raise ConfigurationError("n_users must be >= 1")
        if self.perturb_sigma < 0:
            raise ConfigurationError("perturb_sigma must be >= 0")
        if self.quadrature_nodes < 1:
            raise ConfigurationError("quadrature_nodes must be >= 1")
        kind = self.true_popularity.get("kind")
        if kind not in ("zipf_mixture", "uniform_random", "file"):
            raise ConfigurationError(f"true_popularity.kind: unknown kind {kind!r}")
        kind = self.est_popularity.get("kind")
        if kind not in ("uniform", "from_external", "file", "true"):
            raise ConfigurationError(f"est_popularity.kind: unknown kind {kind!r}")

    @property
    def adversary(self) -> str:
        if self.mechanism.variant is Variant.NON_PRIVATE:
            return "nonprivate"
        return {"uniform": "advw", "from_external": "advs", "true": "advt", "file": "custom"}[
            self.est_popularity["kind"]
        ]


@dataclass(frozen=True)
class GameRecord:
    """One completed game: the user's truth plus the attack outcome per n."""

    user_id: int | str
    true_pool: int
    gamma: float
    delta: float
    outcomes: dict[int, AttackOutcome]
    tied: bool = False
    jsd_user: float | None = None


@dataclass
class ResolvedScenario:
    """A scenario with all randomness-bearing inputs materialized."""

    scenario: Scenario
    pools: PoolSet
    mechanism: MechanismConfig
    true_popularity: Popularity | None
    est_popularity: Popularity
    ctx: PoolLikelihoodContext = field(init=False)
    sequences: list[tuple[str, np.ndarray]] | None = None  # event-log users
    external_objects: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.ctx = PoolLikelihoodContext(self.pools, self.est_popularity)

    @property
    def n_users(self) -> int:
        return len(self.sequences) if self.sequences is not None else self.scenario.n_users

    @property
    def max_n(self) -> int:
        return max(self.scenario.n_observations)


def _load_popularity_file(path: str, universe_size: int) -> Popularity:
    from .io import read_popularity_csv

    p = read_popularity_csv(path)
    if p.probs.size != universe_size:
        raise ConfigurationError(f"popularity file {path} has {p.probs.size} objects, expected {universe_size}")
    return p


def _resolve_true_popularity(scenario: Scenario, pools: PoolSet) -> Popularity:
    spec = scenario.true_popularity
    kind = spec["kind"]
    if kind == "zipf_mixture":
        return zipf_mixture_popularity(pools, float(spec.get("exponent", 1.0)))
    if kind == "uniform_random":
        return uniform_random_popularity(pools.universe_size, derive_stream(scenario.master_seed, "true-popularity"))
    return _load_popularity_file(spec["path"], pools.universe_size)


def _resolve_est_popularity(
    scenario: Scenario,
    pools: PoolSet,
    mechanism: MechanismConfig,
    true_popularity: Popularity | None,
    external_objects: np.ndarray | None,
) -> Popularity:
    spec = scenario.est_popularity
    kind = spec["kind"]
    if kind == "uniform":
        return Popularity(probs=np.full(pools.universe_size, 1.0 / pools.universe_size))
    if kind == "file":
        return _load_popularity_file(spec["path"], pools.universe_size)
    if kind == "true":
        if true_popularity is None:
            raise ConfigurationError("est_popularity 'true' requires a synthetic true popularity")
        return true_popularity
    # from_external: obfuscate a curator-style collection and run the estimator
    if mechanism.variant is Variant.NON_PRIVATE:
        raise ConfigurationError("from_external estimation is meaningless for the non-private mechanism")
    if mechanism.variant is Variant.HCMS:
        raise ConfigurationError("frequency estimation from Hadamard records is not supported")
    rng = derive_stream(scenario.master_seed, "external")
    if external_objects is not None:
        from .estimation import ExternalDataset
        from .mechanism import cms_obfuscate_batch

        batch = cms_obfuscate_batch(external_objects, mechanism, rng)
        dataset = ExternalDataset.from_batch(batch, mechanism)
    else:
        n_records = int(spec.get("n_records", 1_000_000))
        dataset = sample_external_dataset(true_popularity, mechanism, n_records, rng)
    return estimate_popularity(dataset, pools.universe_size)


def resolve_scenario(scenario: Scenario | ResolvedScenario) -> ResolvedScenario:
    """Materialize pools, popularity vectors, and the hash seed for a scenario."""
    if isinstance(scenario, ResolvedScenario):
        return scenario
    pools = PoolSet(universe_size=scenario.universe_size, pools=tuple(np.array(p) for p in scenario.pools))
    mechanism = scenario.mechanism
    if mechanism.variant is Variant.NO_HASH_CMS and mechanism.m != scenario.universe_size:
        mechanism = dataclasses.replace(mechanism, m=scenario.universe_size)
    if mechanism.hash_seed is None:
        mechanism = dataclasses.replace(mechanism, hash_seed=derive_hash_seed(scenario.master_seed))
    mechanism.validate_for_universe(scenario.universe_size)
    scenario = dataclasses.replace(scenario, mechanism=mechanism)

    sequences = None
    external_objects = None
    true_popularity: Popularity | None = None
    if scenario.users is not None and scenario.users.get("kind") == "event_log":
        from .io import ingest_event_log

        spec = scenario.users
        target_len = int(spec.get("target_len", 180))
        if target_len < max(scenario.n_observations):
            raise ConfigurationError("event-log target_len is smaller than the largest n_observations")
        if scenario.perturb_sigma != 0:
            raise ConfigurationError("perturb_sigma applies only to synthetic users")
        sequences, external_objects = ingest_event_log(
            spec["path"],
            pools,
            target_len=target_len,
            split=float(spec.get("split", 0.8)),
            dup_external=int(spec.get("dup_external", 2)),
            seed=prf64(scenario.master_seed, "ingest"),
        )
        if not sequences:
            raise ConfigurationError("event log produced no attackable users")
    else:
        true_popularity = _resolve_true_popularity(scenario, pools)

    est_popularity = _resolve_est_popularity(scenario, pools, mechanism, true_popularity, external_objects)
    return ResolvedScenario(
        scenario=scenario,
        pools=pools,
        mechanism=mechanism,
        true_popularity=true_popularity,
        est_popularity=est_popularity,
        sequences=sequences,
        external_objects=external_objects,
    )


def sample_profile(k: int, rng: np.random.Generator) -> UserProfile:
    """Preferred pool uniform over pools; gamma ~ U(0,1]; delta ~ U(1/k, 1]."""
    preferred = int(rng.integers(k))
    gamma = 1.0 - rng.random()
    delta = 1.0 / k + (1.0 - 1.0 / k) * (1.0 - rng.random())
    return UserProfile(preferred_pool=preferred, gamma=float(gamma), delta=float(delta))


def baseline_attack(k: int, rng: np.random.Generator) -> AttackOutcome:
    """Uniform random guess with fixed confidence 1 (never abstains)."""
    return AttackOutcome(scores=tuple([1.0 / k] * k), estimate=int(rng.integers(k)), confidence=1.0)


def _attack_outcomes(
    resolved: ResolvedScenario, objects: np.ndarray, mech_rng: np.random.Generator, tie_rng: np.random.Generator
) -> dict[int, AttackOutcome]:
    scenario = resolved.scenario
    batch = obfuscate_batch(objects, resolved.mechanism, mech_rng)
    per_obs = likelihood_matrix(batch, resolved.pools, resolved.est_popularity, resolved.mechanism, resolved.ctx)
    ns = sorted(set(scenario.n_observations))
    logs = log_scores_at_prefixes(per_obs, resolved.pools.k, ns, scenario.quadrature_nodes)
    return {n: _outcome_from_log_scores(logs[i], 0.0, tie_rng) for i, n in enumerate(ns)}


def _synthetic_game(resolved: ResolvedScenario, user_index: int) -> GameRecord:
    scenario = resolved.scenario
    seed = scenario.master_seed
    profile = sample_profile(resolved.pools.k, derive_stream(seed, "user", user_index, "profile"))
    p_user = resolved.true_popularity
    if scenario.perturb_sigma > 0:
        p_user = perturb_popularity(p_user, scenario.perturb_sigma, derive_stream(seed, "user", user_index, "perturb"))
    behavior = build_user_behavior(p_user, resolved.pools, profile)
    objects = sample_objects(behavior, resolved.max_n, derive_stream(seed, "user", user_index, "objects"))
    outcomes = _attack_outcomes(
        resolved,
        objects,
        derive_stream(seed, "user", user_index, "mechanism"),
        derive_stream(seed, "user", user_index, "attack"),
    )
    return GameRecord(
        user_id=user_index,
        true_pool=profile.preferred_pool,
        gamma=profile.gamma,
        delta=profile.delta,
        outcomes=outcomes,
        jsd_user=jsd(resolved.est_popularity, p_user),
    )


def _ingested_game(resolved: ResolvedScenario, user_index: int) -> GameRecord:
    scenario = resolved.scenario
    seed = scenario.master_seed
    user_id, sequence = resolved.sequences[user_index]
    profile = profile_from_sequence(sequence, resolved.pools)
    if profile is None:  # ingestion already excludes gamma == 0 users
        raise ConfigurationError(f"user {user_id} has no pool-of-interest events")
    objects = sequence[: resolved.max_n]
    outcomes = _attack_outcomes(
        resolved,
        objects,
        derive_stream(seed, "user", user_index, "mechanism"),
        derive_stream(seed, "user", user_index, "attack"),
    )
    return GameRecord(
        user_id=user_id,
        true_pool=profile.preferred_pool,
        gamma=profile.gamma,
        delta=profile.delta,
        outcomes=outcomes,
        tied=profile.tied,
    )


def run_game_instance(scenario: Scenario | ResolvedScenario, user_index: int) -> GameRecord:
    """Play one full game: sample (or look up) the user, obfuscate, attack all n."""
    resolved = resolve_scenario(scenario)
    if not 0 <= user_index < resolved.n_users:
        raise ValueError(f"user_index {user_index} out of range [0, {resolved.n_users})")
    if resolved.sequences is not None:
        return _ingested_game(resolved, user_index)
    return _synthetic_game(resolved, user_index)


_WORKER_RESOLVED: ResolvedScenario | None = None


def _init_worker(resolved: ResolvedScenario) -> None:
    global _WORKER_RESOLVED
    _WORKER_RESOLVED = resolved


def _run_chunk(indices: Sequence[int]) -> list[GameRecord]:
    return [run_game_instance(_WORKER_RESOLVED, i) for i in indices]


def run_scenario(
    scenario: Scenario | ResolvedScenario, workers: int | None = None
) -> list[GameRecord]:
    """All game records for a scenario, ordered by user index.

    The output is bit-identical for any worker count: every record depends
    only on the resolved scenario and the user index.
    """
    resolved = resolve_scenario(scenario)
    n_users = resolved.n_users
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    workers = max(1, min(workers, n_users))
    if workers == 1:
        return [run_game_instance(resolved, i) for i in range(n_users)]
    chunk = max(1, -(-n_users // (workers * 8)))
    blocks = [range(start, min(start + chunk, n_users)) for start in range(0, n_users, chunk)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(resolved,)) as pool:
        results = list(pool.map(_run_chunk, blocks))
    return [record for block in results for record in block]


def compute_reports(records: list[GameRecord], k: int, **kwargs) -> dict[int, metrics.MetricsReport]:
    return metrics.compute_reports(records, k, **kwargs)


def scenario_auc(records: list[GameRecord], n: int) -> float:
    return metrics.auc_pn(metrics.pn_curve(records, n))


def average_user_jsd(records: list[GameRecord]) -> float:
    """Mean divergence between the adversary's popularity and each user's own."""
    values = [r.jsd_user for r in records if r.jsd_user is not None]
    if not values:
        raise ValueError("records carry no per-user divergence values")
    return float(np.mean(values))

"""Configuration files, presets, event-log ingestion, and CSV/JSON emission.

All on-disk formats are fixed and documented here:

* scenario config / manifest — JSON (see ``scenario_to_dict``)
* pool definitions — ``{"universe_size": N, "pools": [[...], ...]}``
* popularity vectors — CSV ``object_id,prob``
* observations — CSV, one record per line:
  sketch ``user_id,obs_index,j,bits_hex`` (bits packed little-endian, hex),
  Hadamard ``user_id,obs_index,j,l,bit`` (bit +1 stored as 1, -1 as 0),
  non-private ``user_id,obs_index,x``
* event logs — CSV ``user_id,order,object_id``
* run outputs — ``records.csv``, ``pn_curve.csv``, ``auc.csv``,
  ``calibration.csv``, ``heatmap.csv``, ``manifest.json``

Floats are written with ``repr`` (shortest round-trip form) so reruns with
the same manifest produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import ConfigurationError, DataError
from .harness import GameRecord, ResolvedScenario, Scenario
from .mechanism import (
    CmsBatch,
    HcmsBatch,
    MechanismConfig,
    RawBatch,
    Variant,
)
from .metrics import MetricsReport
from .population import PoolSet, Popularity
from .streams import derive_stream

PRESETS = ("emojis", "web")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Scenario config


_MISSING = object()


def _expect(mapping: dict, key: str, types, path: str, default=_MISSING):
    if key not in mapping:
        if default is not _MISSING:
            return default
        raise ConfigurationError(f"{path}.{key}: missing required field")
    value = mapping[key]
    if types is not None and not isinstance(value, types):
        raise ConfigurationError(f"{path}.{key}: expected {types}, got {type(value).__name__}")
    return value


def scenario_from_dict(data: dict[str, Any], base_dir: Path | None = None) -> Scenario:
    """Build and validate a Scenario from parsed JSON, with field-level errors."""
    if not isinstance(data, dict):
        raise ConfigurationError("scenario: expected a JSON object")
    mech_raw = _expect(data, "mechanism", dict, "scenario")
    try:
        variant = Variant(_expect(mech_raw, "variant", str, "scenario.mechanism"))
    except ValueError as exc:
        raise ConfigurationError(f"scenario.mechanism.variant: {exc}") from None
    epsilon = _expect(mech_raw, "epsilon", (int, float), "scenario.mechanism")
    if not epsilon > 0:
        raise ConfigurationError(f"scenario.mechanism.epsilon: must be > 0, got {epsilon}")
    mechanism = MechanismConfig(
        variant=variant,
        epsilon=float(epsilon),
        m=int(_expect(mech_raw, "m", int, "scenario.mechanism")),
        num_hashes=int(_expect(mech_raw, "num_hashes", int, "scenario.mechanism")),
        hash_seed=mech_raw.get("hash_seed"),
    )
    pools = _expect(data, "pools", (list, str), "scenario")
    universe_size = data.get("universe_size")
    if isinstance(pools, str):
        pool_path = Path(pools) if base_dir is None else base_dir / pools
        loaded = read_pools_json(pool_path)
        pools = [list(p) for p in loaded.pools]
        universe_size = loaded.universe_size if universe_size is None else universe_size
    if universe_size is None:
        raise ConfigurationError("scenario.universe_size: missing required field")
    users = data.get("users")
    if users is not None and base_dir is not None and "path" in users:
        users = dict(users, path=str(base_dir / users["path"]))
    for spec_key in ("true_popularity", "est_popularity"):
        spec = data.get(spec_key)
        if isinstance(spec, dict) and spec.get("kind") == "file" and base_dir is not None:
            data = dict(data, **{spec_key: dict(spec, path=str(base_dir / spec["path"]))})
    try:
        return Scenario(
            universe_size=int(universe_size),
            pools=tuple(tuple(p) for p in pools),
            mechanism=mechanism,
            true_popularity=_expect(data, "true_popularity", dict, "scenario"),
            est_popularity=_expect(data, "est_popularity", dict, "scenario"),
            n_observations=tuple(_expect(data, "n_observations", list, "scenario")),
            n_users=int(_expect(data, "n_users", int, "scenario")),
            master_seed=int(_expect(data, "master_seed", int, "scenario")),
            perturb_sigma=float(_expect(data, "perturb_sigma", (int, float), "scenario", 0.0)),
            quadrature_nodes=int(_expect(data, "quadrature_nodes", int, "scenario", 24)),
            name=str(data.get("name", "scenario")),
            users=users,
        )
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"scenario: {exc}") from None


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    return {
        "name": scenario.name,
        "universe_size": scenario.universe_size,
        "pools": [list(p) for p in scenario.pools],
        "mechanism": {
            "variant": scenario.mechanism.variant.value,
            "epsilon": scenario.mechanism.epsilon,
            "m": scenario.mechanism.m,
            "num_hashes": scenario.mechanism.num_hashes,
            "hash_seed": scenario.mechanism.hash_seed,
        },
        "true_popularity": scenario.true_popularity,
        "est_popularity": scenario.est_popularity,
        "n_observations": list(scenario.n_observations),
        "n_users": scenario.n_users,
        "perturb_sigma": scenario.perturb_sigma,
        "quadrature_nodes": scenario.quadrature_nodes,
        "master_seed": scenario.master_seed,
        "users": scenario.users,
    }


def load_scenario(path_or_preset: str | Path) -> Scenario:
    """Load a scenario from a JSON file, or by preset name (``emojis``, ``web``)."""
    path = Path(path_or_preset)
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        return scenario_from_dict(data, base_dir=path.parent)
    name = str(path_or_preset)
    if name in PRESETS:
        data = json.loads(resources.files("poolinfer.presets").joinpath(f"{name}.json").read_text())
        return scenario_from_dict(data)
    raise ConfigurationError(f"scenario config not found: {path_or_preset!r} (presets: {', '.join(PRESETS)})")


# ---------------------------------------------------------------------------
# Pools and popularity vectors


def read_pools_json(path: str | Path) -> PoolSet:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read pools ({exc})") from None
    if not isinstance(data, dict) or "universe_size" not in data or "pools" not in data:
        raise DataError(f'{path}: pools JSON needs "universe_size" and "pools"')
    return PoolSet(universe_size=int(data["universe_size"]), pools=tuple(np.array(p, dtype=np.int64) for p in data["pools"]))


def write_pools_json(pools: PoolSet, path: str | Path) -> None:
    payload = {"universe_size": pools.universe_size, "pools": [p.tolist() for p in pools.pools]}
    Path(path).write_text(json.dumps(payload) + "\n")


def read_popularity_csv(path: str | Path) -> Popularity:
    probs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["object_id", "prob"]:
            raise DataError(f"{path}: expected header object_id,prob")
        for row_num, row in enumerate(reader):
            if len(row) != 2 or int(row[0]) != row_num:
                raise DataError(f"{path}: row {row_num + 2} malformed (object ids must be 0..N-1 in order)")
            probs.append(float(row[1]))
    try:
        return Popularity(probs=np.array(probs))
    except ConfigurationError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_popularity_csv(p: Popularity, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["object_id", "prob"])
        for i, value in enumerate(p.probs):
            writer.writerow([i, _fmt(value)])


# ---------------------------------------------------------------------------
# Observation files


def write_observations_csv(path: str | Path, user_batches: Iterable[tuple[str, Any]], config: MechanismConfig) -> None:
    """Write per-user observation batches; format depends on the variant."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if config.variant is Variant.HCMS:
            writer.writerow(["user_id", "obs_index", "j", "l", "bit"])
            for user_id, batch in user_batches:
                for t in range(len(batch)):
                    wire_bit = 1 if batch.bits[t] > 0 else 0
                    writer.writerow([user_id, t, int(batch.hash_indices[t]), int(batch.coord_indices[t]), wire_bit])
        elif config.variant is Variant.NON_PRIVATE:
            writer.writerow(["user_id", "obs_index", "x"])
            for user_id, batch in user_batches:
                for t in range(len(batch)):
                    writer.writerow([user_id, t, int(batch.objects[t])])
        else:
            writer.writerow(["user_id", "obs_index", "j", "bits_hex"])
            for user_id, batch in user_batches:
                packed = np.packbits(batch.bits, axis=1, bitorder="little")
                for t in range(len(batch)):
                    writer.writerow([user_id, t, int(batch.hash_indices[t]), packed[t].tobytes().hex()])


def read_observations_csv(path: str | Path, config: MechanismConfig) -> list[tuple[str, Any]]:
    """Read observation batches grouped by user, ordered by (first appearance, obs_index)."""
    per_user: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty observation file")
        try:
            if config.variant is Variant.HCMS:
                if header != ["user_id", "obs_index", "j", "l", "bit"]:
                    raise DataError(f"{path}: bad header for hcms observations")
                for row in reader:
                    user, t, j, l, bit = row[0], int(row[1]), int(row[2]), int(row[3]), int(row[4])
                    per_user.setdefault(user, []).append((t, j, l, 1 if bit else -1))
            elif config.variant is Variant.NON_PRIVATE:
                if header != ["user_id", "obs_index", "x"]:
                    raise DataError(f"{path}: bad header for non-private observations")
                for row in reader:
                    per_user.setdefault(row[0], []).append((int(row[1]), int(row[2])))
            else:
                if header != ["user_id", "obs_index", "j", "bits_hex"]:
                    raise DataError(f"{path}: bad header for sketch observations")
                n_bytes = (config.m + 7) // 8
                for row in reader:
                    raw = bytes.fromhex(row[3])
                    if len(raw) != n_bytes:
                        raise DataError(f"{path}: bits field has {len(raw)} bytes, expected {n_bytes}")
                    per_user.setdefault(row[0], []).append((int(row[1]), int(row[2]), raw))
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: malformed row ({exc})") from None

    batches: list[tuple[str, Any]] = []
    for user, rows in per_user.items():
        rows.sort(key=lambda r: r[0])
        if config.variant is Variant.HCMS:
            batches.append(
                (
                    user,
                    HcmsBatch(
                        hash_indices=np.array([r[1] for r in rows], dtype=np.uint32),
                        coord_indices=np.array([r[2] for r in rows], dtype=np.uint32),
                        bits=np.array([r[3] for r in rows], dtype=np.int8),
                    ),
                )
            )
        elif config.variant is Variant.NON_PRIVATE:
            batches.append((user, RawBatch(objects=np.array([r[1] for r in rows], dtype=np.int64))))
        else:
            packed = np.frombuffer(b"".join(r[2] for r in rows), dtype=np.uint8).reshape(len(rows), -1)
            bits = np.unpackbits(packed, axis=1, count=config.m, bitorder="little")
            batches.append(
                (user, CmsBatch(hash_indices=np.array([r[1] for r in rows], dtype=np.uint32), bits=bits))
            )
    return batches


# ---------------------------------------------------------------------------
# Event logs (per-user object sequences)


def read_event_log(path: str | Path) -> dict[str, np.ndarray]:
    """Parse an event log CSV into per-user object sequences in order."""
    events: dict[str, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "order", "object_id"]:
            raise DataError(f"{path}: expected header user_id,order,object_id")
        for line_num, row in enumerate(reader, start=2):
            try:
                user, order, obj = row[0], int(row[1]), int(row[2])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{line_num}: malformed row ({exc})") from None
            events.setdefault(user, []).append((order, obj))
    if not events:
        raise DataError(f"{path}: event log contains no events")
    sequences: dict[str, np.ndarray] = {}
    for user, rows in events.items():
        orders = [o for o, _ in rows]
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise DataError(f"{path}: user {user} has non-increasing event order")
        sequences[user] = np.array([obj for _, obj in rows], dtype=np.int64)
    return sequences


def extend_cyclically(seq: np.ndarray, target_len: int) -> np.ndarray:
    """Repeat a sequence in order until it reaches the target length."""
    if seq.size == 0:
        raise ValueError("cannot extend an empty sequence")
    if seq.size >= target_len:
        return seq[:target_len]
    reps = -(-target_len // seq.size)
    return np.tile(seq, reps)[:target_len]


def ingest_event_log(
    path: str | Path,
    pools: PoolSet,
    target_len: int = 180,
    split: float = 0.8,
    dup_external: int = 2,
    seed: int = 0,
    min_events: int = 10,
) -> tuple[list[tuple[str, np.ndarray]], np.ndarray]:
    """Turn a real event log into attack and external populations.

    Users with fewer than ``min_events`` events are dropped; each kept user
    contributes their first ``target_len`` objects.  A seeded random split
    assigns a ``split`` fraction of users to the attack side, whose
    sequences are extended cyclically to ``target_len`` and filtered to
    users that touch a pool of interest at least once.  The remaining users'
    (untruncated-order, non-extended) objects are flattened and duplicated
    ``dup_external`` times to form the external multiset.
    """
    if not 0 < split < 1:
        raise ConfigurationError(f"split must be in (0, 1), got {split}")
    if dup_external < 1:
        raise ConfigurationError("dup_external must be >= 1")
    sequences = read_event_log(path)
    bad = {u for u, s in sequences.items() if s.size and (s.min() < 0 or s.max() >= pools.universe_size)}
    if bad:
        raise DataError(f"event log has object ids outside the universe for users: {sorted(bad)[:5]}")
    kept = sorted(u for u, s in sequences.items() if s.size >= min_events)
    if not kept:
        raise DataError(f"no users with at least {min_events} events")
    order = derive_stream(seed, "split").permutation(len(kept))
    n_attack = int(round(split * len(kept)))
    attack_users = sorted(kept[i] for i in order[:n_attack])
    external_users = sorted(kept[i] for i in order[n_attack:])

    attack_population: list[tuple[str, np.ndarray]] = []
    for user in attack_users:
        seq = extend_cyclically(sequences[user][:target_len], target_len)
        if (pools.pool_ids[seq] < pools.k).any():  # gamma > 0
            attack_population.append((user, seq))
    external_chunks = [sequences[user][:target_len] for user in external_users]
    if external_chunks:
        flat = np.concatenate(external_chunks)
        external = np.tile(flat, dup_external)
    else:
        external = np.empty(0, dtype=np.int64)
    return attack_population, external


# ---------------------------------------------------------------------------
# Run outputs


def _sort_key(user_id):
    return (0, user_id, "") if isinstance(user_id, int) else (1, 0, str(user_id))


def write_outputs(
    records: list[GameRecord],
    reports: dict[int, MetricsReport],
    out_dir: str | Path,
    resolved: ResolvedScenario | None = None,
    adversary: str | None = None,
) -> dict[str, Path]:
    """Emit the documented CSVs (plus manifest.json when a scenario is given)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    if adversary is None:
        adversary = resolved.scenario.adversary if resolved is not None else "unknown"

    paths["records"] = out / "records.csv"
    with open(paths["records"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "n", "true_pool", "gamma", "delta", "estimate", "confidence", "correct"])
        for record in sorted(records, key=lambda r: _sort_key(r.user_id)):
            for n in sorted(record.outcomes):
                outcome = record.outcomes[n]
                writer.writerow(
                    [
                        record.user_id,
                        n,
                        record.true_pool,
                        _fmt(record.gamma),
                        _fmt(record.delta),
                        outcome.estimate if outcome.estimate is not None else "abstain",
                        _fmt(outcome.confidence),
                        int(outcome.estimate == record.true_pool),
                    ]
                )

    paths["pn_curve"] = out / "pn_curve.csv"
    with open(paths["pn_curve"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "threshold", "null_rate", "precision"])
        for n in sorted(reports):
            for tau, null_rate, precision in reports[n].pn_curve:
                writer.writerow([n, _fmt(tau), _fmt(null_rate), _fmt(precision)])

    paths["auc"] = out / "auc.csv"
    with open(paths["auc"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["adversary", "n", "auc"])
        for n in sorted(reports):
            writer.writerow([adversary, n, _fmt(reports[n].auc_pn)])

    paths["calibration"] = out / "calibration.csv"
    with open(paths["calibration"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "bin_lo", "bin_hi", "count", "success_rate"])
        for n in sorted(reports):
            for b in reports[n].calibration:
                writer.writerow([n, _fmt(b.lo), _fmt(b.hi), b.count, _fmt(b.success_rate)])

    paths["heatmap"] = out / "heatmap.csv"
    with open(paths["heatmap"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "gamma_lo", "gamma_hi", "delta_lo", "delta_hi", "count", "precision"])
        for n in sorted(reports):
            for cell in reports[n].heatmap:
                writer.writerow(
                    [
                        n,
                        _fmt(cell.gamma_lo),
                        _fmt(cell.gamma_hi),
                        _fmt(cell.delta_lo),
                        _fmt(cell.delta_hi),
                        cell.count,
                        _fmt(cell.precision),
                    ]
                )

    if resolved is not None:
        paths["manifest"] = out / "manifest.json"
        manifest = {
            "scenario": scenario_to_dict(resolved.scenario),
            "adversary": adversary,
            "package": "poolinfer",
        }
        paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n")
    return paths


def load_manifest_scenario(path: str | Path) -> Scenario:
    data = json.loads(Path(path).read_text())
    return scenario_from_dict(data["scenario"])


def read_records_csv(path: str | Path) -> list[GameRecord]:
    """Rebuild game records (scores are not persisted; outcomes carry
    estimate and confidence only)."""
    from .attack import AttackOutcome

    rows_by_user: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["user_id", "n", "true_pool", "gamma", "delta", "estimate", "confidence", "correct"]
        if header != expected:
            raise DataError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            try:
                user, n = row[0], int(row[1])
                true_pool, gamma, delta = int(row[2]), float(row[3]), float(row[4])
                estimate = None if row[5] == "abstain" else int(row[5])
                confidence = float(row[6])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: malformed row ({exc})") from None
            entry = rows_by_user.setdefault(user, {"true_pool": true_pool, "gamma": gamma, "delta": delta, "outcomes": {}})
            entry["outcomes"][n] = AttackOutcome(scores=(), estimate=estimate, confidence=confidence)
    records = []
    for user, entry in rows_by_user.items():
        user_id: int | str = int(user) if user.isdigit() else user
        records.append(
            GameRecord(
                user_id=user_id,
                true_pool=entry["true_pool"],
                gamma=entry["gamma"],
                delta=entry["delta"],
                outcomes=entry["outcomes"],
            )
        )
    records.sort(key=lambda r: _sort_key(r.user_id))
    return records

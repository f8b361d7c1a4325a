"""Command-line interface.

Subcommands:

* ``simulate`` — run a scenario (synthetic or event-log users) and write CSVs
* ``attack``   — attack a per-user observation file
* ``estimate`` — build an estimated popularity from an external observation file
* ``ingest``   — turn an event log into attack/external populations
* ``sweep``    — run a config matrix (cross product of dotted-path overrides)
* ``report``   — recompute metrics from an existing records.csv

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .attack import AttackConfig, run_attack
from .errors import ConfigurationError, DataError, NumericalError
from .estimation import ExternalDataset, estimate_popularity
from .harness import compute_reports, resolve_scenario, run_scenario
from .io import _fmt
from .mechanism import CmsBatch, MechanismConfig, Variant
from .streams import derive_stream


def _mechanism_from_json(path: str) -> MechanismConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: cannot read mechanism config ({exc})") from None
    try:
        return MechanismConfig(
            variant=Variant(data["variant"]),
            epsilon=float(data["epsilon"]),
            m=int(data["m"]),
            num_hashes=int(data["num_hashes"]),
            hash_seed=data.get("hash_seed"),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: bad mechanism config ({exc})") from None


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = pio.load_scenario(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.full:
        overrides["n_users"] = 150_000
    if args.users is not None:
        overrides["n_users"] = args.users
    if overrides:
        scenario = dataclasses.replace(scenario, **overrides)
    resolved = resolve_scenario(scenario)
    records = run_scenario(resolved, workers=args.threads)
    reports = compute_reports(records, resolved.pools.k)
    paths = pio.write_outputs(records, reports, args.out, resolved)
    for n in sorted(reports):
        print(f"{scenario.name} {scenario.adversary} n={n}: auc={reports[n].auc_pn:.4f}")
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_attack(args: argparse.Namespace) -> int:
    pools = pio.read_pools_json(args.pools)
    mechanism = _mechanism_from_json(args.mechanism)
    mechanism.validate_for_universe(pools.universe_size)
    if args.popularity == "uniform":
        est = np.full(pools.universe_size, 1.0 / pools.universe_size)
        from .population import Popularity

        est_popularity = Popularity(probs=est)
    else:
        est_popularity = pio.read_popularity_csv(args.popularity)
    attack_config = AttackConfig(
        pools=pools,
        est_popularity=est_popularity,
        threshold=args.threshold,
        quadrature_nodes=args.quadrature_nodes,
    )
    batches = pio.read_observations_csv(args.obs, mechanism)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "estimate", "confidence"] + [f"score_{i}" for i in range(pools.k)])
        for user_id, batch in sorted(batches, key=lambda ub: ub[0]):
            outcome = run_attack(batch, attack_config, mechanism, derive_stream(args.seed, "attack-tie", user_id))
            estimate = "abstain" if outcome.estimate is None else outcome.estimate
            writer.writerow([user_id, estimate, _fmt(outcome.confidence)] + [_fmt(s) for s in outcome.scores])
    print(f"attacked {len(batches)} users -> {args.out}")
    return 0


def _cmd_estimate(args: argparse.Namespace) -> int:
    mechanism = _mechanism_from_json(args.mechanism)
    batches = pio.read_observations_csv(args.obs, mechanism)
    if not batches:
        raise DataError(f"{args.obs}: no observations")
    if not all(isinstance(batch, CmsBatch) for _, batch in batches):
        raise ConfigurationError("popularity estimation needs sketch observations")
    hash_indices = np.concatenate([batch.hash_indices for _, batch in batches])
    packed = np.concatenate([np.packbits(batch.bits, axis=1, bitorder="little") for _, batch in batches])
    dataset = ExternalDataset(hash_indices=hash_indices, packed_bits=packed, mechanism=mechanism)
    popularity = estimate_popularity(dataset, args.universe_size)
    pio.write_popularity_csv(popularity, args.out)
    print(f"estimated popularity over {len(dataset)} records -> {args.out}")
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    pools = pio.read_pools_json(args.pools)
    attack_pop, external = pio.ingest_event_log(
        args.log,
        pools,
        target_len=args.target_len,
        split=args.split,
        dup_external=args.dup_external,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "attack_population.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "order", "object_id"])
        for user_id, seq in attack_pop:
            for t, obj in enumerate(seq):
                writer.writerow([user_id, t, int(obj)])
    with open(out / "external_objects.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["object_id"])
        for obj in external:
            writer.writerow([int(obj)])
    print(f"ingested {len(attack_pop)} attack users, {len(external)} external objects -> {out}")
    return 0


def _set_dotted(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigurationError(f"sweep grid key {dotted!r} does not match the base scenario")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigurationError(f"sweep grid key {dotted!r} does not match the base scenario")
    node[keys[-1]] = value


def _cmd_sweep(args: argparse.Namespace) -> int:
    try:
        spec = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{args.config}: cannot read sweep config ({exc})") from None
    base = spec.get("base")
    if isinstance(base, str):
        base_dict = pio.scenario_to_dict(pio.load_scenario(base))
    elif isinstance(base, dict):
        base_dict = pio.scenario_to_dict(pio.scenario_from_dict(base, base_dir=Path(args.config).parent))
    else:
        raise ConfigurationError(f"{args.config}: sweep config needs a 'base' scenario")
    grid = spec.get("grid", {})
    if not isinstance(grid, dict) or not grid:
        raise ConfigurationError(f"{args.config}: sweep config needs a non-empty 'grid'")
    axes = sorted(grid)
    for combo in itertools.product(*(grid[a] for a in axes)):
        scenario_dict = json.loads(json.dumps(base_dict))
        label_parts = []
        for key, value in zip(axes, combo):
            _set_dotted(scenario_dict, key, value)
            label_parts.append(f"{key.split('.')[-1]}={value}")
        label = "_".join(label_parts)
        scenario = pio.scenario_from_dict(scenario_dict)
        scenario = dataclasses.replace(scenario, name=f"{scenario.name}_{label}")
        resolved = resolve_scenario(scenario)
        records = run_scenario(resolved, workers=args.threads)
        reports = compute_reports(records, resolved.pools.k)
        pio.write_outputs(records, reports, Path(args.out) / label, resolved)
        aucs = " ".join(f"n={n}:{reports[n].auc_pn:.3f}" for n in sorted(reports))
        print(f"{label}: {aucs}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    records = pio.read_records_csv(args.records)
    if not records:
        raise DataError(f"{args.records}: no records")
    reports = compute_reports(records, args.k)
    pio.write_outputs(records, reports, args.out, adversary=args.adversary)
    for n in sorted(reports):
        print(f"n={n}: auc={reports[n].auc_pn:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poolinfer", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write result CSVs")
    p.add_argument("--config", required=True, help="scenario JSON path or preset name (emojis, web)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--users", type=int, default=None, help="override n_users")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--full", action="store_true", help="run the full 150000-user scale")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("attack", help="attack an observation file")
    p.add_argument("--obs", required=True)
    p.add_argument("--pools", required=True)
    p.add_argument("--mechanism", required=True, help="mechanism config JSON")
    p.add_argument("--popularity", default="uniform", help="popularity CSV or 'uniform'")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--quadrature-nodes", type=int, default=24)
    p.add_argument("--seed", type=int, default=0, help="seed for tie-breaking")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("estimate", help="estimate popularity from external observations")
    p.add_argument("--obs", required=True)
    p.add_argument("--mechanism", required=True)
    p.add_argument("--universe-size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("ingest", help="split an event log into attack/external populations")
    p.add_argument("--log", required=True)
    p.add_argument("--pools", required=True)
    p.add_argument("--target-len", type=int, default=180)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--dup-external", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("sweep", help="run a cross product of scenario overrides")
    p.add_argument("--config", required=True, help="sweep JSON with 'base' and 'grid'")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="recompute metrics from records.csv")
    p.add_argument("--records", required=True)
    p.add_argument("--k", type=int, required=True, help="number of pools of interest")
    p.add_argument("--adversary", default="unknown")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

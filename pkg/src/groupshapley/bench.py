"""Batch experiment driver: validated JSON configs in, seeded CSV results out.

Runs every (replication, method) cell against ground truth, computes the
convergence and final-error metrics per group, and writes rows in a fixed,
deterministic order so identical configs reproduce identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .baselines import BASELINE_ESTIMATORS, group_sum
from .estimator import EstimatorConfig, estimate_group_value, predicted_evaluations
from .exact import DEFAULT_CAP, Partition, exact_shapley_values, mod_partition
from .games import Game, SOUGame, game_from_config
from .metrics import aucc as curve_aucc

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
THREADS_ENV_VAR = "GROUPSHAPLEY_THREADS"

RESULT_COLUMNS = [
    "method", "n", "group_id", "seed", "evals", "estimate",
    "truth", "truth_source", "abs_rel_err", "aucc", "wall_time_ns",
]
SUMMARY_COLUMNS = [
    "method", "group_id", "are_mean", "are_sd", "aucc_mean", "aucc_sd",
]


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


def _require_keys(d: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{where}: missing fields {sorted(missing)}")


def _check_schema_version(cfg: dict, where: str) -> None:
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"{where}: schema_version must be {SCHEMA_VERSION}, "
            f"got {cfg.get('schema_version')!r}"
        )


GAME_KEYS = {
    "sou": {"type", "n", "d", "seed"},
    "sou_explicit": {"type", "n", "subsets", "coefficients"},
    "size_only": {"type", "n", "name"},
    "regression_csv": {"type", "path", "test_fraction", "lambda", "seed"},
}


def validate_game_spec(spec: dict, where: str = "game") -> None:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"{where}: expected an object with a 'type' field")
    kind = spec["type"]
    if kind not in GAME_KEYS:
        raise ConfigError(f"{where}: unknown game type {kind!r}")
    _require_keys(spec, GAME_KEYS[kind], GAME_KEYS[kind], where)


def partition_from_spec(spec: dict, n: int, where: str = "groups") -> Partition:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    if "rule" in spec:
        _require_keys(spec, {"rule", "k"}, {"rule", "k"}, where)
        if spec["rule"] != "mod":
            raise ConfigError(f"{where}: unknown rule {spec['rule']!r}")
        k = int(spec["k"])
        if not (1 <= k <= n):
            raise ConfigError(f"{where}: k must be in 1..{n}")
        return mod_partition(n, k)
    _require_keys(spec, {"explicit"}, {"explicit"}, where)
    try:
        return Partition(spec["explicit"], n=n)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


METHOD_KEYS = {
    "fgsv": {"name", "size_threshold", "grid_samples", "pair_samples", "exhaustive"},
}
KNOWN_METHODS = set(BASELINE_ESTIMATORS) | {"fgsv"}


@dataclass
class BenchConfig:
    game_spec: dict
    groups_spec: dict
    methods: list[dict]
    budget: int
    replications: int
    checkpoint_interval: int = 200
    seed: int = 0
    truth: dict = field(default_factory=lambda: {"source": "auto"})

    @classmethod
    def from_dict(cls, cfg: dict) -> "BenchConfig":
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be an object")
        _check_schema_version(cfg, "config")
        allowed = {
            "schema_version", "game", "groups", "methods", "budget",
            "replications", "checkpoint_interval", "seed", "truth",
        }
        _require_keys(cfg, allowed, {"schema_version", "game", "groups",
                                     "methods", "budget", "replications"}, "config")
        validate_game_spec(cfg["game"])
        methods = cfg["methods"]
        if not isinstance(methods, list) or not methods:
            raise ConfigError("methods: need a non-empty list")
        for m in methods:
            if not isinstance(m, dict) or "name" not in m:
                raise ConfigError("methods: each entry needs a 'name'")
            if m["name"] not in KNOWN_METHODS:
                raise ConfigError(f"methods: unknown method {m['name']!r}")
            allowed_keys = METHOD_KEYS.get(m["name"], {"name"})
            _require_keys(m, allowed_keys, {"name"}, f"methods[{m['name']}]")
        budget = int(cfg["budget"])
        if budget < 1:
            raise ConfigError("budget must be positive")
        reps = int(cfg["replications"])
        if reps < 1:
            raise ConfigError("replications must be positive")
        truth = cfg.get("truth", {"source": "auto"})
        _require_keys(truth, {"source", "reference_budget"}, {"source"}, "truth")
        if truth["source"] not in ("auto", "closed_form", "exact", "reference"):
            raise ConfigError(f"truth: unknown source {truth['source']!r}")
        return cls(
            game_spec=cfg["game"],
            groups_spec=cfg["groups"],
            methods=methods,
            budget=budget,
            replications=reps,
            checkpoint_interval=int(cfg.get("checkpoint_interval", 200)),
            seed=int(cfg.get("seed", 0)),
            truth=truth,
        )


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def resolve_threads(flag_value: int | None) -> int:
    if flag_value is not None:
        if flag_value < 1:
            raise ConfigError("--threads must be >= 1")
        return flag_value
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            k = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer") from exc
        if k < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1")
        return k
    return 1


def _rng_for(base_seed: int, rep: int, method_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(base_seed, spawn_key=(rep, method_index))
    return np.random.default_rng(ss)


def compute_truth(config: BenchConfig, game: Game, partition: Partition):
    """Per-group ground-truth values plus a source label."""
    source = config.truth["source"]
    if source == "auto":
        if isinstance(game, SOUGame):
            source = "closed_form"
        elif game.n <= DEFAULT_CAP:
            source = "exact"
        elif "reference_budget" in config.truth:
            source = "reference"
        else:
            raise ConfigError(
                "no ground truth available: game has no closed form, "
                f"n > {DEFAULT_CAP}, and no truth.reference_budget given"
            )
    if source == "closed_form":
        if not isinstance(game, SOUGame):
            raise ConfigError("truth.source=closed_form needs a sum-of-unanimity game")
        sv = game.exact_shapley_vector()
    elif source == "exact":
        if game.n > DEFAULT_CAP:
            raise ConfigError(f"truth.source=exact needs n <= {DEFAULT_CAP}")
        sv = exact_shapley_values(game)
    elif source == "reference":
        if "reference_budget" not in config.truth:
            raise ConfigError("truth.source=reference needs truth.reference_budget")
        ref_budget = int(config.truth["reference_budget"])
        ref_game = game_from_config(config.game_spec)
        rng = np.random.default_rng(
            np.random.SeedSequence(config.seed, spawn_key=(0xFEED,))
        )
        sv = baselines.permutation_estimator(ref_game, ref_budget, rng).values
    else:
        raise ConfigError(f"unknown truth source {source!r}")
    truths = [float(sv[list(g)].sum()) for g in partition.groups]
    return truths, source


def fgsv_config_for(n: int, s0: int, per_group_budget: int, method: dict) -> EstimatorConfig:
    """Estimator parameters that spend close to (and never more than) the
    per-group share of the budget, with equal sample counts in both regimes
    unless overridden."""
    s_bar = int(method.get("size_threshold", 10))
    s_bar = max(1, min(s_bar, n))
    probe = EstimatorConfig(size_threshold=s_bar, grid_samples=1, pair_samples=1)
    per_sample = predicted_evaluations(n, s0, probe) - 2
    if "grid_samples" in method or "pair_samples" in method:
        m1 = int(method.get("grid_samples", 1))
        m2 = int(method.get("pair_samples", m1))
    else:
        m1 = m2 = max(1, (per_group_budget - 2) // max(per_sample, 1))
    cfg = EstimatorConfig(
        size_threshold=s_bar,
        grid_samples=m1,
        pair_samples=m2,
        exhaustive_small_sizes=bool(method.get("exhaustive", False)),
    )
    predicted = predicted_evaluations(n, s0, cfg)
    # Aim for comfortably more than 100 curve checkpoints per group.
    cfg.checkpoint_interval = max(1, predicted // 120)
    return cfg


def _run_cell(config: BenchConfig, partition: Partition, rep: int,
              method_index: int, method: dict):
    """One (replication, method) run; returns one row dict per group."""
    name = method["name"]
    game = game_from_config(config.game_spec)
    rng = _rng_for(config.seed, rep, method_index)
    groups = partition.groups
    rows = []
    if name == "fgsv":
        per_group_budget = config.budget // len(groups)
        for gid, members in enumerate(groups):
            t0 = time.perf_counter_ns()
            est = estimate_group_value(
                game, members,
                fgsv_config_for(game.n, len(members), per_group_budget, method),
                rng=rng,
            )
            elapsed = time.perf_counter_ns() - t0
            rows.append({
                "method": name, "group_id": gid, "rep": rep,
                "evals": est.evaluations_used, "estimate": est.value,
                "curve": est.curve, "wall_time_ns": elapsed,
            })
    else:
        t0 = time.perf_counter_ns()
        est = BASELINE_ESTIMATORS[name](
            game, config.budget, rng,
            groups=groups, checkpoint_interval=config.checkpoint_interval,
        )
        elapsed = time.perf_counter_ns() - t0
        for gid, members in enumerate(groups):
            rows.append({
                "method": name, "group_id": gid, "rep": rep,
                "evals": est.evaluations_used,
                "estimate": group_sum(est, members),
                "curve": est.curves[gid] if est.curves else None,
                "wall_time_ns": elapsed,
            })
    return rows


def _safe_are(estimate: float, truth: float) -> float:
    if truth == 0:
        return math.nan
    return abs((truth - estimate) / truth)


def _safe_aucc(curve, truth: float) -> float:
    if curve is None or len(curve) == 0 or truth == 0:
        return math.nan
    return curve_aucc(curve, truth, num_checkpoints=min(100, len(curve)))


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def run_benchmark(config: BenchConfig, out_dir, threads: int = 1) -> dict:
    """Runs the full grid and writes results.csv and summary.csv in out_dir.

    Rows appear in (replication, method, group) order regardless of the
    thread count; group ids are 1-based in the output.
    """
    os.makedirs(out_dir, exist_ok=True)
    game = game_from_config(config.game_spec)
    partition = partition_from_spec(config.groups_spec, game.n)
    _validate_budgets(config, game.n, len(partition))
    truths, truth_source = compute_truth(config, game, partition)

    cells = [
        (rep, mi, m)
        for rep in range(config.replications)
        for mi, m in enumerate(config.methods)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cell_rows = list(pool.map(
                lambda c: _run_cell(config, partition, *c), cells
            ))
    else:
        cell_rows = [_run_cell(config, partition, *c) for c in cells]

    results_path = os.path.join(out_dir, "results.csv")
    per_method_group: dict[tuple[str, int], dict[str, list[float]]] = {}
    with open(results_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rows in cell_rows:
            for r in rows:
                truth = truths[r["group_id"]]
                err = _safe_are(r["estimate"], truth)
                auc = _safe_aucc(r["curve"], truth)
                writer.writerow([
                    r["method"], game.n, r["group_id"] + 1, r["rep"],
                    r["evals"], _fmt(r["estimate"]), _fmt(truth), truth_source,
                    _fmt(err), _fmt(auc), r["wall_time_ns"],
                ])
                bucket = per_method_group.setdefault(
                    (r["method"], r["group_id"]), {"are": [], "aucc": []}
                )
                bucket["are"].append(err)
                bucket["aucc"].append(auc)
            log.info("replication %d method %-22s done",
                     rows[0]["rep"], rows[0]["method"])

    summary_path = os.path.join(out_dir, "summary.csv")
    summary: dict[str, dict[str, float]] = {}
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for m in config.methods:
            name = m["name"]
            method_ares = []
            for gid in range(len(partition)):
                bucket = per_method_group[(name, gid)]
                ares = np.array(bucket["are"])
                auccs = np.array(bucket["aucc"])
                writer.writerow([
                    name, gid + 1,
                    _fmt(float(np.nanmean(ares))),
                    _fmt(float(np.nanstd(ares, ddof=1)) if len(ares) > 1 else 0.0),
                    _fmt(float(np.nanmean(auccs))),
                    _fmt(float(np.nanstd(auccs, ddof=1)) if len(auccs) > 1 else 0.0),
                ])
                method_ares.extend(bucket["are"])
            summary[name] = {
                "mean_are": float(np.nanmean(method_ares)),
            }
    return {
        "results_csv": results_path,
        "summary_csv": summary_path,
        "truth_source": truth_source,
        "method_mean_are": {k: v["mean_are"] for k, v in summary.items()},
    }


def _validate_budgets(config: BenchConfig, n: int, num_groups: int) -> None:
    minima = {
        "permutation": n + 1,
        "group_testing": 1,
        "complement_contribution": 2,
        "one_for_all": 2 * n + 2,
        "kernelshap": n + 2,
        "unbiased_kernelshap": n + 2,
        "leverageshap": 4,
        "fgsv": 3 * num_groups,
    }
    for m in config.methods:
        need = minima[m["name"]]
        if config.budget < need:
            raise ConfigError(
                f"budget {config.budget} below minimum {need} for {m['name']}"
            )

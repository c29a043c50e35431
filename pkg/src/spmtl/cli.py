"""Configuration-driven experiment runner.

A YAML run config names a dataset (generator or CSV), a list of algorithms,
a splitting protocol, and an optional cross-validation grid. `run` executes
every (repeat, algorithm) cell and writes results.json plus plot-ready CSVs;
`validate` checks a config without running it; `gen` materializes a synthetic
dataset as CSV in the ingestion format.

All randomness flows from the config's root seed through per-(purpose, repeat)
seed children, so a run is reproducible byte-for-byte.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .core import PacingConfig, TaskKind, TauMode
from .data import (
    CsvSchema,
    SplitSpec,
    SynConfig,
    generate_syn1,
    generate_syn2,
    kfold,
    load_csv_dataset,
    split,
)
from .evaluation import (
    Metric,
    aggregate_runs,
    evaluate_model,
    metric_for,
    paired_t_pvalue,
    select_by_cv,
)
from .trainer import (
    AlgorithmSpec,
    Variant,
    fit_baseline_mtl,
    fit_curriculum,
    fit_itl,
    fit_self_paced,
    fit_stl,
)

MTL_ALGORITHMS = {
    "MMTL": (Variant.MMTL, False),
    "spMMTL": (Variant.MMTL, True),
    "MTFL": (Variant.MTFL, False),
    "spMTFL": (Variant.MTFL, True),
    "MTASO": (Variant.MTASO, False),
    "spMTASO": (Variant.MTASO, True),
}
SIMPLE_ALGORITHMS = ("STL", "ITL", "CL")
ALL_ALGORITHMS = SIMPLE_ALGORITHMS + tuple(MTL_ALGORITHMS)
BASELINE_OF = {"spMMTL": "MMTL", "spMTFL": "MTFL", "spMTASO": "MTASO"}

_PACING_KEYS = {
    "gamma", "lambda0", "c", "delta", "epsilon",
    "max_outer_iters", "h", "lambda_max", "feature_eps",
}
_PURPOSE_CODES = {"data": 0, "split": 1, "cv": 2, "theta0": 3}


class ConfigError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _seed_int(root: int, purpose: str, repeat: int) -> int:
    ss = np.random.SeedSequence(entropy=root, spawn_key=(_PURPOSE_CODES[purpose], repeat))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: str
    dataset: dict
    algorithms: tuple
    split: dict
    cv_k: int | None
    cv_grid: dict
    jobs: int = 1


def _validate_algorithm(idx: int, entry, findings: list[str]) -> None:
    prefix = f"algorithms[{idx}]"
    if not isinstance(entry, dict) or "name" not in entry:
        findings.append(f"{prefix}: each algorithm needs a 'name' field")
        return
    name = entry["name"]
    if name not in ALL_ALGORITHMS:
        findings.append(f"{prefix}: unknown algorithm {name!r} (known: {', '.join(ALL_ALGORITHMS)})")
        return
    params = {k: v for k, v in entry.items() if k != "name"}
    known = _PACING_KEYS | {"tau_rule"}
    for key in params:
        if key not in known:
            findings.append(f"{prefix} ({name}): unknown parameter {key!r}")
    c = params.get("c")
    if c is not None and c <= 1:
        findings.append(f"{prefix} ({name}): pacing factor c={c} violates the input constraint c > 1")
    delta = params.get("delta")
    if delta is not None and not 0 < delta < 1:
        findings.append(f"{prefix} ({name}): delta={delta} must lie in (0, 1)")
    gamma = params.get("gamma")
    if gamma is not None and gamma <= 0:
        findings.append(f"{prefix} ({name}): gamma={gamma} must be positive")
    lambda0 = params.get("lambda0")
    if lambda0 is not None and lambda0 <= 0:
        findings.append(f"{prefix} ({name}): lambda0={lambda0} must be positive")
    rule = params.get("tau_rule")
    if rule is not None and rule not in ("hard", "entropy"):
        findings.append(f"{prefix} ({name}): tau_rule must be 'hard' or 'entropy', got {rule!r}")


def validate_config(path) -> tuple[RunConfig | None, list[str]]:
    """Parse and check a run config; returns (config or None, findings)."""
    findings: list[str] = []
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        return None, [f"cannot read config: {exc}"]
    if not isinstance(raw, dict):
        return None, ["config must be a mapping"]

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        findings.append(f"seed must be an integer, got {seed!r}")
        seed = 0
    output_dir = raw.get("output_dir", "results")

    dataset = raw.get("dataset")
    if not isinstance(dataset, dict):
        findings.append("dataset section is required")
        dataset = {}
    else:
        gen = dataset.get("generator")
        csv_path = dataset.get("path")
        if gen is None and csv_path is None:
            findings.append("dataset needs either 'generator: syn1|syn2' or a csv 'path'")
        if gen is not None and gen not in ("syn1", "syn2"):
            findings.append(f"unknown generator {gen!r} (expected syn1 or syn2)")
        if csv_path is not None:
            if not Path(csv_path).is_file():
                findings.append(f"dataset file not found: {csv_path}")
            schema = dataset.get("schema")
            if not isinstance(schema, dict) or not {"task_column", "target_column"} <= set(schema):
                findings.append("csv dataset needs schema.task_column and schema.target_column")
            elif schema.get("kind", "regression") not in ("regression", "binary_classification"):
                findings.append(f"schema.kind must be regression or binary_classification")

    algorithms = raw.get("algorithms")
    if not isinstance(algorithms, list) or not algorithms:
        findings.append("at least one algorithm is required")
        algorithms = []
    for i, entry in enumerate(algorithms):
        _validate_algorithm(i, entry, findings)

    split_cfg = raw.get("split")
    if not isinstance(split_cfg, dict):
        findings.append("split section is required")
        split_cfg = {}
    else:
        has_frac = split_cfg.get("train_fraction") is not None
        has_count = split_cfg.get("train_count") is not None
        if has_frac == has_count:
            findings.append("split needs exactly one of train_fraction / train_count")
        n_repeats = split_cfg.get("n_repeats", 1)
        if not isinstance(n_repeats, int) or n_repeats < 1:
            findings.append(f"split.n_repeats must be a positive integer, got {n_repeats!r}")

    cv = raw.get("cv")
    cv_k, cv_grid = None, {}
    if cv is not None:
        if not isinstance(cv, dict):
            findings.append("cv section must be a mapping")
        else:
            cv_k = cv.get("k", 3)
            if not isinstance(cv_k, int) or cv_k < 2:
                findings.append(f"cv.k must be an integer >= 2, got {cv_k!r}")
            cv_grid = cv.get("grid", {})
            if not isinstance(cv_grid, dict) or not all(
                isinstance(v, list) and v for v in cv_grid.values()
            ):
                findings.append("cv.grid must map parameter names to non-empty lists")
                cv_grid = {}

    # MTASO needs a subspace dimension from somewhere
    for i, entry in enumerate(algorithms):
        if isinstance(entry, dict) and str(entry.get("name", "")).endswith("MTASO"):
            if entry.get("h") is None and "h" not in cv_grid:
                findings.append(
                    f"algorithms[{i}] ({entry.get('name')}): needs 'h' (directly or in cv.grid)"
                )

    if findings:
        return None, findings
    config = RunConfig(
        seed=seed,
        output_dir=str(output_dir),
        dataset=dataset,
        algorithms=tuple(
            (entry["name"], {k: v for k, v in entry.items() if k != "name"})
            for entry in algorithms
        ),
        split=split_cfg,
        cv_k=cv_k,
        cv_grid=cv_grid,
    )
    return config, []


def _schema_from(raw: dict) -> CsvSchema:
    return CsvSchema(
        task_column=raw["task_column"],
        target_column=raw["target_column"],
        kind=TaskKind(raw.get("kind", "regression")),
        categorical_columns=tuple(raw.get("categorical_columns", ())),
        add_bias=bool(raw.get("add_bias", False)),
    )


def _syn_config(dataset: dict, seed: int) -> SynConfig:
    keys = ("n_tasks", "n_per_task", "d", "n_groups", "sigma_easy", "sigma_hard", "hard_fraction")
    overrides = {k: dataset[k] for k in keys if k in dataset}
    if dataset["generator"] == "syn1":
        return SynConfig.syn1(seed=seed, **overrides)
    if "d" not in overrides:
        overrides["d"] = dataset.get("n_tasks", 30)
    return SynConfig.syn2(seed=seed, **overrides)


def _dataset_for_repeat(config: RunConfig, repeat: int):
    ds = config.dataset
    if ds.get("generator"):
        seed = _seed_int(config.seed, "data", repeat)
        cfg = _syn_config(ds, seed)
        return generate_syn1(cfg) if ds["generator"] == "syn1" else generate_syn2(cfg)
    return load_csv_dataset(ds["path"], _schema_from(ds["schema"]))


def _relevant_keys(name: str) -> set[str]:
    if name in SIMPLE_ALGORITHMS:
        return {"gamma"}
    keys = {"gamma", "epsilon", "max_outer_iters", "feature_eps"}
    if name.endswith("MTASO"):
        keys.add("h")
    if name in BASELINE_OF:  # self-paced family
        keys |= {"lambda0", "c", "delta", "tau_rule", "lambda_max"}
    return keys


def _build_spec(name: str, params: dict, seed: int) -> AlgorithmSpec:
    variant, self_paced = MTL_ALGORITHMS[name]
    pacing_kwargs = {
        k: v for k, v in params.items() if k in _PACING_KEYS and k != "gamma" and v is not None
    }
    pacing = PacingConfig(gamma=float(params.get("gamma", 1.0)), **pacing_kwargs)
    tau_rule = TauMode(params.get("tau_rule", "entropy"))
    return AlgorithmSpec(
        variant=variant, self_paced=self_paced, pacing=pacing, tau_rule=tau_rule, seed=seed
    )


def _fit_named(name: str, train, params: dict, seed: int):
    """Fit one named algorithm; returns (model, report-or-None)."""
    gamma = float(params.get("gamma", 1.0))
    if name == "STL":
        return fit_stl(train, gamma), None
    if name == "ITL":
        return fit_itl(train, gamma), None
    if name == "CL":
        return fit_curriculum(train, gamma).W, None
    spec = _build_spec(name, params, seed)
    report = fit_self_paced(train, spec) if spec.self_paced else fit_baseline_mtl(train, spec)
    return report.W, report


def _select_params(name, base_params, config: RunConfig, train, repeat: int) -> dict:
    if config.cv_k is None:
        return base_params
    relevant = {k: v for k, v in config.cv_grid.items() if k in _relevant_keys(name)}
    if not relevant:
        return base_params
    cv_seed = _seed_int(config.seed, "cv", repeat)
    folds = kfold(train, config.cv_k, cv_seed)
    metric = metric_for(train)
    theta_seed = _seed_int(config.seed, "theta0", repeat)
    candidates = []
    for combo in itertools.product(*relevant.values()):
        params = {**base_params, **dict(zip(relevant.keys(), combo))}
        label = tuple(zip(relevant.keys(), combo))
        candidates.append(
            (label, lambda tr, p=params: _fit_named(name, tr, p, theta_seed)[0])
        )
    best = select_by_cv(candidates, folds, metric)
    return {**base_params, **dict(best)}


def _run_repeat(config: RunConfig, repeat: int) -> dict:
    data = _dataset_for_repeat(config, repeat)
    split_spec = SplitSpec(
        seed=_seed_int(config.seed, "split", repeat),
        train_fraction=config.split.get("train_fraction"),
        train_count=config.split.get("train_count"),
        stratified=bool(config.split.get("stratified", False)),
        n_repeats=1,
    )
    train, test = split(data, split_spec)[0]
    metric = metric_for(test)
    theta_seed = _seed_int(config.seed, "theta0", repeat)

    result = {
        "task_ids": list(test.task_ids),
        "metric": metric.value,
        "metrics": {},
        "selected_params": {},
        "trajectories": {},
        "lambda_schedules": {},
    }
    for name, params in config.algorithms:
        chosen = _select_params(name, params, config, train, repeat)
        model, report = _fit_named(name, train, chosen, theta_seed)
        result["metrics"][name] = [float(v) for v in evaluate_model(model, test, metric)]
        result["selected_params"][name] = {
            k: v for k, v in chosen.items() if k in _PACING_KEYS | {"tau_rule"}
        }
        if report is not None and name in BASELINE_OF:
            rows = []
            for rec in report.tau_history:
                for i, task_id in enumerate(train.task_ids):
                    rows.append(
                        (rec.iteration, rec.lam, task_id, float(rec.tau[i]), float(rec.scores[i]))
                    )
            result["trajectories"][name] = rows
            result["lambda_schedules"][name] = [float(rec.lam) for rec in report.tau_history]
    return result


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _write_outputs(config: RunConfig, results: list[dict], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [name for name, _ in config.algorithms]
    metric = results[0]["metric"]
    task_ids = results[0]["task_ids"]

    lines = ["run,task_id,algorithm,metric_value"]
    for r, res in enumerate(results):
        for name in names:
            for task_id, value in zip(res["task_ids"], res["metrics"][name]):
                lines.append(f"{r},{task_id},{name},{_fmt(value)}")
    _write_lines(out_dir / "per_task_errors.csv", lines)

    self_paced_names = [n for n in names if n in BASELINE_OF]
    for j, name in enumerate(self_paced_names):
        lines = ["run,iteration,lambda,task_id,tau,score"]
        for r, res in enumerate(results):
            for iteration, lam, task_id, tau, score in res["trajectories"].get(name, ()):
                lines.append(
                    f"{r},{iteration},{_fmt(lam)},{task_id},{_fmt(tau)},{_fmt(score)}"
                )
        fname = "tau_trajectory.csv" if j == 0 else f"tau_trajectory_{name}.csv"
        _write_lines(out_dir / fname, lines)

    summary = {
        "metric": metric,
        "n_runs": len(results),
        "seed": config.seed,
        "task_ids": task_ids,
        "algorithms": {},
    }
    metric_enum = Metric(metric)
    run_means = {}
    for name in names:
        per_run = [np.array(res["metrics"][name]) for res in results]
        agg = aggregate_runs(per_run, metric_enum)
        run_means[name] = [float(v.mean()) for v in per_run]
        entry = {
            "mean": agg.mean,
            "std_error": agg.std_error,
            "per_task": [float(v) for v in agg.per_task_metric],
            "run_means": run_means[name],
            "selected_params": [res["selected_params"][name] for res in results],
        }
        if name in BASELINE_OF:
            entry["lambda_schedule"] = [res["lambda_schedules"].get(name, []) for res in results]
            base = BASELINE_OF[name]
            if base in names and len(results) > 1:
                entry["baseline"] = base
                entry["paired_t_p_value"] = paired_t_pvalue(run_means[name], run_means[base])
        summary["algorithms"][name] = entry
    with open(out_dir / "results.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(config: RunConfig) -> int:
    n_repeats = int(config.split.get("n_repeats", 1))
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_repeat, [config] * n_repeats, range(n_repeats)))
    else:
        results = [_run_repeat(config, r) for r in range(n_repeats)]
    _write_outputs(config, results, Path(config.output_dir))
    return 0


def _write_dataset_csv(data, path: Path) -> None:
    d = data.d
    lines = ["task,target," + ",".join(f"x{j + 1}" for j in range(d))]
    for task in data:
        for i in range(task.n_examples):
            feats = ",".join(_fmt(v) for v in task.X[i])
            lines.append(f"{task.task_id},{_fmt(task.y[i])},{feats}")
    _write_lines(path, lines)


def gen(args) -> int:
    overrides = {}
    for key in ("n_tasks", "n_per_task", "d"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.generator == "syn1":
        cfg = SynConfig.syn1(seed=args.seed, **overrides)
        data = generate_syn1(cfg)
    else:
        if "d" not in overrides and "n_tasks" in overrides:
            overrides["d"] = overrides["n_tasks"]
        cfg = SynConfig.syn2(seed=args.seed, **overrides)
        data = generate_syn2(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_dataset_csv(data, out)
    print(f"wrote {data.n_tasks} tasks x {data.tasks[0].n_examples} examples to {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spmtl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="override the config output_dir")

    p_val = sub.add_parser("validate", help="check a run config without executing it")
    p_val.add_argument("config")

    p_gen = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    p_gen.add_argument("generator", choices=["syn1", "syn2"])
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n-tasks", dest="n_tasks", type=int, default=None)
    p_gen.add_argument("--n-per-task", dest="n_per_task", type=int, default=None)
    p_gen.add_argument("--d", dest="d", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return gen(args)
        config, findings = validate_config(args.config)
        if args.command == "validate":
            if findings:
                for f in findings:
                    print(f"invalid: {f}")
                return 1
            print("ok")
            return 0
        if findings:
            raise ConfigError("; ".join(findings))
        if args.seed is not None:
            config = RunConfig(**{**config.__dict__, "seed": args.seed})
        if args.out is not None:
            config = RunConfig(**{**config.__dict__, "output_dir": args.out})
        if args.jobs and args.jobs > 1:
            config = RunConfig(**{**config.__dict__, "jobs": args.jobs})
        return run(config)
    except Exception as exc:  # noqa: BLE001 - single-line diagnostic contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

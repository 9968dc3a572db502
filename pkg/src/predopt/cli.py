"""Experiment runner: dataset generation, training, evaluation, reporting.

One JSON config file drives everything; sections mirror the modules
(datagen, training) plus run-level keys (seeds, output_dir). Command-line
flags override file values. Every run writes a manifest.json referencing
each emitted file, and rerunning with the same config reproduces the
result CSVs byte for byte in single-process mode.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, datagen, mlp, penalty, training
from .problems import Family, problem_from_json, problem_to_json

OUTPUT_ROOT_ENV = "PREDOPT_OUTPUT_ROOT"


def _resolve_output(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    # a manifest is a valid config: unwrap its snapshot
    if "config" in cfg and "toolkit_version" in cfg:
        cfg = cfg["config"]
    return cfg


def _gen_config(section: dict) -> datagen.GenConfig:
    known = {f.name for f in dataclasses.fields(datagen.GenConfig)}
    unknown = set(section) - known
    if unknown:
        raise SystemExit(f"config error: unknown datagen field(s) {sorted(unknown)}")
    if "family" in section:
        try:
            section = {**section, "family": Family(section["family"])}
        except ValueError:
            raise SystemExit(
                f"config error: datagen.family must be one of "
                f"{[f.value for f in Family]}, got {section['family']!r}"
            ) from None
    if "ratio_pair" in section:
        section = {**section, "ratio_pair": tuple(section["ratio_pair"])}
    if "split" in section:
        section = {**section, "split": tuple(section["split"])}
    return datagen.GenConfig(**section)


def _train_config(section: dict, seed: int) -> training.TrainConfig:
    known = {f.name for f in dataclasses.fields(training.TrainConfig)}
    payload = {k: v for k, v in section.items() if k in known}
    extra = set(section) - known - {"k_grid"}
    if extra:
        raise SystemExit(f"config error: unknown training field(s) {sorted(extra)}")
    if "hidden" in payload:
        payload["hidden"] = tuple(payload["hidden"])
    payload["seed"] = seed
    try:
        return training.TrainConfig(**payload)
    except ValueError as exc:
        raise SystemExit(f"config error: {exc}") from None


def _build_problem_and_dataset(cfg: dict, seed: int):
    if cfg.get("dataset_path") and cfg.get("problem_path"):
        dataset = datagen.load_csv_dataset(cfg["dataset_path"])
        problem = problem_from_json(cfg["problem_path"])
        return problem, dataset
    gcfg = _gen_config({**cfg.get("datagen", {}), "seed": seed})
    if gcfg.family is Family.ASYMMETRIC:
        problem, dataset = datagen.gen_resource_provisioning(gcfg)
    elif gcfg.family is Family.QUADRATIC:
        dataset = datagen.gen_prediction_dataset(gcfg)
        problem = datagen.gen_portfolio_problem(gcfg, dataset)
    else:
        dataset = datagen.gen_prediction_dataset(gcfg)
        problem = datagen.gen_lp_problem(gcfg)
    return problem, dataset


def _write_manifest(out: Path, config: dict, seeds, outputs: dict, timings: dict):
    manifest = {
        "toolkit_version": __version__,
        "config": config,
        "seeds": list(seeds),
        "outputs": outputs,
        "timings": timings,
    }
    path = out / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# datagen


def cmd_datagen(args) -> int:
    config = _load_config(args.config)
    out = _resolve_output(args.output or config.get("output_dir", "out-datagen"))
    t0 = time.perf_counter()
    seed = int(config.get("datagen", {}).get("seed", 0))
    problem, dataset = _build_problem_and_dataset(config, seed)
    dataset_path = out / "dataset.csv"
    problem_path = out / "problem.json"
    datagen.save_csv_dataset(dataset, dataset_path)
    problem_to_json(problem, problem_path)
    _write_manifest(
        out,
        config,
        [seed],
        {"dataset": str(dataset_path), "problem": str(problem_path)},
        {"datagen_seconds": time.perf_counter() - t0},
    )
    print(f"wrote {dataset_path} ({dataset.size} rows) and {problem_path}")
    return 0


# ---------------------------------------------------------------------------
# train / eval


def _run_one_seed(config: dict, seed: int) -> dict:
    t0 = time.perf_counter()
    problem, dataset = _build_problem_and_dataset(config, seed)
    tsec = config.get("training", {})
    k_grid = tsec.get("k_grid")
    cfg = _train_config(tsec, seed)
    if cfg.method == "surrogate" and k_grid:
        best = None
        for K in k_grid:
            model_k, history_k = training.train_surrogate(
                dataset, problem, dataclasses.replace(cfg, K=float(K))
            )
            valid_regret = min((h["valid_regret"] for h in history_k), default=np.inf)
            if best is None or valid_regret < best[0]:
                best = (valid_regret, float(K), model_k, history_k)
        _, chosen_k, model, history = best
    else:
        chosen_k = cfg.K
        if cfg.method == "surrogate":
            model, history = training.train_surrogate(dataset, problem, cfg)
        elif cfg.method == "spo_plus":
            model, history = training.train_spo_plus(dataset, problem, cfg)
        else:
            model, history = training.train_two_stage(dataset, problem, cfg)
    epochs_run = history[-1]["epoch"] if history else 0
    report = training.evaluate(model, dataset, "test", problem, cfg, epochs_run=epochs_run)
    return {
        "seed": seed,
        "method": cfg.method,
        "K": chosen_k,
        "report": report,
        "history": history,
        "model": model,
        "seconds": time.perf_counter() - t0,
    }


def cmd_train(args) -> int:
    config = _load_config(args.config)
    if args.method:
        config.setdefault("training", {})["method"] = args.method
    if args.epochs is not None:
        config.setdefault("training", {})["epochs"] = args.epochs
    if args.K is not None:
        config.setdefault("training", {})["K"] = args.K
    seeds = args.seeds or config.get("seeds", [0])
    out = _resolve_output(args.output or config.get("output_dir", "out-train"))

    results: dict[int, dict | Exception] = {}
    t0 = time.perf_counter()
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {pool.submit(_run_one_seed, config, s): s for s in seeds}
            for fut, s in futures.items():
                try:
                    results[s] = fut.result()
                except Exception as exc:  # noqa: BLE001 - per-seed isolation
                    results[s] = exc
    else:
        for s in seeds:
            try:
                results[s] = _run_one_seed(config, s)
            except Exception as exc:  # noqa: BLE001
                results[s] = exc

    outputs: dict[str, object] = {}
    per_seed_rows = []
    ok_reports = []
    timings = {}
    for s in seeds:
        res = results[s]
        if isinstance(res, Exception):
            per_seed_rows.append([s, "failed", "", "", "", "", "", repr(res)])
            continue
        rep: training.EvalReport = res["report"]
        hist_path = out / f"history_seed{s}.csv"
        _write_csv(
            hist_path,
            ["epoch", "train_metric", "valid_regret", "valid_mse"],
            [[h["epoch"], repr(h["train_metric"]), repr(h["valid_regret"]), repr(h["valid_mse"])] for h in res["history"]],
        )
        ckpt_path = out / f"checkpoint_seed{s}.json"
        mlp.save_checkpoint(res["model"], ckpt_path)
        report_path = out / f"report_seed{s}.json"
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "seed": s,
                    "method": res["method"],
                    "K": res["K"],
                    "mean_regret": rep.mean_regret,
                    "std_regret": rep.std_regret,
                    "mean_mse": rep.mean_mse,
                    "epochs_run": rep.epochs_run,
                    "max_violation": rep.max_violation,
                    "solver_failures": rep.solver_failures,
                    "regrets": rep.regrets.tolist(),
                },
                fh,
                indent=2,
            )
        outputs[f"seed{s}"] = {
            "history": str(hist_path),
            "checkpoint": str(ckpt_path),
            "report": str(report_path),
        }
        timings[f"seed{s}_seconds"] = res["seconds"]
        per_seed_rows.append(
            [
                s,
                "ok",
                res["method"],
                repr(res["K"]),
                repr(rep.mean_regret),
                repr(rep.mean_mse),
                rep.epochs_run,
                "",
            ]
        )
        ok_reports.append((s, res))

    per_seed_path = out / "per_seed.csv"
    _write_csv(
        per_seed_path,
        ["seed", "status", "method", "K", "mean_regret", "mean_mse", "epochs_run", "error"],
        per_seed_rows,
    )
    outputs["per_seed"] = str(per_seed_path)

    if ok_reports:
        means = np.array([r["report"].mean_regret for _, r in ok_reports])
        mses = np.array([r["report"].mean_mse for _, r in ok_reports])
        epochs = np.array([r["report"].epochs_run for _, r in ok_reports])
        method = ok_reports[0][1]["method"]
        agg_path = out / "aggregate.csv"
        _write_csv(
            agg_path,
            ["method", "seeds", "regret_mean", "regret_std", "mse_mean", "epochs_mean"],
            [
                [
                    method,
                    len(ok_reports),
                    repr(float(np.mean(means))),
                    repr(float(np.std(means))),
                    repr(float(np.mean(mses))),
                    repr(float(np.mean(epochs))),
                ]
            ],
        )
        outputs["aggregate"] = str(agg_path)
        print(
            f"{method}: regret {np.mean(means):.3f}+-{np.std(means):.3f} "
            f"(mse {np.mean(mses):.3f}, {len(ok_reports)}/{len(seeds)} seeds)"
        )

    timings["total_seconds"] = time.perf_counter() - t0
    _write_manifest(out, config, seeds, outputs, timings)

    failed = [s for s in seeds if isinstance(results[s], Exception)]
    if failed:
        print("failed seeds:", file=sys.stderr)
        for s in failed:
            print(f"  seed {s}: {results[s]!r}", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    seed = int(config.get("training", {}).get("seed", config.get("seeds", [0])[0]))
    problem, dataset = _build_problem_and_dataset(config, seed)
    cfg = _train_config(config.get("training", {}), seed)
    model = mlp.load_checkpoint(args.checkpoint)
    report = training.evaluate(model, dataset, args.split, problem, cfg)
    out = _resolve_output(args.output or config.get("output_dir", "out-eval"))
    eval_path = out / f"eval_{args.split}.csv"
    _write_csv(
        eval_path,
        ["sample", "regret", "mse", "violation"],
        [
            [i, repr(float(r)), repr(float(m)), repr(float(v))]
            for i, (r, m, v) in enumerate(zip(report.regrets, report.mses, report.violations))
        ],
    )
    _write_manifest(out, config, [seed], {"eval": str(eval_path)}, {})
    print(
        f"{args.split}: regret {report.mean_regret:.3f}+-{report.std_regret:.3f}, "
        f"mse {report.mean_mse:.4f}, failures {report.solver_failures}"
    )
    return 0


# ---------------------------------------------------------------------------
# report


def _load_seed_reports(run_dir: Path) -> dict:
    rows = {}
    method = None
    for path in sorted(run_dir.glob("report_seed*.json")):
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        rows[int(payload["seed"])] = float(payload["mean_regret"])
        method = payload["method"]
    if not rows:
        raise SystemExit(f"no report_seed*.json files under {run_dir}")
    return {"method": method, "per_seed": rows}


def cmd_report(args) -> int:
    runs = [_load_seed_reports(Path(p)) for p in args.results]
    if len(runs) < 2:
        raise SystemExit("need at least two result directories")
    baseline = next((r for r in runs if r["method"] == "surrogate"), runs[0])
    seed_sets = [set(r["per_seed"]) for r in runs]
    common = set.intersection(*seed_sets)
    if seed_sets[0] != common or any(s != seed_sets[0] for s in seed_sets):
        raise SystemExit("result sets cover different seed lists; refusing to pair them")
    seeds = sorted(common)
    base_vec = np.array([baseline["per_seed"][s] for s in seeds])

    out = _resolve_output(args.output or "out-report")
    rows = []
    print(f"{'method':>14} {'regret':>10} {'t':>8} {'p':>10}")
    for run in runs:
        vec = np.array([run["per_seed"][s] for s in seeds])
        if run is baseline:
            rows.append([run["method"], repr(float(vec.mean())), "", "", ""])
            print(f"{run['method']:>14} {vec.mean():>10.3f} {'-':>8} {'-':>10}")
            continue
        res = training.paired_ttest(vec, base_vec)
        rows.append(
            [run["method"], repr(float(vec.mean())), repr(res.t), repr(res.p), res.degenerate]
        )
        t_str = "degen" if res.degenerate else f"{res.t:.3f}"
        p_str = "degen" if res.degenerate else f"{res.p:.2e}"
        print(f"{run['method']:>14} {vec.mean():>10.3f} {t_str:>8} {p_str:>10}")
    table_path = out / "comparison.csv"
    _write_csv(table_path, ["method", "mean_regret", "t", "p", "degenerate"], rows)
    _write_manifest(
        out, {"results": list(args.results)}, seeds, {"comparison": str(table_path)}, {}
    )
    print(f"wrote {table_path}")
    return 0


# ---------------------------------------------------------------------------
# bounds / lambda-study


def cmd_bounds(args) -> int:
    problem = problem_from_json(args.problem)
    E = args.E if args.E is not None else penalty.gradient_norm_bound(problem)
    sin_p = penalty.min_hyperplane_angle(problem.A, problem.B)
    print(f"E (gradient bound): {E:.6g}")
    print(f"sin p (min axis angle): {sin_p:.6g}")
    print(f"inequality-only bound: {penalty.bound_inequality_only(E):.6g}")
    if sin_p > 0:
        print(f"nonneg-aware bound:    {penalty.bound_with_nonneg(E, problem.n, sin_p):.6g}")
    else:
        print("nonneg-aware bound:    degenerate (axis-parallel constraint row)")
    print(f"binary-matrix bound:   {penalty.bound_binary(E, problem.n):.6g}")
    if args.lambda_max:
        print(
            f"general bound:         {penalty.bound_general(E, problem.n, args.lambda_max):.6g}"
        )
    try:
        print(f"recommended beta:      {penalty.recommended_beta(problem, E):.6g}")
    except ValueError as exc:
        print(f"recommended beta:      unavailable ({exc})")
    print(f"empirical beta (k=10): {penalty.empirical_beta(problem, E):.6g}")
    return 0


def cmd_lambda_study(args) -> int:
    ns = list(range(args.n_start, args.n_stop + 1, args.n_step))
    out = _resolve_output(args.output or "out-lambda")
    rows = []
    samples = []
    for n in ns:
        result = penalty.estimate_lambda_max(
            n, distribution=args.distribution, trials=args.trials, rng_seed=args.seed
        )
        rows.append(
            [n, args.distribution, args.trials, repr(result.mean), repr(result.max)]
        )
        samples.append((n, result.max))
        print(f"n={n}: mean {result.mean:.3f}, max {result.max:.3f}")
    csv_path = out / "lambda_study.csv"
    _write_csv(csv_path, ["n", "distribution", "trials", "mean_lambda", "max_lambda"], rows)
    a2, a1, a0, r2 = penalty.fit_lambda_curve(samples)
    fit_path = out / "lambda_fit.json"
    with open(fit_path, "w", encoding="utf-8") as fh:
        json.dump({"a2": a2, "a1": a1, "a0": a0, "r_squared": r2}, fh, indent=2)
    arg_snapshot = {k: v for k, v in vars(args).items() if k != "func"}
    _write_manifest(
        out,
        {"lambda_study": arg_snapshot},
        [args.seed],
        {"samples": str(csv_path), "fit": str(fit_path)},
        {},
    )
    print(f"quadratic fit: {a2:.4f} n^2 + {a1:.3f} n + {a0:.3f} (r^2 {r2:.4f})")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="predopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate dataset + problem files")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train and evaluate over a seed list")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--method", choices=training.METHODS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--K", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="compare runs with paired t-tests")
    p.add_argument("results", nargs="+")
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bounds", help="penalty-multiplier bounds for a problem file")
    p.add_argument("problem")
    p.add_argument("--E", type=float)
    p.add_argument("--lambda-max", dest="lambda_max", type=float)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("lambda-study", help="Monte-Carlo eigenvalue study")
    p.add_argument("--n-start", type=int, default=10)
    p.add_argument("--n-stop", type=int, default=100)
    p.add_argument("--n-step", type=int, default=10)
    p.add_argument("--distribution", default="uniform01", choices=["uniform01", "absnormal", "beta22"])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_lambda_study)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

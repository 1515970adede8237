"""Command-line interface.

Every subcommand exits 0 on success. Failures print one JSON object
``{"error": <kind>, "message": <text>}`` on stderr and exit nonzero
(2 for usage and configuration problems, 1 otherwise). Outputs go to
``--output-dir``, defaulting to ``$RANKTRANSFER_OUTPUT_DIR`` or
``./ranktransfer_output``.
"""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (CalibrationError, DatasetFormatError, generate_scenario, load_dataset_csv,
                   write_dataset_csv)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    coverage_study,
    default_output_dir,
    emit_plots,
    run_inference,
    run_scenario,
    run_splitting_eval,
)
from .transfer import ALL_METHODS, Method, SolverConfig, estimate

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--step-eps", type=float)
    g.add_argument("--sigma", help="bandwidth: a number, 'per_cohort' or 'pooled'")
    g.add_argument("--lambda-mode", choices=["bic", "theory"])
    g.add_argument("--lambda-const", type=float)
    g.add_argument("--bic-scale", type=float)
    g.add_argument("--lambda-min-ratio", type=float)
    g.add_argument("--max-steps", type=int)


def _solver_overrides(args):
    sigma = args.sigma
    if sigma is not None and sigma not in ("per_cohort", "pooled"):
        try:
            sigma = float(sigma)
        except ValueError:
            raise UsageError(f"--sigma must be a number, 'per_cohort' or 'pooled', got {sigma!r}")
    out = {"step_eps": args.step_eps, "sigma": sigma, "lambda_mode": args.lambda_mode,
           "lambda_const": args.lambda_const, "bic_scale": args.bic_scale,
           "lambda_min_ratio": args.lambda_min_ratio, "max_steps": args.max_steps}
    return {k: v for k, v in out.items() if v is not None}


def _solver_config(args):
    return SolverConfig(**_solver_overrides(args))


def _out_dir(args):
    return Path(args.output_dir) if args.output_dir else default_output_dir()


def _method_list(text):
    try:
        return [Method(m.strip()).value for m in text.split(",") if m.strip()]
    except ValueError as exc:
        raise UsageError(str(exc))


def _index_list(text):
    if text is None:
        return None
    try:
        return tuple(int(k) for k in text.split(",") if k.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated source indices, got {text!r}")


def build_parser():
    parser = _Parser(prog="ranktransfer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    all_methods = ",".join(m.value for m in ALL_METHODS)

    p = sub.add_parser("simulate", help="replicated simulation of a scenario")
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--scenario", help="preset name (S1-S7, S7-3/S7-6/S7-9)")
    p.add_argument("--methods", help=f"comma-separated subset of {all_methods}")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int, dest="base_seed")
    p.add_argument("--n-test", type=int)
    p.add_argument("--detection-folds", type=int)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--dump-data", type=int, metavar="SEED",
                   help="only write the cohorts of one replication as CSV files")
    _solver_args(p)

    p = sub.add_parser("detect", help="screen source cohorts for transferability")
    p.add_argument("--target", required=True)
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir")
    _solver_args(p)

    p = sub.add_parser("fit", help="fit one estimator on cohort files")
    p.add_argument("--target", required=True)
    p.add_argument("--sources", nargs="*", default=[])
    p.add_argument("--method", default="AutoTrans")
    p.add_argument("--oracle-set", help="comma-separated 0-based source indices")
    p.add_argument("--detection-folds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir")
    _solver_args(p)

    p = sub.add_parser("infer", help="desparsified confidence intervals")
    p.add_argument("--target", help="target cohort CSV (omit with --coverage)")
    p.add_argument("--sources", nargs="*", default=[])
    p.add_argument("--method", default="TargetOnly", help="estimator supplying beta_hat")
    p.add_argument("--oracle-set")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma", default="rate", help="number, 'rate' or 'cv'")
    p.add_argument("--geometry", choices=["sphere", "euclidean"], default="sphere")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coverage", action="store_true", help="run a simulated coverage study")
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--n0", type=int, default=300)
    p.add_argument("--replications", type=int, default=200)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--output-dir")
    _solver_args(p)

    p = sub.add_parser("eval-split", help="repeated random-split evaluation on cohort files")
    p.add_argument("--target", required=True)
    p.add_argument("--sources", nargs="*", default=[])
    p.add_argument("--methods", default="TargetOnly,NaivePooled,AutoTrans")
    p.add_argument("--split-fraction", type=float, default=0.2)
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detection-folds", type=int, default=3)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--output-dir")
    _solver_args(p)

    p = sub.add_parser("plot", help="boxplots from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--metrics", default="f1,c_index,rmse_normalized")
    p.add_argument("--output-dir")
    return parser


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def cmd_simulate(args):
    base = ExperimentConfig.from_json(args.config).to_dict() if args.config else {}
    if args.scenario is not None:
        base["scenario"] = args.scenario
    for key in ("replications", "base_seed", "n_test", "detection_folds", "n_jobs",
                "output_dir"):
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    if args.methods is not None:
        base["methods"] = _method_list(args.methods)
    solver = dict(base.get("solver", {}))
    solver.update(_solver_overrides(args))
    base["solver"] = solver
    config = ExperimentConfig.from_dict(base)
    out = config.resolved_output_dir()
    if args.dump_data is not None:
        sd = generate_scenario(config.spec(), args.dump_data)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"target": out / "target.csv", "test": out / "test.csv"}
        write_dataset_csv(sd.target, paths["target"])
        write_dataset_csv(sd.test, paths["test"])
        for k, src in enumerate(sd.sources):
            paths[f"source{k + 1}"] = out / f"source{k + 1}.csv"
            write_dataset_csv(src, paths[f"source{k + 1}"])
        np.savetxt(out / "beta0.csv", sd.beta0, delimiter=",", fmt="%r")
        _print_json({"written": {k: str(v) for k, v in paths.items()},
                     "informative_set": list(sd.informative_set)})
        return
    records, summary = run_scenario(config)
    means = {}
    for row in summary:
        if row["metric"] in ("c_index", "rmse_normalized", "f1"):
            means.setdefault(row["method"], {})[row["metric"]] = round(row["mean"], 4)
    _print_json({"scenario": config.spec().name, "rows": len(records),
                 "results": str(out / "results.csv"), "summary_means": means})


def _load_sources(paths):
    return [load_dataset_csv(p, label=Path(p).stem) for p in paths]


def cmd_detect(args):
    from .detection import detect

    target = load_dataset_csv(args.target, label="target")
    sources = _load_sources(args.sources)
    report = detect(target, sources, folds=args.folds, seed=args.seed,
                    config=_solver_config(args))
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "detection.csv")
    print(report.format_table())


def cmd_fit(args):
    target = load_dataset_csv(args.target, label="target")
    sources = _load_sources(args.sources)
    fit = estimate(args.method, target, sources, oracle_set=_index_list(args.oracle_set),
                   config=_solver_config(args), detection_folds=args.detection_folds,
                   detection_seed=args.seed)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "coefficients.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["coordinate", "coefficient", "normalized"])
        for j, (b, bn) in enumerate(zip(fit.beta_hat, fit.beta_normalized)):
            writer.writerow([j, repr(float(b)), repr(float(bn))])
    if fit.detection is not None:
        fit.detection.to_csv(out / "detection.csv")
    _print_json({"method": fit.method.value, "support": list(fit.support),
                 "source_set": list(fit.source_set), "coefficients": str(path)})


def _gamma_arg(text):
    if text in ("rate", "cv"):
        return text
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--gamma must be a number, 'rate' or 'cv', got {text!r}")


def cmd_infer(args):
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    gamma = _gamma_arg(args.gamma)
    if args.coverage:
        res = coverage_study(p=args.p, n0=args.n0, replications=args.replications,
                             alpha=args.alpha, base_seed=args.seed, gamma=gamma,
                             geometry=args.geometry, config=_solver_config(args),
                             n_jobs=args.n_jobs)
        path = out / "coverage.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["coordinate", "truth", "coverage"])
            for j, (b, c) in enumerate(zip(res["beta0"], res["coverage"])):
                writer.writerow([j, repr(float(b)), repr(float(c))])
        _print_json({"coverage_signal": res["coverage_signal"],
                     "coverage_noise": res["coverage_noise"], "coverage_csv": str(path)})
        return
    if args.target is None:
        raise UsageError("infer needs --target unless --coverage is given")
    path = out / "intervals.csv"
    res = run_inference(args.target, alpha=args.alpha, gamma=gamma, geometry=args.geometry,
                        sources=args.sources, method=args.method,
                        config=_solver_config(args), oracle_set=_index_list(args.oracle_set),
                        seed=args.seed, output=path)
    _print_json({"gamma": res.precision.gamma, "intervals": str(path),
                 "clamped": int(res.clamped.sum())})


def cmd_eval_split(args):
    out = _out_dir(args)
    records, summary = run_splitting_eval(
        args.target, args.sources, split_fraction=args.split_fraction,
        repetitions=args.repetitions, seed=args.seed, methods=_method_list(args.methods),
        config=_solver_config(args), detection_folds=args.detection_folds, output_dir=out,
        n_jobs=args.n_jobs)
    means = {}
    for row in summary:
        means.setdefault(row["method"], {})[row["metric"]] = round(row["mean"], 4)
    _print_json({"rows": len(records), "results": str(out / "results.csv"),
                 "summary_means": means})


def cmd_plot(args):
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    paths = emit_plots(args.results, _out_dir(args), metrics=metrics)
    _print_json({"plots": [str(p) for p in paths]})


_COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "fit": cmd_fit,
             "infer": cmd_infer, "eval-split": cmd_eval_split, "plot": cmd_plot}


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except (ConfigError, DatasetFormatError) as exc:
        return _fail(type(exc).__name__, exc, 2)
    except FileNotFoundError as exc:
        return _fail("FileNotFoundError", exc, 2)
    except (ValueError, CalibrationError, RuntimeError, OSError) as exc:
        return _fail(type(exc).__name__, exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Simulation and evaluation harness: scenario presets, replicated runs,
random-splitting evaluation on cohort files, interval coverage studies and
boxplot emission.

Replication ``r`` of a run uses seed ``base_seed + r`` for all of its data,
so any replication can be reproduced in isolation. Results files depend only
on the configuration; wall-clock timings go to a ``metadata.json`` sidecar.
"""
import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._validation import unit_normalize
from .data import (
    PerturbationParams,
    ScenarioSpec,
    ar1_covariance,
    calibrate_censoring,
    generate_scenario,
    load_dataset_csv,
    simulate_cohort,
    target_coefficients,
)
from .inference import infer
from .kernels import c_index
from .metrics import EvaluationRecord, detection_recall, f1_score, logrank_statistic, rmse
from .transfer import ALL_METHODS, Method, SolverConfig, estimate_many, fit_penalized

__all__ = [
    "OUTPUT_DIR_ENV",
    "RESULT_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "SCENARIOS",
    "resolve_scenario",
    "default_output_dir",
    "run_replication",
    "run_scenario",
    "run_splitting_eval",
    "run_inference",
    "coverage_study",
    "summarize",
    "read_results",
    "emit_plots",
]

OUTPUT_DIR_ENV = "RANKTRANSFER_OUTPUT_DIR"

RESULT_COLUMNS = ("scenario", "method", "replication", "f1", "rmse_raw", "rmse_normalized",
                  "c_index", "logrank", "recall", "seconds")
METRIC_COLUMNS = ("f1", "rmse_raw", "rmse_normalized", "c_index", "logrank", "recall")
DEFAULT_PLOT_METRICS = ("f1", "c_index", "rmse_normalized")


class ConfigError(ValueError):
    pass


_S1_HELPFUL = PerturbationParams(2, 4, 2, 0.3)
_S1_UNHELPFUL = PerturbationParams(6, 6, 7, 1.0)
_S7_HELPFUL = PerturbationParams(2, 3, 2, 0.3)
_S7_UNHELPFUL = PerturbationParams(7, 7, 9, 1.0)

SCENARIOS = {
    "S1": ScenarioSpec("S1", 100, 200, 200, 2, 1, _S1_HELPFUL, _S1_UNHELPFUL),
    "S2": ScenarioSpec("S2", 100, 200, 200, 2, 1, PerturbationParams(4, 4, 2, 0.4),
                       _S1_UNHELPFUL),
    "S3": ScenarioSpec("S3", 100, 100, 200, 6, 3, _S1_HELPFUL, _S1_UNHELPFUL),
    "S4": ScenarioSpec("S4", 100, 60, 200, 6, 3, _S1_HELPFUL, _S1_UNHELPFUL),
    "S5": ScenarioSpec("S5", 100, 100, 200, 6, 2, _S1_HELPFUL, _S1_UNHELPFUL),
    "S6": ScenarioSpec("S6", 200, 200, 500, 6, 3, PerturbationParams(4, 10, 2, 0.4),
                       PerturbationParams(12, 10, 14, 1.0), support_block=4),
    "S7-3": ScenarioSpec("S7-3", 60, 60, 200, 10, 3, _S7_HELPFUL, _S7_UNHELPFUL),
    "S7-6": ScenarioSpec("S7-6", 60, 60, 200, 10, 6, _S7_HELPFUL, _S7_UNHELPFUL),
    "S7-9": ScenarioSpec("S7-9", 60, 60, 200, 10, 9, _S7_HELPFUL, _S7_UNHELPFUL),
}
SCENARIOS["S7"] = SCENARIOS["S7-3"]


def resolve_scenario(scenario, **overrides):
    """Preset name, ``ScenarioSpec`` or dict -> ``ScenarioSpec`` with field overrides."""
    if isinstance(scenario, ScenarioSpec):
        spec = scenario
    elif isinstance(scenario, str):
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}; presets: {sorted(SCENARIOS)}")
        spec = SCENARIOS[scenario]
    elif isinstance(scenario, dict):
        try:
            spec = ScenarioSpec.from_dict(scenario)
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid inline scenario: {exc}") from exc
    else:
        raise ConfigError(f"cannot interpret scenario {scenario!r}")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        d = spec.to_dict()
        d.update(overrides)
        spec = ScenarioSpec.from_dict(d)
    return spec


def default_output_dir():
    return Path(os.environ.get(OUTPUT_DIR_ENV, "ranktransfer_output"))


@dataclass
class ExperimentConfig:
    """Settings of a replicated simulation run (JSON-serializable).

    ``scenario`` is a preset name or an inline scenario dict. ``solver``
    holds :class:`SolverConfig` overrides (``step_eps``, ``sigma``,
    ``lambda_mode``, ``lambda_const``, ``bic_scale``, ``lambda_min_ratio``,
    ``max_steps``).
    """

    scenario: object = "S1"
    methods: list = field(default_factory=lambda: [m.value for m in ALL_METHODS])
    replications: int = 100
    base_seed: int = 0
    n_test: int = None
    output_dir: str = None
    solver: dict = field(default_factory=dict)
    detection_folds: int = 3
    n_jobs: int = 1

    def __post_init__(self):
        if int(self.replications) < 1:
            raise ConfigError("replications must be at least 1")
        if self.detection_folds < 2:
            raise ConfigError("detection_folds must be at least 2")
        try:
            self.methods = [Method(m).value for m in self.methods]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            self.solver_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid solver settings: {exc}") from exc

    def spec(self):
        return resolve_scenario(self.scenario, n_test=self.n_test)

    def solver_config(self):
        return SolverConfig(**self.solver)

    def resolved_output_dir(self):
        return Path(self.output_dir) if self.output_dir else default_output_dir()

    def to_dict(self):
        d = asdict(self)
        if isinstance(self.scenario, ScenarioSpec):
            d["scenario"] = self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


# -- one replication ---------------------------------------------------------

def _risk_logrank(beta, test):
    # scores are survival-oriented, so risk is their negation
    return logrank_statistic(test, -(test.X @ beta))


def _safe_c_index(beta, data):
    return c_index(beta, data) if np.any(beta) else 0.0


def run_replication(spec, methods, seed, config=None, detection_folds=3):
    """Simulate one replication and evaluate each method.

    Returns
    -------
    list of EvaluationRecord
        ``seconds`` holds the per-method fitting time.
    """
    import warnings

    from .metrics import DegenerateGroupWarning

    config = config or SolverConfig()
    methods = [Method(m) for m in methods]
    sd = generate_scenario(spec, seed)
    truth_support = np.flatnonzero(sd.beta0)
    t0 = time.perf_counter()
    fits = estimate_many(methods, sd.target, sd.sources, oracle_set=sd.informative_set,
                         config=config, detection_folds=detection_folds, detection_seed=seed)
    elapsed = (time.perf_counter() - t0) / max(len(methods), 1)
    records = []
    for m in methods:
        fit = fits[m]
        beta = fit.beta_hat
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateGroupWarning)
            lr = _risk_logrank(beta, sd.test)
        recall = float("nan")
        if m.needs_detection and sd.informative_set:
            recall = detection_recall(fit.source_set, sd.informative_set)
        records.append(EvaluationRecord(
            scenario=spec.name, method=m.value, replication=int(seed),
            f1=f1_score(fit.support, truth_support),
            rmse_raw=rmse(beta, sd.beta0),
            rmse_normalized=rmse(unit_normalize(beta), sd.beta0),
            c_index=_safe_c_index(beta, sd.test), logrank=lr, recall=recall,
            seconds=elapsed,
        ))
    return records


# -- persistence -------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _write_results(records, path, include_seconds=False):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for rec in records:
            row = rec.as_row()
            if not include_seconds:
                row["seconds"] = ""
            writer.writerow([_fmt(row[c]) if row[c] != "" else "" for c in RESULT_COLUMNS])


def read_results(path):
    """Parse a results CSV into a list of dicts with float metric values."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty results file")
        missing = [c for c in RESULT_COLUMNS[:-1] if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: results CSV lacks columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                parsed = {"scenario": row["scenario"], "method": row["method"],
                          "replication": int(row["replication"])}
                for c in METRIC_COLUMNS:
                    parsed[c] = float(row[c]) if row[c] not in ("", None) else float("nan")
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}, line {lineno}: {exc}") from exc
            rows.append(parsed)
    return rows


def summarize(rows, metrics=METRIC_COLUMNS):
    """Per (scenario, method, metric): count, mean, sd, quartiles over finite values."""
    groups = {}
    for row in rows:
        groups.setdefault((row["scenario"], row["method"]), []).append(row)
    out = []
    for (scen, meth), rs in groups.items():
        for metric in metrics:
            vals = np.array([r[metric] for r in rs], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size == 0:
                continue
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            out.append({"scenario": scen, "method": meth, "metric": metric, "n": vals.size,
                        "mean": float(vals.mean()),
                        "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                        "q1": float(q1), "median": float(med), "q3": float(q3)})
    return out


def _write_summary(summary, path):
    cols = ["scenario", "method", "metric", "n", "mean", "sd", "q1", "median", "q3"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in summary:
            writer.writerow([_fmt(row[c]) for c in cols])


def _prepare_dir(out):
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _write_metadata(out, config_dict, records, started):
    meta = {
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "config": config_dict,
        "seconds": [{"method": r.method, "replication": r.replication, "seconds": r.seconds}
                    for r in records],
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=str)


def _map(func, items, n_jobs):
    if n_jobs == 1 or len(items) <= 1:
        return [func(x) for x in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(func)(x) for x in items)


def run_scenario(config, write=True):
    """Run all replications of ``config``.

    Writes ``results.csv``, ``summary.csv`` and ``metadata.json`` to the
    output directory when ``write`` is true.

    Returns
    -------
    records : list of EvaluationRecord
    summary : list of dict
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    spec = config.spec()
    solver = config.solver_config()
    out = _prepare_dir(config.resolved_output_dir()) if write else None
    started = datetime.now(timezone.utc).isoformat()
    seeds = [config.base_seed + r for r in range(int(config.replications))]
    batches = _map(lambda s: run_replication(spec, config.methods, s, solver,
                                             config.detection_folds),
                   seeds, config.n_jobs)
    records = [rec for batch in batches for rec in batch]
    summary = summarize([r.as_row() for r in records])
    if write:
        _write_results(records, out / "results.csv")
        _write_summary(summary, out / "summary.csv")
        _write_metadata(out, config.to_dict(), records, started)
    return records, summary


# -- random-splitting evaluation on cohort files ----------------------------

def run_splitting_eval(target, sources, split_fraction=0.2, repetitions=100, seed=0,
                       methods=("TargetOnly", "NaivePooled", "AutoTrans"), config=None,
                       detection_folds=3, oracle_set=None, output_dir=None,
                       scenario_name="split", n_jobs=1):
    """Repeated random train/test evaluation on a target cohort.

    Parameters
    ----------
    target : SurvivalDataset or path
    sources : list of SurvivalDataset or paths
    split_fraction : float
        Share of the target held out for testing in each repetition.
    repetitions, seed
        Repetition ``r`` splits with seed ``seed + r``.
    output_dir : path, optional
        If given, ``results.csv``, ``summary.csv`` and ``metadata.json`` are written.

    Returns
    -------
    records, summary
        F1 and RMSE are ``nan`` (no ground truth).
    """
    import warnings

    from .metrics import DegenerateGroupWarning

    if isinstance(target, (str, os.PathLike)):
        target = load_dataset_csv(target, label="target")
    sources = [load_dataset_csv(s, label=f"source{k + 1}") if isinstance(s, (str, os.PathLike))
               else s for k, s in enumerate(sources)]
    if not 0 < split_fraction < 1:
        raise ConfigError("split_fraction must lie in (0, 1)")
    if repetitions < 1:
        raise ConfigError("repetitions must be at least 1")
    methods = [Method(m) for m in methods]
    if any(m.needs_oracle for m in methods) and oracle_set is None:
        raise ConfigError("Oracle methods need an oracle_set")
    config = config or SolverConfig()
    n_test = max(2, int(round(split_fraction * target.n)))
    out = _prepare_dir(output_dir) if output_dir is not None else None
    started = datetime.now(timezone.utc).isoformat()

    def one(r):
        rng = np.random.default_rng(seed + r)
        perm = rng.permutation(target.n)
        test = target.subset(np.sort(perm[:n_test]), label="test")
        train = target.subset(np.sort(perm[n_test:]), label="target")
        t0 = time.perf_counter()
        fits = estimate_many(methods, train, sources, oracle_set=oracle_set, config=config,
                             detection_folds=detection_folds, detection_seed=seed + r)
        elapsed = (time.perf_counter() - t0) / len(methods)
        recs = []
        for m in methods:
            beta = fits[m].beta_hat
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateGroupWarning)
                lr = _risk_logrank(beta, test)
            recs.append(EvaluationRecord(
                scenario=scenario_name, method=m.value, replication=r, f1=float("nan"),
                rmse_raw=float("nan"), rmse_normalized=float("nan"),
                c_index=_safe_c_index(beta, test), logrank=lr, seconds=elapsed))
        return recs

    batches = _map(one, list(range(repetitions)), n_jobs)
    records = [rec for batch in batches for rec in batch]
    summary = summarize([r.as_row() for r in records])
    if out is not None:
        _write_results(records, out / "results.csv")
        _write_summary(summary, out / "summary.csv")
        _write_metadata(out, {"split_fraction": split_fraction, "repetitions": repetitions,
                              "seed": seed, "methods": [m.value for m in methods],
                              "solver": asdict(config)}, records, started)
    return records, summary


# -- inference ---------------------------------------------------------------

def run_inference(target, beta_hat=None, alpha=0.05, gamma="rate", geometry="sphere",
                  sources=(), method="TargetOnly", config=None, oracle_set=None, seed=0,
                  output=None):
    """Interval construction on a target cohort.

    ``beta_hat`` defaults to the estimate of ``method`` fitted on the target
    (and ``sources``). Writes the interval CSV to ``output`` when given.
    """
    if isinstance(target, (str, os.PathLike)):
        target = load_dataset_csv(target, label="target")
    sources = [load_dataset_csv(s) if isinstance(s, (str, os.PathLike)) else s
               for s in sources]
    config = config or SolverConfig()
    if beta_hat is None:
        m = Method(method)
        beta_hat = estimate_many([m], target, sources, oracle_set=oracle_set, config=config,
                                 detection_seed=seed)[m].beta_hat
    res = infer(target, beta_hat, alpha=alpha, gamma=gamma, geometry=geometry, seed=seed)
    if output is not None:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        res.to_csv(output)
    return res


def coverage_study(p=20, n0=300, replications=200, alpha=0.05, base_seed=0, gamma="rate",
                   geometry="sphere", config=None, censoring_rate=0.4, n_jobs=1):
    """Repeated low-dimensional simulation of interval coverage.

    The truth is the unit-norm target coefficient pattern (block length 2,
    or 1 when ``p < 12``). Each replication fits the penalized target-only
    estimate and runs :func:`ranktransfer.inference.infer` on it.

    Returns
    -------
    dict
        ``beta0``, ``covered`` (reps x p booleans), ``z`` (standardized
        errors), ``coverage`` per coordinate and ``coverage_signal`` /
        ``coverage_noise`` averages.
    """
    from scipy import stats

    config = config or SolverConfig()
    beta0 = target_coefficients(p, block=2 if p >= 12 else 1)
    cov = ar1_covariance(p)
    theta = calibrate_censoring(beta0, cov, censoring_rate, seed=base_seed)
    zq = stats.norm.ppf(1 - alpha / 2)

    def one(r):
        d = simulate_cohort(beta0, n0, cov, theta, seed=base_seed + r, label="target")
        bh = fit_penalized([d], config).beta
        res = infer(d, bh, alpha=alpha, gamma=gamma, geometry=geometry, seed=base_seed + r)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (res.beta_tilde - beta0) / (res.half_width / zq)
        return res.covers(beta0), z

    outs = _map(one, list(range(replications)), n_jobs)
    covered = np.array([o[0] for o in outs])
    z = np.array([o[1] for o in outs])
    signal = beta0 != 0
    return {
        "beta0": beta0,
        "covered": covered,
        "z": z,
        "coverage": covered.mean(axis=0),
        "coverage_signal": float(covered[:, signal].mean()),
        "coverage_noise": float(covered[:, ~signal].mean()) if (~signal).any() else float("nan"),
    }


# -- plots -------------------------------------------------------------------

_METRIC_LABELS = {"f1": "F1-score", "rmse_raw": "RMSE (raw)",
                  "rmse_normalized": "RMSE (normalized)", "c_index": "C-index",
                  "logrank": "Log-rank statistic", "recall": "Detection recall"}


def emit_plots(results_csv, output_dir, metrics=DEFAULT_PLOT_METRICS):
    """One SVG boxplot per (scenario, metric), methods side by side.

    Returns the list of written paths. Fails without writing anything if the
    results file has no rows.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_results(results_csv)
    if not rows:
        raise ValueError(f"{results_csv}: no result rows to plot")
    for m in metrics:
        if m not in METRIC_COLUMNS:
            raise ValueError(f"unknown metric {m!r}")
    out = _prepare_dir(output_dir)
    scenarios = list(dict.fromkeys(r["scenario"] for r in rows))
    written = []
    with matplotlib.rc_context({"svg.hashsalt": "ranktransfer", "svg.fonttype": "none"}):
        for scen in scenarios:
            srows = [r for r in rows if r["scenario"] == scen]
            methods = list(dict.fromkeys(r["method"] for r in srows))
            for metric in metrics:
                data = []
                for m in methods:
                    v = np.array([r[metric] for r in srows if r["method"] == m])
                    data.append(v[np.isfinite(v)])
                fig, ax = plt.subplots(figsize=(1.2 * len(methods) + 2, 4))
                ax.boxplot(data, showmeans=True)
                ax.set_xticks(range(1, len(methods) + 1), methods, rotation=30, ha="right")
                ax.set_ylabel(metric)
                ax.set_title(f"{scen}: {_METRIC_LABELS.get(metric, metric)}")
                fig.tight_layout()
                path = out / f"{scen}_{metric}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
                written.append(path)
    return written

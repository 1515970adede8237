"""Survival cohorts: the dataset container, AFT simulation and CSV I/O.

Synthetic cohorts follow an accelerated failure time design,
``log T = beta'X + eps`` with Gaussian covariates and exponential censoring.
Source cohorts differ from the target through a rank-one covariance
perturbation and a sparse perturbation of the coefficient vector.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import DegenerateDataError, unit_normalize

__all__ = [
    "SurvivalDataset",
    "ScenarioSpec",
    "PerturbationParams",
    "CalibrationError",
    "DatasetFormatError",
    "ar1_covariance",
    "simulate_cohort",
    "make_source_covariance",
    "perturb_coefficients",
    "calibrate_censoring",
    "erc",
    "target_coefficients",
    "load_dataset_csv",
    "write_dataset_csv",
    "generate_scenario",
]

ERROR_VARIANCE = 0.2


class CalibrationError(RuntimeError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """One cohort: observed times, event indicators and covariate rows.

    Arrays are copied and made read-only on construction, so instances can be
    shared freely between threads and processes.
    """

    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    label: str = "cohort"

    def __post_init__(self):
        time = np.array(self.time, dtype=float)
        event = np.array(self.event)
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-D array")
        n = X.shape[0]
        if time.shape != (n,) or event.shape != (n,):
            raise ValueError("time, event and X must have matching lengths")
        if n < 2:
            raise ValueError("a survival dataset needs at least two observations")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise ValueError("observed times must be finite and nonnegative")
        if not np.all(np.isin(event, (0, 1))):
            raise ValueError("event indicators must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates contain missing or non-finite values")
        event = event.astype(np.int8)
        for arr in (time, event, X):
            arr.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "X", X)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def censoring_rate(self):
        return 1.0 - float(self.event.mean())

    def subset(self, index, label=None):
        index = np.asarray(index)
        return SurvivalDataset(
            self.time[index], self.event[index], self.X[index],
            label=self.label if label is None else label,
        )

    def __eq__(self, other):
        if not isinstance(other, SurvivalDataset):
            return NotImplemented
        return (
            self.label == other.label
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.X, other.X)
        )

    def __repr__(self):
        return f"SurvivalDataset(label={self.label!r}, n={self.n}, p={self.p})"


def concat_datasets(datasets, label="pooled"):
    return SurvivalDataset(
        np.concatenate([d.time for d in datasets]),
        np.concatenate([d.event for d in datasets]),
        np.vstack([d.X for d in datasets]),
        label=label,
    )


def ar1_covariance(p, rho=0.3):
    """Toeplitz covariance with entries ``rho ** |j - j'|``."""
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _draw_aft(beta, n, covariance, rng):
    chol = np.linalg.cholesky(covariance)
    X = rng.standard_normal((n, beta.shape[0])) @ chol.T
    log_t = X @ beta + math.sqrt(ERROR_VARIANCE) * rng.standard_normal(n)
    return X, np.exp(log_t)


def simulate_cohort(beta, n, covariance, theta, seed, label="cohort"):
    """Draw ``n`` observations from the AFT model with exponential censoring.

    Parameters
    ----------
    beta : array of shape (p,)
        Regression coefficients of ``log T``.
    n : int
        Sample size.
    covariance : array of shape (p, p)
        Covariance of the Gaussian covariates; must be positive definite.
    theta : float
        Mean of the exponential censoring distribution.
    seed : int or numpy SeedSequence

    Returns
    -------
    SurvivalDataset

    Raises
    ------
    numpy.linalg.LinAlgError
        If ``covariance`` is not positive definite.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    beta = np.asarray(beta, dtype=float)
    covariance = np.asarray(covariance, dtype=float)
    if not np.allclose(covariance, covariance.T):
        raise np.linalg.LinAlgError("covariance matrix is not symmetric")
    rng = np.random.default_rng(seed)
    X, t = _draw_aft(beta, n, covariance, rng)
    c = rng.exponential(theta, n)
    return SurvivalDataset(np.minimum(t, c), (t <= c).astype(np.int8), X, label=label)


def make_source_covariance(sigma0, seed, scale=0.3):
    """Rank-one perturbation ``sigma0 + v v'`` with ``v ~ N(0, scale^2 I)``."""
    sigma0 = np.asarray(sigma0, dtype=float)
    rng = np.random.default_rng(seed)
    v = scale * rng.standard_normal(sigma0.shape[0])
    return sigma0 + np.outer(v, v)


def perturb_coefficients(beta0, d1, d2, r, u, seed):
    """Perturb a sparse coefficient vector to build a source model.

    ``d1`` support coordinates and ``d2`` off-support coordinates receive
    ``Uniform[-u, u]`` noise, then ``r`` support coordinates flip sign, and
    the result is rescaled to unit L2 norm. The noised and flipped support
    subsets are drawn independently and may overlap.
    """
    beta0 = np.asarray(beta0, dtype=float)
    support = np.flatnonzero(beta0)
    off_support = np.flatnonzero(beta0 == 0)
    if min(d1, d2, r) < 0:
        raise ValueError("perturbation sizes must be nonnegative")
    if max(d1, r) > support.size:
        raise ValueError(
            f"d1 = {d1} and r = {r} must not exceed the support size {support.size}"
        )
    if d2 > off_support.size:
        raise ValueError(f"d2 = {d2} exceeds the off-support size {off_support.size}")
    rng = np.random.default_rng(seed)
    noisy_support = rng.permutation(support)[:d1]
    flipped = rng.permutation(support)[:r]
    noisy_off = rng.permutation(off_support)[:d2]
    beta = beta0.copy()
    noisy = np.concatenate([noisy_support, noisy_off])
    beta[noisy] += rng.uniform(-u, u, noisy.size)
    beta[flipped] = -beta[flipped]
    return unit_normalize(beta)


def calibrate_censoring(beta, covariance, target_rate, seed, n=5000, tol=0.01,
                        max_iter=100):
    """Find the censoring mean giving a target censoring fraction.

    Bisection on ``log theta`` against a Monte-Carlo estimate of
    ``P(T > C)`` computed on one fixed set of draws, which makes the
    estimated rate monotone in ``theta``.
    """
    if not 0 < target_rate < 1:
        raise CalibrationError(f"target censoring rate {target_rate} is unreachable")
    rng = np.random.default_rng(seed)
    _, t = _draw_aft(np.asarray(beta, dtype=float), n, np.asarray(covariance), rng)
    unit_c = rng.standard_exponential(n)

    def rate(log_theta):
        return float(np.mean(t > math.exp(log_theta) * unit_c))

    lo, hi = -20.0, 20.0
    if not rate(hi) <= target_rate <= rate(lo):
        raise CalibrationError(f"cannot bracket censoring rate {target_rate}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        got = rate(mid)
        if abs(got - target_rate) <= tol:
            return math.exp(mid)
        if got > target_rate:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"censoring calibration did not reach {target_rate} +/- {tol} in {max_iter} steps"
    )


def erc(beta0, betak):
    """Rank correlation between two coefficient vectors.

    Fraction of ordered pairs ``beta0_i > beta0_j`` that keep the same
    strict ordering in ``betak``.
    """
    beta0 = np.asarray(beta0, dtype=float)
    betak = np.asarray(betak, dtype=float)
    if beta0.shape != betak.shape:
        raise ValueError("coefficient vectors must have equal length")
    above0 = beta0[:, None] > beta0[None, :]
    denom = np.count_nonzero(above0)
    if denom == 0:
        raise DegenerateDataError("ERC is undefined for a constant reference vector")
    abovek = betak[:, None] > betak[None, :]
    return np.count_nonzero(above0 & abovek) / denom


def target_coefficients(p, block=2, levels=(1.0, -1.0, 0.8, -0.8, 0.6, -0.6)):
    """Unit-norm sparse target: each level repeated ``block`` times, then zeros."""
    head = np.repeat(np.asarray(levels, dtype=float), block)
    if head.size > p:
        raise ValueError("support pattern longer than p")
    beta = np.zeros(p)
    beta[:head.size] = head
    return unit_normalize(beta)


# -- CSV ---------------------------------------------------------------------

def write_dataset_csv(dataset, path, covariate_names=None):
    names = covariate_names or [f"x{j + 1}" for j in range(dataset.p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "status", *names])
        for t, d, row in zip(dataset.time, dataset.event, dataset.X):
            writer.writerow([repr(float(t)), int(d), *(repr(float(v)) for v in row)])


def load_dataset_csv(path, label=None):
    """Read a cohort from CSV with columns ``time, status, <covariates...>``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "time" or header[1] != "status":
            raise DatasetFormatError(
                f"{path}: header must start with 'time,status' followed by covariates"
            )
        times, events, rows = [], [], []
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}"
                )
            values = []
            for col, cell in zip(header, row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DatasetFormatError(
                        f"{path}: row {rownum}, column {col!r}: non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(values[-1]):
                    raise DatasetFormatError(
                        f"{path}: row {rownum}, column {col!r}: missing or non-finite value"
                    )
            if values[0] < 0:
                raise DatasetFormatError(f"{path}: row {rownum}, column 'time': negative time")
            if values[1] not in (0.0, 1.0):
                raise DatasetFormatError(
                    f"{path}: row {rownum}, column 'status': must be 0 or 1, got {row[1]!r}"
                )
            times.append(values[0])
            events.append(int(values[1]))
            rows.append(values[2:])
    if len(rows) < 2:
        raise DatasetFormatError(f"{path}: need at least two data rows")
    return SurvivalDataset(
        np.array(times), np.array(events, dtype=np.int8), np.array(rows),
        label=label if label is not None else str(path),
    )


# -- scenarios ---------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationParams:
    d1: int
    d2: int
    r: int
    u: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one simulation design.

    The first ``n_informative`` sources use ``helpful`` perturbations and the
    remaining ones use ``unhelpful`` perturbations.
    """

    name: str
    n0: int
    n_source: int
    p: int
    K: int
    n_informative: int
    helpful: PerturbationParams
    unhelpful: PerturbationParams
    support_block: int = 2
    censoring_rate: float = 0.4
    n_test: int = 30
    rho: float = 0.3
    source_cov_scale: float = 0.3
    levels: tuple = field(default=(1.0, -1.0, 0.8, -0.8, 0.6, -0.6))

    def __post_init__(self):
        s = self.support_block * len(self.levels)
        if self.n_informative > self.K:
            raise ValueError("informative set larger than K")
        for pp in (self.helpful, self.unhelpful):
            if max(pp.d1, pp.r) > s or pp.d2 > self.p - s:
                raise ValueError(f"perturbation {pp} incompatible with s={s}, p={self.p}")

    @property
    def informative_set(self):
        return tuple(range(self.n_informative))

    def to_dict(self):
        out = dict(self.__dict__)
        out["helpful"] = dict(self.helpful.__dict__)
        out["unhelpful"] = dict(self.unhelpful.__dict__)
        out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["helpful"] = PerturbationParams(**d["helpful"])
        d["unhelpful"] = PerturbationParams(**d["unhelpful"])
        if "levels" in d:
            d["levels"] = tuple(d["levels"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ScenarioData:
    target: SurvivalDataset
    sources: list
    test: SurvivalDataset
    beta0: np.ndarray
    source_betas: list
    informative_set: tuple

    def __repr__(self):
        return (f"ScenarioData(target={self.target!r}, K={len(self.sources)}, "
                f"informative_set={self.informative_set})")


def generate_scenario(spec, seed):
    """Draw target, sources and an independent target test set for one replication."""
    root = np.random.SeedSequence(seed)
    target_ss, test_ss, calib_ss, *source_ss = root.spawn(3 + spec.K)
    beta0 = target_coefficients(spec.p, spec.support_block, spec.levels)
    sigma0 = ar1_covariance(spec.p, spec.rho)
    theta0 = calibrate_censoring(beta0, sigma0, spec.censoring_rate, calib_ss)
    target = simulate_cohort(beta0, spec.n0, sigma0, theta0, target_ss, label="target")
    test = simulate_cohort(beta0, spec.n_test, sigma0, theta0, test_ss, label="test")
    sources, betas = [], []
    for k, ss in enumerate(source_ss):
        coef_ss, cov_ss, cal_ss, data_ss = ss.spawn(4)
        pp = spec.helpful if k < spec.n_informative else spec.unhelpful
        betak = perturb_coefficients(beta0, pp.d1, pp.d2, pp.r, pp.u, coef_ss)
        sigmak = make_source_covariance(sigma0, cov_ss, spec.source_cov_scale)
        thetak = calibrate_censoring(betak, sigmak, spec.censoring_rate, cal_ss)
        sources.append(
            simulate_cohort(betak, spec.n_source, sigmak, thetak, data_ss,
                            label=f"source{k + 1}")
        )
        betas.append(betak)
    return ScenarioData(target, sources, test, beta0, betas, spec.informative_set)

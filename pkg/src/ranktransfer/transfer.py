"""Two-step transfer estimation and the comparison estimators.

Fusion step: penalized smoothed-rank fit pooling the target with a set of
sources. Debias step: penalized fit of an offset on the target alone,
starting from the fusion estimate.
"""
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_coef, unit_normalize
from .fabs import fabs_solve, fabs_solve_offset, select_bic, select_lambda
from .kernels import SPRLoss

__all__ = [
    "Method",
    "SolverConfig",
    "PenalizedFit",
    "TransferFit",
    "fit_penalized",
    "fusion_step",
    "debias_step",
    "estimate",
    "estimate_many",
]


class Method(str, enum.Enum):
    TARGET_ONLY = "TargetOnly"
    NAIVE_POOLED = "NaivePooled"
    ORACLE_POOLED = "OraclePooled"
    ORACLE_TRANS = "OracleTrans"
    AUTO_POOLED = "AutoPooled"
    AUTO_TRANS = "AutoTrans"

    @property
    def needs_oracle(self):
        return self in (Method.ORACLE_POOLED, Method.ORACLE_TRANS)

    @property
    def needs_detection(self):
        return self in (Method.AUTO_POOLED, Method.AUTO_TRANS)

    @property
    def debiases(self):
        return self in (Method.ORACLE_TRANS, Method.AUTO_TRANS)


ALL_METHODS = tuple(Method)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the penalized path fits.

    ``sigma=None`` smooths each cohort at ``n_k ** -0.5``. ``lambda_mode`` is
    ``"bic"`` (select along the path) or ``"theory"`` (take the first path
    point with ``lam <= lambda_const * sqrt(log p / n)``). ``bic_scale``
    multiplies the sample size in front of the objective inside BIC.
    """

    step_eps: float = 0.01
    lambda_min_ratio: float = 0.05
    max_steps: int = 20000
    sigma: float = None
    lambda_mode: str = "bic"
    lambda_const: float = 1.0
    bic_scale: float = 20.0

    def __post_init__(self):
        if self.lambda_mode not in ("bic", "theory"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")
        if not self.bic_scale > 0:
            raise ValueError("bic_scale must be positive")

    def with_overrides(self, **kwargs):
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


@dataclass(frozen=True, eq=False)
class PenalizedFit:
    beta: np.ndarray
    lam: float
    df: int
    path_length: int
    reason: str


def fit_penalized(cohorts, config, offset=None, n_select=None):
    """Fabs path on the pooled smoothed loss plus path-point selection.

    With ``offset`` the penalty acts on the deviation from it and the returned
    ``beta`` is that deviation.
    """
    loss = SPRLoss(cohorts, sigma=config.sigma)
    p = loss.p
    kwargs = dict(step_eps=config.step_eps, lambda_min_ratio=config.lambda_min_ratio,
                  max_steps=config.max_steps)
    if offset is None:
        path = fabs_solve(loss, p, **kwargs)
    else:
        path = fabs_solve_offset(loss, offset, **kwargs)
    n = loss.n_total if n_select is None else n_select
    if config.lambda_mode == "bic":
        pt = select_bic(path, n, scale=config.bic_scale)
    else:
        pt = select_lambda(path, config.lambda_const * math.sqrt(math.log(p) / n))
    return PenalizedFit(pt.beta.copy(), pt.lam, pt.df, len(path), path.reason)


def _pooled(target, sources, source_set):
    source_set = tuple(sorted(set(source_set)))
    for k in source_set:
        if not 0 <= k < len(sources):
            raise IndexError(f"source index {k} out of range for {len(sources)} sources")
    return [target] + [sources[k] for k in source_set], source_set


def fusion_step(target, sources, source_set, config=None):
    """Pooled penalized fit over the target and ``sources[k]`` for k in ``source_set``.

    Returns the selected coefficient vector; an empty ``source_set`` gives
    the target-only fit.
    """
    config = config or SolverConfig()
    cohorts, _ = _pooled(target, sources, source_set)
    return fit_penalized(cohorts, config).beta


def debias_step(target, w_hat, config=None):
    """Target-only penalized correction ``delta`` around the fusion estimate."""
    config = config or SolverConfig()
    w_hat = check_coef(w_hat, target.p)
    return fit_penalized([target], config, offset=w_hat).beta


@dataclass(frozen=True, eq=False)
class TransferFit:
    """Result of one estimator.

    ``beta_hat`` is the raw ``w_hat + delta_hat``; ``beta_normalized`` its
    unit-norm copy.
    """

    method: Method
    w_hat: np.ndarray
    delta_hat: np.ndarray
    source_set: tuple
    diagnostics: dict = field(default_factory=dict)
    detection: object = None

    @property
    def beta_hat(self):
        return self.w_hat + self.delta_hat

    @property
    def beta_normalized(self):
        return unit_normalize(self.beta_hat)

    @property
    def support(self):
        return tuple(np.flatnonzero(self.beta_hat).tolist())


class _FitCache:
    """Memoizes fusion and debias fits within one set of cohorts."""

    def __init__(self, target, sources, config):
        self.target, self.sources, self.config = target, sources, config
        self._fusion, self._debias = {}, {}

    def fusion(self, source_set):
        cohorts, key = _pooled(self.target, self.sources, source_set)
        if key not in self._fusion:
            self._fusion[key] = fit_penalized(cohorts, self.config)
        return self._fusion[key], key

    def debias(self, key):
        if key not in self._debias:
            w = self._fusion[key].beta
            self._debias[key] = fit_penalized([self.target], self.config, offset=w)
        return self._debias[key]


def estimate_many(methods, target, sources, oracle_set=None, config=None,
                  detection_folds=3, detection_seed=0):
    """Fit several methods on the same data, sharing identical sub-fits.

    Returns a dict ``{Method: TransferFit}`` in the order requested.
    """
    from .detection import detect

    config = config or SolverConfig()
    methods = [Method(m) for m in methods]
    if any(m.needs_oracle for m in methods) and oracle_set is None:
        raise ValueError("oracle_set is required for the Oracle methods")
    cache = _FitCache(target, sources, config)
    report = None
    if any(m.needs_detection for m in methods):
        report = detect(target, sources, folds=detection_folds, seed=detection_seed,
                        config=config)
    fits = {}
    for m in methods:
        if m is Method.TARGET_ONLY:
            sset = ()
        elif m is Method.NAIVE_POOLED:
            sset = tuple(range(len(sources)))
        elif m.needs_oracle:
            sset = tuple(oracle_set)
        else:
            sset = report.selected
        fusion, key = cache.fusion(sset)
        diag = {"fusion_lambda": fusion.lam, "fusion_df": fusion.df,
                "fusion_path_length": fusion.path_length}
        if m.debiases:
            deb = cache.debias(key)
            delta = deb.beta
            diag.update(debias_lambda=deb.lam, debias_df=deb.df,
                        debias_path_length=deb.path_length)
        else:
            delta = np.zeros(target.p)
        fits[m] = TransferFit(m, fusion.beta.copy(), delta.copy(), key, diag,
                              report if m.needs_detection else None)
    return fits


def estimate(method, target, sources, oracle_set=None, config=None,
             detection_folds=3, detection_seed=0):
    """Fit one of the six estimators; see :class:`Method`."""
    method = Method(method)
    return estimate_many([method], target, sources, oracle_set, config,
                         detection_folds, detection_seed)[method]

"""scikit-learn compatible estimators around the functional API.

Survival targets ``y`` are either a structured array with a time field and
an event field, or an ``(n, 2)`` array of (time, event). Predictions are
linear scores ``X @ coef_``; larger scores mean longer expected survival,
and ``score`` is the concordance index.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from ._validation import check_X_y_survival, unit_normalize
from .data import SurvivalDataset
from .inference import infer
from .kernels import c_index
from .transfer import Method, SolverConfig, estimate, fit_penalized

__all__ = ["SPRSurvival", "TransferSPR", "DesparsifiedSPR"]


def _dataset(X, y, label):
    X, time, event = check_X_y_survival(X, y)
    return SurvivalDataset(time, event, X, label=label)


class _SPRBase(BaseEstimator):
    def _solver_config(self):
        return SolverConfig(
            step_eps=self.step_eps,
            lambda_min_ratio=self.lambda_min_ratio,
            max_steps=self.max_steps,
            sigma=self.sigma,
            lambda_mode=self.lambda_mode,
            lambda_const=self.lambda_const,
            bic_scale=self.bic_scale,
        )

    def _finish(self, beta):
        self.coef_raw_ = np.asarray(beta, dtype=float)
        self.coef_ = unit_normalize(self.coef_raw_) if self.normalize else self.coef_raw_
        self.support_ = np.flatnonzero(self.coef_raw_)

    def predict(self, X):
        """Linear risk score ``X @ coef_`` (larger = longer survival)."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}"
            )
        return X @ self.coef_

    def score(self, X, y):
        """Concordance index of :meth:`predict` on ``(X, y)``."""
        check_is_fitted(self, "coef_")
        return c_index(self.coef_, _dataset(X, y, "score"))


class SPRSurvival(_SPRBase):
    """L1-penalized smoothed partial-rank estimator on a single cohort.

    Parameters
    ----------
    step_eps : float
        Fabs coordinate step.
    lambda_min_ratio : float
        Path stops at ``lambda_min_ratio * lambda_0``.
    max_steps : int
    sigma : float or None
        Smoothing bandwidth; ``None`` uses ``n ** -0.5``.
    lambda_mode : {"bic", "theory"}
    lambda_const : float
        Constant of the ``"theory"`` rule ``C sqrt(log p / n)``.
    bic_scale : float
        Multiplier of ``n`` in front of the objective inside BIC.
    normalize : bool
        Store the unit-norm coefficients in ``coef_``.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    coef_raw_ : ndarray of shape (n_features,)
        Unnormalized path solution.
    support_ : ndarray
        Indices of nonzero coefficients.
    lambda_ : float
    """

    def __init__(self, step_eps=0.01, lambda_min_ratio=0.05, max_steps=20000, sigma=None,
                 lambda_mode="bic", lambda_const=1.0, bic_scale=20.0, normalize=True):
        self.step_eps = step_eps
        self.lambda_min_ratio = lambda_min_ratio
        self.max_steps = max_steps
        self.sigma = sigma
        self.lambda_mode = lambda_mode
        self.lambda_const = lambda_const
        self.bic_scale = bic_scale
        self.normalize = normalize

    def fit(self, X, y):
        data = _dataset(X, y, "target")
        self.n_features_in_ = data.p
        fit = fit_penalized([data], self._solver_config())
        self.lambda_ = fit.lam
        self.path_length_ = fit.path_length
        self._finish(fit.beta)
        return self


class TransferSPR(_SPRBase):
    """Transfer estimator borrowing from source cohorts.

    Parameters
    ----------
    method : str
        One of ``TargetOnly``, ``NaivePooled``, ``OraclePooled``,
        ``OracleTrans``, ``AutoPooled``, ``AutoTrans``.
    detection_folds : int
        Target folds for source screening (Auto methods).
    random_state : int
        Seed of the detection fold split.
    Remaining parameters as in :class:`SPRSurvival`.

    Attributes
    ----------
    coef_, coef_raw_, support_
    source_set_ : tuple of int
        Sources pooled in the fusion step.
    detection_report_ : DetectionReport or None
    w_ : ndarray
        Fusion-step estimate.
    delta_ : ndarray
        Debias-step correction.
    """

    def __init__(self, method="AutoTrans", detection_folds=3, random_state=0, step_eps=0.01,
                 lambda_min_ratio=0.05, max_steps=20000, sigma=None, lambda_mode="bic",
                 lambda_const=1.0, bic_scale=20.0, normalize=True):
        self.method = method
        self.detection_folds = detection_folds
        self.random_state = random_state
        self.step_eps = step_eps
        self.lambda_min_ratio = lambda_min_ratio
        self.max_steps = max_steps
        self.sigma = sigma
        self.lambda_mode = lambda_mode
        self.lambda_const = lambda_const
        self.bic_scale = bic_scale
        self.normalize = normalize

    def fit(self, X, y, sources=(), oracle_set=None):
        """Fit on the target ``(X, y)``.

        Parameters
        ----------
        sources : sequence of (X_k, y_k) pairs or SurvivalDataset
        oracle_set : iterable of int, optional
            Informative source indices; required for the Oracle methods.
        """
        target = _dataset(X, y, "target")
        cohorts = []
        for k, src in enumerate(sources):
            if isinstance(src, SurvivalDataset):
                cohorts.append(src)
            else:
                Xk, yk = src
                cohorts.append(_dataset(Xk, yk, f"source{k + 1}"))
        if any(c.p != target.p for c in cohorts):
            raise ValueError("sources must have the same number of features as the target")
        self.n_features_in_ = target.p
        fit = estimate(Method(self.method), target, cohorts, oracle_set=oracle_set,
                       config=self._solver_config(), detection_folds=self.detection_folds,
                       detection_seed=self.random_state)
        self.w_ = fit.w_hat
        self.delta_ = fit.delta_hat
        self.source_set_ = fit.source_set
        self.detection_report_ = fit.detection
        self._finish(fit.beta_hat)
        return self


class DesparsifiedSPR(_SPRBase):
    """Desparsified estimator with coordinate-wise normal confidence intervals.

    Parameters
    ----------
    alpha : float
        Interval level ``1 - alpha``.
    gamma : float, "rate" or "cv"
        CLIME level or its selection rule.
    geometry : {"sphere", "euclidean"}
        See :func:`ranktransfer.inference.infer`.
    folds, random_state
        Cross-validation for ``gamma="cv"``.
    Remaining parameters configure the initial penalized fit when
    ``fit`` is called without ``beta_init``.

    Attributes
    ----------
    coef_ : ndarray
        Desparsified estimate.
    intervals_ : ndarray of shape (n_features, 2)
    result_ : InferenceResult
    """

    def __init__(self, alpha=0.05, gamma="rate", geometry="sphere", folds=5, random_state=0,
                 step_eps=0.01, lambda_min_ratio=0.05, max_steps=20000, sigma=None,
                 lambda_mode="bic", lambda_const=1.0, bic_scale=20.0):
        self.alpha = alpha
        self.gamma = gamma
        self.geometry = geometry
        self.folds = folds
        self.random_state = random_state
        self.step_eps = step_eps
        self.lambda_min_ratio = lambda_min_ratio
        self.max_steps = max_steps
        self.sigma = sigma
        self.lambda_mode = lambda_mode
        self.lambda_const = lambda_const
        self.bic_scale = bic_scale

    def fit(self, X, y, beta_init=None):
        target = _dataset(X, y, "target")
        self.n_features_in_ = target.p
        if beta_init is None:
            beta_init = fit_penalized([target], self._solver_config()).beta
        res = infer(target, beta_init, alpha=self.alpha, gamma=self.gamma,
                    geometry=self.geometry, folds=self.folds, seed=self.random_state,
                    sigma=self.sigma)
        self.result_ = res
        self.coef_ = res.beta_tilde
        self.intervals_ = np.column_stack([res.lo, res.hi])
        return self

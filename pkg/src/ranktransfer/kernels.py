"""Pairwise rank kernels: partial-rank objective, its sigmoid smoothing,
derivatives of the smoothed objective, and the concordance index.

All sums run over ordered pairs ``(i, l)`` with ``delta_l = 1`` and
``Y_i > Y_l`` ("comparable pairs"), normalized by ``n (n - 1)``. Pair lists are
enumerated in row-major order of ``(i, l)`` and reduced with ``np.bincount``,
so results are bitwise reproducible for fixed inputs.
"""
import numpy as np
from scipy.special import expit

from ._validation import DegenerateDataError, check_coef, check_sigma

__all__ = [
    "sigmoid",
    "sigmoid_d1",
    "sigmoid_d2",
    "default_sigma",
    "comparable_pairs",
    "pr_objective",
    "spr_objective",
    "spr_gradient",
    "spr_hessian",
    "c_index",
    "pooling_weights",
    "pooled_spr_objective",
    "SPRLoss",
]


def sigmoid(x, sigma):
    """``1 / (1 + exp(-x / sigma))``, overflow-free."""
    return expit(np.asarray(x, dtype=float) / check_sigma(sigma))


def _logistic_var(z):
    # S(1 - S) evaluated as S(z) S(-z) to keep precision in both tails
    return expit(z) * expit(-z)


def sigmoid_d1(x, sigma):
    sigma = check_sigma(sigma)
    return _logistic_var(np.asarray(x, dtype=float) / sigma) / sigma


def sigmoid_d2(x, sigma):
    sigma = check_sigma(sigma)
    z = np.asarray(x, dtype=float) / sigma
    # 1 - 2 S(z) == -tanh(z / 2)
    return -_logistic_var(z) * np.tanh(0.5 * z) / sigma**2


def default_sigma(n):
    """Bandwidth rule ``sigma_n = n ** -0.5``."""
    return float(n) ** -0.5


def comparable_pairs(time, event):
    """Index arrays ``(i, l)`` of ordered pairs with ``event[l] == 1`` and
    ``time[i] > time[l]``. Tied times never form a pair."""
    time = np.asarray(time)
    mask = (time[:, None] > time[None, :]) & (np.asarray(event)[None, :] == 1)
    return np.nonzero(mask)


def _resolve_sigma(sigma, n):
    if sigma is None or sigma == "per_cohort":
        return default_sigma(n)
    return check_sigma(sigma)


def _pair_diffs(beta, data):
    beta = check_coef(beta, data.p)
    i, l = comparable_pairs(data.time, data.event)
    scores = data.X @ beta
    return i, l, scores[i] - scores[l]


def pr_objective(beta, data):
    """Unsmoothed partial-rank objective (fraction of concordant ordered pairs)."""
    _, _, diff = _pair_diffs(beta, data)
    n = data.n
    return np.count_nonzero(diff > 0) / (n * (n - 1))


def spr_objective(beta, data, sigma=None):
    """Smoothed partial-rank objective; ``sigma=None`` uses ``n ** -0.5``."""
    sigma = _resolve_sigma(sigma, data.n)
    _, _, diff = _pair_diffs(beta, data)
    n = data.n
    return float(np.sum(sigmoid(diff, sigma))) / (n * (n - 1))


def _contrast_sum(data, i, l, weights):
    # sum_pairs w_il (X_i - X_l) == X' (bincount_i(w) - bincount_l(w))
    r = np.bincount(i, weights, data.n) - np.bincount(l, weights, data.n)
    return data.X.T @ r


def spr_gradient(beta, data, sigma=None):
    """Gradient of :func:`spr_objective` with respect to ``beta``."""
    sigma = _resolve_sigma(sigma, data.n)
    i, l, diff = _pair_diffs(beta, data)
    n = data.n
    return _contrast_sum(data, i, l, sigmoid_d1(diff, sigma)) / (n * (n - 1))


def spr_hessian(beta, data, sigma=None):
    """Negative second-derivative matrix of :func:`spr_objective`.

    ``-1/(n(n-1)) sum_pairs S''(b'(X_i - X_l)) (X_i - X_l)(X_i - X_l)'``
    """
    sigma = _resolve_sigma(sigma, data.n)
    i, l, diff = _pair_diffs(beta, data)
    n = data.n
    w = sigmoid_d2(diff, sigma)
    # Laplacian form: sum w (e_i - e_l)(e_i - e_l)' sandwiched by X
    W = np.zeros((n, n))
    W[i, l] = w
    lap = np.diag(W.sum(axis=0) + W.sum(axis=1)) - W - W.T
    H = -(data.X.T @ lap @ data.X) / (n * (n - 1))
    return 0.5 * (H + H.T)


def c_index(beta, data):
    """Concordance index: share of comparable pairs ordered correctly by
    ``beta'X`` (longer survival, larger score). Score ties count as discordant.
    """
    i, l, diff = _pair_diffs(beta, data)
    if i.size == 0:
        raise DegenerateDataError(
            f"{data.label}: no comparable pairs, C-index undefined"
        )
    return np.count_nonzero(diff > 0) / i.size


def pooling_weights(cohorts):
    """Cohort weights ``n_k / sum_j n_j``."""
    sizes = np.array([c.n for c in cohorts], dtype=float)
    return sizes / sizes.sum()


def pooled_spr_objective(w, cohorts, sigma=None):
    """Sample-size weighted average of per-cohort smoothed objectives.

    ``sigma=None`` smooths each cohort at its own ``n_k ** -0.5``,
    ``"pooled"`` at ``(sum_k n_k) ** -0.5``; a number applies one bandwidth
    to every cohort.
    """
    if not cohorts:
        raise ValueError("need at least one cohort")
    alpha = pooling_weights(cohorts)
    if sigma == "pooled":
        sigma = default_sigma(sum(c.n for c in cohorts))
    return float(sum(a * spr_objective(w, c, sigma) for a, c in zip(alpha, cohorts)))


class SPRLoss:
    """Negative pooled smoothed objective with gradient, for path solvers.

    Comparable pairs are enumerated once at construction.

    Parameters
    ----------
    cohorts : list of SurvivalDataset
    sigma : float, "per_cohort", "pooled" or None
        A number is one global bandwidth; ``None``/``"per_cohort"`` smooths
        each cohort at ``n_k ** -0.5``; ``"pooled"`` uses ``n ** -0.5`` with
        ``n`` the pooled sample size.
    offset : array of shape (p,), optional
        Fixed vector added to the argument before evaluation.
    """

    def __init__(self, cohorts, sigma=None, offset=None):
        if not cohorts:
            raise ValueError("need at least one cohort")
        p = cohorts[0].p
        if any(c.p != p for c in cohorts):
            raise ValueError("all cohorts must share the covariate dimension")
        self.p = p
        self.n_total = sum(c.n for c in cohorts)
        self.offset = None if offset is None else check_coef(offset, p)
        alpha = pooling_weights(cohorts)
        if sigma == "pooled":
            sigma = default_sigma(self.n_total)
        self._blocks = []
        for a, c in zip(alpha, cohorts):
            i, l = comparable_pairs(c.time, c.event)
            self._blocks.append(
                (c.X, i, l, c.n, a / (c.n * (c.n - 1)), _resolve_sigma(sigma, c.n))
            )

    def _shift(self, beta):
        beta = np.asarray(beta, dtype=float)
        return beta if self.offset is None else self.offset + beta

    def value(self, beta):
        beta = self._shift(beta)
        total = 0.0
        for X, i, l, _, wt, sigma in self._blocks:
            s = X @ beta
            total += wt * float(np.sum(expit((s[i] - s[l]) / sigma)))
        return -total

    def value_and_grad(self, beta):
        beta = self._shift(beta)
        total = 0.0
        grad = np.zeros(self.p)
        for X, i, l, n, wt, sigma in self._blocks:
            s = X @ beta
            z = (s[i] - s[l]) / sigma
            sp = expit(z)
            total += wt * float(np.sum(sp))
            d1 = sp * expit(-z) / sigma
            r = np.bincount(i, d1, n) - np.bincount(l, d1, n)
            grad += wt * (X.T @ r)
        return -total, -grad

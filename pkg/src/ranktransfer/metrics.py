"""Evaluation statistics: support F1, coefficient RMSE, detection recall and
the two-sample log-rank statistic on a median risk split."""
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_coef

__all__ = [
    "DegenerateGroupWarning",
    "EvaluationRecord",
    "f1_score",
    "rmse",
    "detection_recall",
    "median_risk_split",
    "logrank_statistic",
]


class DegenerateGroupWarning(UserWarning):
    """A risk group has no events; the log-rank statistic is uninformative."""


def _as_set(idx):
    return {int(i) for i in idx}


def f1_score(selected, truth):
    """F1 of a selected index set against the true support.

    Two empty sets score 1; exactly one empty set scores 0.
    """
    sel, tru = _as_set(selected), _as_set(truth)
    if not sel and not tru:
        return 1.0
    tp = len(sel & tru)
    if tp == 0:
        return 0.0
    return 2.0 * tp / (len(sel) + len(tru))


def rmse(beta_hat, beta_true):
    """Euclidean distance ``||beta_hat - beta_true||_2`` (no division by p)."""
    beta_true = np.asarray(beta_true, dtype=float)
    beta_hat = check_coef(beta_hat, beta_true.shape[0])
    return float(np.linalg.norm(beta_hat - beta_true))


def detection_recall(selected, truth):
    """Share of the informative sources that were selected."""
    tru = _as_set(truth)
    if not tru:
        raise ValueError("detection recall needs a nonempty informative set")
    return len(_as_set(selected) & tru) / len(tru)


def median_risk_split(risk_scores):
    """Boolean mask of the high-risk group: scores strictly above the median.

    Scores equal to the median fall in the low-risk group.
    """
    risk_scores = np.asarray(risk_scores, dtype=float)
    return risk_scores > np.median(risk_scores)


def logrank_statistic(test, risk_scores):
    """Unweighted two-sample log-rank chi-square between median risk groups.

    Parameters
    ----------
    test : SurvivalDataset
    risk_scores : array of shape (n,)
        Larger means higher risk of an early event.

    Returns
    -------
    float
        ``(sum_t O_t - E_t)^2 / sum_t V_t`` for the high-risk group over the
        distinct event times, with hypergeometric variance ``V_t``.
    """
    risk_scores = np.asarray(risk_scores, dtype=float)
    if risk_scores.shape != (test.n,):
        raise ValueError(f"risk_scores must have shape ({test.n},)")
    if test.n < 4:
        raise ValueError("log-rank statistic needs at least 4 observations")
    high = median_risk_split(risk_scores)
    if high.all() or not high.any():
        raise ValueError("median split left a risk group empty")
    time, event = test.time, test.event.astype(bool)
    if not event[high].any() or not event[~high].any():
        warnings.warn("a risk group has no events", DegenerateGroupWarning, stacklevel=2)

    t_ev = np.unique(time[event])
    # at-risk counts: #{Y >= t}; events: #{Y == t, delta = 1}
    at_risk = (time[None, :] >= t_ev[:, None])
    dies = (time[None, :] == t_ev[:, None]) & event[None, :]
    n_t = at_risk.sum(axis=1).astype(float)
    n1_t = at_risk[:, high].sum(axis=1).astype(float)
    d_t = dies.sum(axis=1).astype(float)
    d1_t = dies[:, high].sum(axis=1).astype(float)

    expected = d_t * n1_t / n_t
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(n_t > 1,
                       d_t * (n1_t / n_t) * (1 - n1_t / n_t) * (n_t - d_t) / (n_t - 1),
                       0.0)
    v = float(var.sum())
    if v <= 0:
        return 0.0
    return float((d1_t - expected).sum() ** 2 / v)


@dataclass(frozen=True)
class EvaluationRecord:
    """One row of a results table; ``nan`` marks an unavailable metric."""

    scenario: str
    method: str
    replication: int
    f1: float
    rmse_raw: float
    rmse_normalized: float
    c_index: float
    logrank: float
    recall: float = float("nan")
    seconds: float = float("nan")

    def __post_init__(self):
        # nan marks a metric that is unavailable (e.g. no ground truth)
        if not (np.isnan(self.f1) or 0.0 <= self.f1 <= 1.0):
            raise ValueError("f1 must lie in [0, 1]")
        if self.rmse_raw < 0 or self.rmse_normalized < 0:
            raise ValueError("rmse must be nonnegative")
        if not (np.isnan(self.c_index) or 0.0 <= self.c_index <= 1.0):
            raise ValueError("c_index must lie in [0, 1]")

    def as_row(self):
        return asdict(self)

"""Forward and backward stagewise (Fabs) path solver for L1-penalized losses.

The solver traces ``argmin loss(b) + lam * ||b||_1`` over a decreasing
sequence of ``lam`` by moving one coordinate at a time by ``step_eps``.
Coefficients are held as integer multiples of ``step_eps`` so that
coordinates returning to zero are exactly zero.
"""
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PathPoint",
    "SolutionPath",
    "FabsNumericalError",
    "fabs_solve",
    "fabs_solve_offset",
    "select_bic",
    "select_lambda",
    "bic_scores",
    "subgradient_violation",
]


class FabsNumericalError(FloatingPointError):
    def __init__(self, step, message="non-finite loss or gradient"):
        super().__init__(f"{message} at step {step}")
        self.step = step


@dataclass(frozen=True, eq=False)
class PathPoint:
    beta: np.ndarray
    lam: float
    loss: float
    df: int


@dataclass(eq=False)
class SolutionPath:
    points: list
    reason: str
    step_eps: float
    offset: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, idx):
        return self.points[idx]

    @property
    def lambdas(self):
        return np.array([pt.lam for pt in self.points])

    @property
    def losses(self):
        return np.array([pt.loss for pt in self.points])

    @property
    def dfs(self):
        return np.array([pt.df for pt in self.points])

    @property
    def betas(self):
        return np.array([pt.beta for pt in self.points])


def _evaluate(loss, beta, step):
    value, grad = loss.value_and_grad(beta)
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise FabsNumericalError(step)
    return value, grad


class _Offset:
    def __init__(self, loss, offset):
        self.loss = loss
        self.offset = offset

    def value_and_grad(self, delta):
        return self.loss.value_and_grad(self.offset + delta)


def fabs_solve(loss, p, step_eps=0.01, lambda_min_ratio=0.05, max_steps=20000,
               xi=None):
    """Trace an L1 solution path of ``loss`` from the zero vector.

    Parameters
    ----------
    loss : object
        Exposes ``value_and_grad(beta) -> (float, ndarray)``.
    p : int
        Dimension.
    step_eps : float
        Coordinate step size.
    lambda_min_ratio : float
        Stop once ``lam <= lambda_min_ratio * lam_0``.
    max_steps : int
        Hard cap on forward plus backward steps.
    xi : float, optional
        Minimum decrease of the penalized loss for a backward step;
        defaults to ``step_eps ** 2``.

    Returns
    -------
    SolutionPath
        Every visited point, starting at zero. ``reason`` is one of
        ``"stationary"``, ``"lambda_min"`` or ``"max_steps"``.
    """
    if not step_eps > 0:
        raise ValueError("step_eps must be positive")
    if not 0 <= lambda_min_ratio < 1:
        raise ValueError("lambda_min_ratio must lie in [0, 1)")
    eps = float(step_eps)
    xi = eps * eps if xi is None else float(xi)

    counts = np.zeros(p, dtype=np.int64)
    f, g = _evaluate(loss, counts * eps, 0)
    gmax = float(np.max(np.abs(g))) if p else 0.0
    if gmax == 0.0:
        return SolutionPath([PathPoint(np.zeros(p), 0.0, f, 0)], "stationary", eps)

    j = int(np.argmax(np.abs(g)))
    counts[j] = -int(np.sign(g[j]))
    f_new, g_new = _evaluate(loss, counts * eps, 1)
    lam = (f - f_new) / eps
    if not lam > 0:
        return SolutionPath([PathPoint(np.zeros(p), 0.0, f, 0)], "stationary", eps)
    points = [PathPoint(np.zeros(p), lam, f, 0)]
    f, g = f_new, g_new
    points.append(PathPoint(counts * eps, lam, f, 1))
    lam_min = lam * lambda_min_ratio

    reason = "max_steps"
    for step in range(2, max_steps + 1):
        active = np.flatnonzero(counts)
        took_backward = False
        if active.size:
            # first-order gain of shrinking each active coordinate toward zero
            shrink_gain = -np.sign(counts[active]) * g[active]
            j = int(active[np.argmin(shrink_gain)])
            trial = counts.copy()
            trial[j] -= int(np.sign(counts[j]))
            f_try, g_try = _evaluate(loss, trial * eps, step)
            if f_try - f - lam * eps < -xi:
                counts, f, g = trial, f_try, g_try
                took_backward = True
        if not took_backward:
            j = int(np.argmax(np.abs(g)))
            trial = counts.copy()
            trial[j] -= int(np.sign(g[j]))
            f_try, g_try = _evaluate(loss, trial * eps, step)
            lam = min(lam, (f - f_try) / eps)
            counts, f, g = trial, f_try, g_try
        points.append(PathPoint(counts * eps, lam, f, int(np.count_nonzero(counts))))
        if lam <= lam_min:
            reason = "lambda_min"
            break
    return SolutionPath(points, reason, eps)


def fabs_solve_offset(loss, w_fixed, step_eps=0.01, lambda_min_ratio=0.05,
                      max_steps=20000, xi=None):
    """Fabs path for ``delta`` in ``loss(w_fixed + delta) + lam * ||delta||_1``."""
    w_fixed = np.asarray(w_fixed, dtype=float)
    path = fabs_solve(_Offset(loss, w_fixed), w_fixed.shape[0], step_eps,
                      lambda_min_ratio, max_steps, xi)
    path.offset = w_fixed
    return path


def bic_scores(path, n, scale=1.0):
    """``2 * scale * n * loss + df * log n`` per path point.

    ``loss`` is the negated smoothed objective, so this is
    ``-2 (scale n) L + df log n``.
    """
    return 2.0 * scale * n * path.losses + path.dfs * math.log(n)


def select_bic(path, n, scale=1.0):
    """Path point minimizing BIC; ties go to smaller df, then larger lambda."""
    if not len(path):
        raise ValueError("empty path")
    bic = bic_scores(path, n, scale)
    order = np.lexsort((-path.lambdas, path.dfs, bic))
    return path.points[int(order[0])]


def select_lambda(path, lam):
    """First path point whose lambda is at or below ``lam`` (else the last point)."""
    for pt in path.points:
        if pt.lam <= lam:
            return pt
    return path.points[-1]


def subgradient_violation(grad, beta, lam):
    """Largest violation of the L1 stationarity conditions at ``beta``.

    Zero coordinates need ``|g_j| <= lam``; active ones need
    ``g_j = -lam * sign(beta_j)``.
    """
    grad = np.asarray(grad, dtype=float)
    beta = np.asarray(beta, dtype=float)
    active = beta != 0
    worst = 0.0
    if np.any(~active):
        worst = max(worst, float(np.max(np.abs(grad[~active]) - lam)))
    if np.any(active):
        worst = max(worst, float(np.max(np.abs(grad[active] + lam * np.sign(beta[active])))))
    return max(worst, 0.0)

"""Desparsified smoothed-rank estimator and coordinate-wise confidence intervals.

Pipeline on the target cohort, given a (penalized) estimate ``beta_hat``:

1. ``eta = spr_gradient(beta_hat)`` and ``H = spr_hessian(beta_hat)``;
2. ``Theta``, an L1-minimal approximate inverse of ``H`` (CLIME);
3. ``beta_tilde = beta_hat + Theta @ eta``;
4. intervals ``beta_tilde_j +- sqrt(Theta_j' G Theta_j) z / sqrt(n0)`` with the
   sandwich ``G`` built from the U-statistic projection of ``eta``.
"""
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from ._validation import check_coef
from .detection import assign_folds
from .kernels import _resolve_sigma, sigmoid_d1, spr_gradient, spr_hessian

__all__ = [
    "CLIMEInfeasibleError",
    "GammaSelectionError",
    "ClampedVarianceWarning",
    "PrecisionEstimate",
    "InferenceResult",
    "clime_inverse",
    "default_gamma_grid",
    "select_gamma",
    "desparsify",
    "variance_sandwich",
    "confidence_intervals",
    "tangent_projector",
    "sphere_curvature",
    "rate_gamma",
    "infer",
]

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class CLIMEInfeasibleError(ValueError):
    def __init__(self, column, gamma):
        super().__init__(f"CLIME program infeasible for column {column} at gamma={gamma:g}")
        self.column = column
        self.gamma = gamma


class GammaSelectionError(ValueError):
    pass


class ClampedVarianceWarning(RuntimeWarning):
    pass


def _max_abs(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True, eq=False)
class PrecisionEstimate:
    """Approximate inverse of a curvature matrix.

    ``theta`` is the symmetrized matrix used downstream; ``theta_raw`` the
    row-wise LP solution. ``feasibility_gap`` is ``||Theta_raw H - I||_max``
    and ``symmetric_gap`` the same quantity for ``theta``.
    """

    theta: np.ndarray
    gamma: float
    feasibility_gap: float
    symmetric_gap: float
    theta_raw: np.ndarray = field(repr=False)


def _clime_row(H, j, gamma):
    p = H.shape[0]
    e = np.zeros(p)
    e[j] = 1.0
    # theta = u - v with u, v >= 0; |H theta - e_j| <= gamma elementwise
    A = np.hstack([H, -H])
    res = optimize.linprog(
        np.ones(2 * p),
        A_ub=np.vstack([A, -A]),
        b_ub=np.concatenate([e + gamma, gamma - e]),
        bounds=(0, None),
        method="highs",
        options=_LP_OPTIONS,
    )
    if res.status == 2:
        raise CLIMEInfeasibleError(j, gamma)
    if res.status != 0:
        # HiGHS can stall on nearly infeasible programs; settle it with the
        # smallest achievable residual
        if _min_residual(H, e) > gamma:
            raise CLIMEInfeasibleError(j, gamma)
        raise RuntimeError(f"CLIME LP for column {j} failed: {res.message}")
    return res.x[:p] - res.x[p:]


def _min_residual(H, e):
    """``min_theta ||H theta - e||_max`` (always feasible)."""
    p = H.shape[0]
    ones = np.ones((p, 1))
    c = np.zeros(p + 1)
    c[-1] = 1.0
    res = optimize.linprog(
        c,
        A_ub=np.vstack([np.hstack([H, -ones]), np.hstack([-H, -ones])]),
        b_ub=np.concatenate([e, -e]),
        bounds=[(None, None)] * p + [(0, None)],
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"residual LP failed: {res.message}")
    return float(res.x[-1])


def _symmetrize(theta):
    t = theta.T
    return np.where(np.abs(theta) <= np.abs(t), theta, t)


def clime_inverse(H, gamma):
    """L1-minimal ``Theta`` with ``||Theta H - I||_max <= gamma``.

    The program decouples over rows of ``Theta`` (columns of ``Theta'``):
    each is a linear program minimizing its L1 norm, which also minimizes
    the largest absolute row sum ``||Theta||_inf``.

    Parameters
    ----------
    H : array of shape (p, p)
        Symmetric matrix.
    gamma : float
        Nonnegative constraint level.

    Returns
    -------
    PrecisionEstimate

    Raises
    ------
    CLIMEInfeasibleError
        If some row has no feasible solution at ``gamma``.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be a square matrix")
    if not np.allclose(H, H.T, rtol=1e-10, atol=1e-12):
        raise ValueError("H must be symmetric")
    gamma = float(gamma)
    if not gamma >= 0:
        raise ValueError("gamma must be nonnegative")
    p = H.shape[0]
    raw = np.array([_clime_row(H, j, gamma) for j in range(p)]).reshape(p, p)
    eye = np.eye(p)
    sym = _symmetrize(raw)
    return PrecisionEstimate(sym, gamma, _max_abs(raw @ H - eye), _max_abs(sym @ H - eye), raw)


def default_gamma_grid(H, size=20):
    """``size`` log-spaced levels from ``0.01 ||H||_max`` to ``||I - H/||H||_max||_max``."""
    H = np.asarray(H, dtype=float)
    hmax = _max_abs(H)
    if hmax == 0:
        raise ValueError("H is identically zero")
    lo = 0.01 * hmax
    hi = _max_abs(np.eye(H.shape[0]) - H / hmax)
    if hi <= lo:
        return np.array([lo])
    return np.geomspace(lo, hi, size)


def select_gamma(target, beta_hat, folds=5, grid=None, seed=0, sigma=None,
                 curvature=None):
    """Cross-validated CLIME level.

    For each fold, ``Theta`` is fitted on the training-fold Hessian and scored
    by ``||Theta H_valid - I||_max`` on the held-out fold. Fold Hessians use
    the bandwidth of the full target (``n0 ** -0.5`` by default). Levels that
    are infeasible on a fold score ``inf``; ties go to the larger level.
    ``curvature``, if given, maps every Hessian before use (see
    :func:`sphere_curvature`).

    Returns
    -------
    float
    """
    beta_hat = check_coef(beta_hat, target.p)
    sig = _resolve_sigma(sigma, target.n)
    curvature = curvature or (lambda H: H)
    if grid is None:
        grid = default_gamma_grid(curvature(spr_hessian(beta_hat, target, sig)))
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise GammaSelectionError("gamma grid is empty")
    if grid.size == 1:
        return float(grid[0])
    labels = assign_folds(target.n, folds, seed)
    eye = np.eye(target.p)
    loss = np.zeros(grid.size)
    for r in range(folds):
        train = target.subset(np.flatnonzero(labels != r))
        valid = target.subset(np.flatnonzero(labels == r))
        H_tr = curvature(spr_hessian(beta_hat, train, sig))
        H_va = curvature(spr_hessian(beta_hat, valid, sig))
        fold_loss = np.full(grid.size, np.inf)
        for g, gamma in enumerate(grid):
            try:
                theta = clime_inverse(H_tr, gamma).theta
            except CLIMEInfeasibleError:
                continue
            fold_loss[g] = _max_abs(theta @ H_va - eye)
        if not np.isfinite(fold_loss).any():
            raise GammaSelectionError(f"every gamma in the grid is infeasible on fold {r}")
        loss += fold_loss
    best = np.flatnonzero(loss == loss.min())
    return float(grid[best].max())


def desparsify(target, beta_hat, theta, sigma=None):
    """One-step correction ``beta_hat + Theta @ spr_gradient(beta_hat)``."""
    beta_hat = check_coef(beta_hat, target.p)
    theta = theta.theta if isinstance(theta, PrecisionEstimate) else np.asarray(theta, float)
    if theta.shape != (target.p, target.p):
        raise ValueError(f"theta must have shape ({target.p}, {target.p})")
    eta = spr_gradient(beta_hat, target, sigma)
    return beta_hat + theta @ eta


def variance_sandwich(target, beta_hat, sigma=None):
    """Empirical second moment of the projection of the smoothed-rank gradient.

    Row ``l`` of the projection is
    ``n0^-1 sum_i [d_i I(y_l >= Y_i) S'(s_l - s_i)(x_l - X_i)
                   + d_l I(Y_i >= y_l) S'(s_i - s_l)(X_i - x_l)]``
    with ``s = X beta``; ``G`` is ``n0^-1`` times the sum of its outer products.
    """
    beta_hat = check_coef(beta_hat, target.p)
    n = target.n
    if n < 2:
        raise ValueError("variance_sandwich needs at least two observations")
    sig = _resolve_sigma(sigma, n)
    t, d, X = target.time, target.event.astype(float), target.X
    s = X @ beta_hat
    diff = s[:, None] - s[None, :]                                  # [l, i] = s_l - s_i
    c1 = d[None, :] * (t[:, None] >= t[None, :]) * sigmoid_d1(diff, sig)
    c2 = d[:, None] * (t[None, :] >= t[:, None]) * sigmoid_d1(-diff, sig)
    K = c1 - c2
    # sum_i K_li (x_l - X_i) = x_l * rowsum(K) - (K X)_l
    A = (K.sum(axis=1)[:, None] * X - K @ X) / n
    G = A.T @ A / n
    return 0.5 * (G + G.T)


@dataclass(frozen=True, eq=False)
class InferenceResult:
    beta_tilde: np.ndarray
    G_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    half_width: np.ndarray
    alpha: float
    clamped: np.ndarray
    precision: PrecisionEstimate = None
    beta_hat: np.ndarray = None
    theta_used: np.ndarray = None

    @property
    def p(self):
        return self.beta_tilde.shape[0]

    def covers(self, beta_true):
        beta_true = np.asarray(beta_true, dtype=float)
        return (self.lo <= beta_true) & (beta_true <= self.hi)

    def rows(self):
        return [
            {"coordinate": j, "estimate": float(self.beta_tilde[j]), "lo": float(self.lo[j]),
             "hi": float(self.hi[j]), "half_width": float(self.half_width[j]),
             "clamped_flag": int(self.clamped[j])}
            for j in range(self.p)
        ]

    def to_csv(self, path):
        cols = ["coordinate", "estimate", "lo", "hi", "half_width", "clamped_flag"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, cols)
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})


def confidence_intervals(beta_tilde, theta, G, n0, alpha=0.05):
    """Symmetric normal intervals ``beta_tilde_j +- sqrt(Theta_j' G Theta_j) z / sqrt(n0)``.

    ``z`` is the upper ``alpha/2`` normal quantile. Negative quadratic forms
    (round-off) are clamped to zero and flagged. ``alpha = 1`` gives
    zero-width intervals.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    precision = theta if isinstance(theta, PrecisionEstimate) else None
    theta = precision.theta if precision is not None else np.asarray(theta, dtype=float)
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    G = np.asarray(G, dtype=float)
    quad = np.einsum("jk,kl,jl->j", theta, G, theta)
    clamped = quad < 0
    if clamped.any():
        warnings.warn(f"clamped {int(clamped.sum())} negative variance(s) to zero",
                      ClampedVarianceWarning, stacklevel=2)
    quad = np.where(clamped, 0.0, quad)
    z = stats.norm.ppf(1 - alpha / 2) if alpha < 1 else 0.0
    half = np.sqrt(quad) * z / math.sqrt(n0)
    return InferenceResult(beta_tilde, G, beta_tilde - half, beta_tilde + half, half,
                           float(alpha), clamped, precision)


def tangent_projector(beta):
    """``I - b b'`` for ``b = beta / ||beta||``."""
    b = np.asarray(beta, dtype=float)
    b = b / np.linalg.norm(b)
    return np.eye(b.shape[0]) - np.outer(b, b)


def sphere_curvature(H, beta):
    """Curvature restricted to the tangent space of the unit sphere at ``beta``.

    Returns ``P H P + kappa b b'`` with ``kappa = tr(P H P) / (p - 1)``; the
    added rank-one term makes the matrix invertible and is annihilated by
    ``P`` downstream.
    """
    H = np.asarray(H, dtype=float)
    P = tangent_projector(beta)
    b = np.asarray(beta, dtype=float) / np.linalg.norm(beta)
    HP = P @ H @ P
    HP = 0.5 * (HP + HP.T)
    p = H.shape[0]
    kappa = np.trace(HP) / (p - 1) if p > 1 else 1.0
    return HP + kappa * np.outer(b, b)


def rate_gamma(H, n0, const=2.0):
    """``const * ||H||_max * sqrt(log p / n0)``."""
    H = np.asarray(H, dtype=float)
    p = H.shape[0]
    return const * _max_abs(H) * math.sqrt(math.log(max(p, 2)) / n0)


def infer(target, beta_hat, alpha=0.05, gamma="rate", geometry="sphere", folds=5,
          seed=0, sigma=None, grid=None, gamma_const=2.0):
    """Full desparsified-interval pipeline on the target cohort.

    The rank objective is invariant to the scale of ``beta`` in the limit of
    small bandwidth, so its curvature is singular along ``beta``. With
    ``geometry="sphere"`` (default) ``beta_hat`` is rescaled to unit norm and
    the one-step correction and its variance are confined to the tangent
    space ``P = I - b b'``: ``beta_tilde = b + P Theta P eta`` with ``Theta``
    the CLIME inverse of :func:`sphere_curvature`. Intervals then target the
    unit-norm coefficient vector. ``geometry="euclidean"`` applies the
    formulas to ``beta_hat`` as given.

    Parameters
    ----------
    target : SurvivalDataset
    beta_hat : array of shape (p,)
        Initial (e.g. transfer) estimate.
    alpha : float
    gamma : float, "rate" or "cv"
        CLIME level. ``"rate"`` is ``gamma_const * ||H||_max * sqrt(log p / n0)``;
        ``"cv"`` uses :func:`select_gamma` with ``folds``, ``seed`` and ``grid``.
    geometry : {"sphere", "euclidean"}
    sigma : float, optional
        Bandwidth; ``n0 ** -0.5`` when omitted.

    Returns
    -------
    InferenceResult
    """
    if geometry not in ("sphere", "euclidean"):
        raise ValueError(f"unknown geometry {geometry!r}")
    beta_hat = check_coef(beta_hat, target.p)
    if geometry == "sphere":
        if not np.any(beta_hat):
            raise ValueError("sphere geometry needs a nonzero beta_hat")
        beta_hat = beta_hat / np.linalg.norm(beta_hat)
        curvature = lambda H: sphere_curvature(H, beta_hat)  # noqa: E731
    else:
        curvature = lambda H: H  # noqa: E731
    H = curvature(spr_hessian(beta_hat, target, sigma))
    if isinstance(gamma, str):
        if gamma == "rate":
            gamma = rate_gamma(H, target.n, gamma_const)
        elif gamma == "cv":
            gamma = select_gamma(target, beta_hat, folds=folds, grid=grid, seed=seed,
                                 sigma=sigma, curvature=curvature)
        else:
            raise ValueError(f"unknown gamma rule {gamma!r}")
    precision = clime_inverse(H, gamma)
    if geometry == "sphere":
        P = tangent_projector(beta_hat)
        theta = P @ precision.theta @ P
        theta = 0.5 * (theta + theta.T)
    else:
        theta = precision.theta
    beta_tilde = desparsify(target, beta_hat, theta, sigma)
    G = variance_sandwich(target, beta_hat, sigma)
    res = confidence_intervals(beta_tilde, theta, G, target.n, alpha)
    return InferenceResult(res.beta_tilde, res.G_hat, res.lo, res.hi, res.half_width,
                           res.alpha, res.clamped, precision, beta_hat, theta)

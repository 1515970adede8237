"""Input validation helpers shared by the functional API and the estimators."""
import numbers

import numpy as np
from sklearn.utils import check_array


class DegenerateDataError(ValueError):
    """Raised when data admit no comparable pairs or are otherwise degenerate."""


def check_survival_y(y, n_samples=None):
    """Split a survival target into ``(time, event)`` arrays.

    ``y`` is either a structured array with one float field and one bool/int
    field, or an ``(n, 2)`` array whose columns are time and event status.
    """
    if isinstance(y, np.ndarray) and y.dtype.names is not None:
        if len(y.dtype.names) != 2:
            raise ValueError("structured survival target needs exactly two fields")
        event_field = next(
            (f for f in y.dtype.names if y.dtype[f].kind in "bi"), y.dtype.names[0]
        )
        time_field = next(f for f in y.dtype.names if f != event_field)
        time = np.asarray(y[time_field], dtype=float)
        event = np.asarray(y[event_field]).astype(float)
    else:
        arr = check_array(y, ensure_2d=True, dtype=float)
        if arr.shape[1] != 2:
            raise ValueError(
                f"survival target must have 2 columns (time, event), got {arr.shape[1]}"
            )
        time, event = arr[:, 0].copy(), arr[:, 1].copy()
    if not np.all(np.isfinite(time)) or np.any(time < 0):
        raise ValueError("survival times must be finite and nonnegative")
    if not np.all(np.isin(event, (0.0, 1.0))):
        raise ValueError("event indicators must be 0 or 1")
    if n_samples is not None and time.shape[0] != n_samples:
        raise ValueError(
            f"X has {n_samples} rows but the survival target has {time.shape[0]}"
        )
    return time, event.astype(np.int8)


def check_X_y_survival(X, y):
    X = check_array(X, dtype=float)
    time, event = check_survival_y(y, X.shape[0])
    if X.shape[0] < 2:
        raise ValueError("need at least two observations for pairwise objectives")
    return X, time, event


def check_coef(beta, p):
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.shape[0] != p:
        raise ValueError(f"coefficient vector must have shape ({p},), got {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("coefficient vector contains non-finite entries")
    return beta


def check_sigma(sigma):
    if not isinstance(sigma, numbers.Real) or not sigma > 0:
        raise ValueError(f"smoothing bandwidth must be a positive real, got {sigma!r}")
    return float(sigma)


def unit_normalize(beta):
    """Return ``beta / ||beta||_2``; the zero vector is returned unchanged."""
    beta = np.asarray(beta, dtype=float)
    norm = np.linalg.norm(beta)
    if norm == 0:
        return beta.copy()
    return beta / norm

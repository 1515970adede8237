import numpy as np
import pytest

from ranktransfer.data import SurvivalDataset


def random_dataset(rng, n, p, censor=0.3, label="cohort"):
    """Tie-free random cohort with roughly ``censor`` censored observations."""
    X = rng.standard_normal((n, p))
    time = rng.exponential(1.0, n) + rng.uniform(0, 1e-3, n)
    event = (rng.uniform(size=n) > censor).astype(int)
    if event.sum() == 0:
        event[0] = 1
    return SurvivalDataset(time, event, X, label=label)


def as_lists(data):
    return data.time.tolist(), data.event.tolist(), data.X.tolist()


class Quadratic:
    """``0.5 b'Ab - c'b`` exposed through the solver's loss protocol."""

    def __init__(self, A, c):
        self.A = np.asarray(A, dtype=float)
        self.c = np.asarray(c, dtype=float)

    def value_and_grad(self, beta):
        return 0.5 * beta @ self.A @ beta - self.c @ beta, self.A @ beta - self.c


def lasso_cd(A, c, lam, iters=5000):
    """Coordinate-descent minimizer of ``0.5 b'Ab - c'b + lam ||b||_1``."""
    p = len(c)
    b = np.zeros(p)
    for _ in range(iters):
        old = b.copy()
        for j in range(p):
            r = c[j] - A[j] @ b + A[j, j] * b[j]
            b[j] = np.sign(r) * max(abs(r) - lam, 0.0) / A[j, j]
        if np.max(np.abs(b - old)) < 1e-13:
            break
    return b


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _isolated_output_dir(tmp_path, monkeypatch):
    # keep default-path writes out of the working tree
    monkeypatch.setenv("RANKTRANSFER_OUTPUT_DIR", str(tmp_path / "default_out"))

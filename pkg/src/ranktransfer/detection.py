"""Cross-validated C-index screening of candidate source cohorts.

The target is split once into folds. For each fold, a target-only pooled
fit on the remaining folds sets the baseline held-out C-index; a fit that
adds source ``k`` gives source ``k``'s held-out C-index. A source is kept
when its fold-averaged C-index strictly exceeds the baseline average.
"""
import csv
from dataclasses import dataclass

import numpy as np

from ._validation import DegenerateDataError
from .kernels import c_index, comparable_pairs

__all__ = ["DetectionReport", "SourceScore", "assign_folds", "detect"]


@dataclass(frozen=True)
class SourceScore:
    index: int
    label: str
    c_index: float
    gain: float
    selected: bool


@dataclass(frozen=True, eq=False)
class DetectionReport:
    threshold: float
    per_source: tuple
    fold_assignments: np.ndarray
    seed: int
    fold_c_index: np.ndarray

    @property
    def selected(self):
        return tuple(s.index for s in self.per_source if s.selected)

    def rows(self):
        return [
            {"source_label": s.label, "c_index": s.c_index, "threshold": self.threshold,
             "gain": s.gain, "selected": int(s.selected)}
            for s in self.per_source
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, ["source_label", "c_index", "threshold", "gain", "selected"]
            )
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})

    def format_table(self):
        lines = [f"threshold C-index: {self.threshold:.3f}"]
        for s in self.per_source:
            mark = "selected" if s.selected else "rejected"
            lines.append(f"{s.label:>16}  C={s.c_index:.3f}  gain={s.gain:+.3f}  {mark}")
        return "\n".join(lines)


def assign_folds(n, folds, seed):
    """Random fold label per observation; fold sizes differ by at most one."""
    if folds < 1 or folds > n:
        raise ValueError(f"cannot split {n} observations into {folds} folds")
    rng = np.random.default_rng(seed)
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % folds
    return labels


def detect(target, sources, folds=3, seed=0, config=None):
    """Screen ``sources`` for transferability to ``target``.

    Parameters
    ----------
    target : SurvivalDataset
    sources : list of SurvivalDataset
    folds : int
        Number of target folds (at least 2).
    seed : int
        Drives the fold split only.
    config : SolverConfig, optional

    Returns
    -------
    DetectionReport
    """
    from .transfer import SolverConfig, fit_penalized

    if folds < 2:
        raise ValueError("detection needs at least two folds")
    config = config or SolverConfig()
    labels = assign_folds(target.n, folds, seed)

    splits = []
    for r in range(folds):
        test_idx = np.flatnonzero(labels == r)
        train_idx = np.flatnonzero(labels != r)
        held_out = target.subset(test_idx, label=f"{target.label}[fold {r}]")
        if comparable_pairs(held_out.time, held_out.event)[0].size == 0:
            raise DegenerateDataError(f"fold {r} of the target has no comparable pairs")
        splits.append((target.subset(train_idx), held_out))

    def held_out_c(extra):
        scores = []
        for train, held_out in splits:
            beta = fit_penalized([train] + extra, config).beta
            scores.append(c_index(beta, held_out))
        return np.array(scores)

    base = held_out_c([])
    threshold = float(base.mean())
    per_source, fold_scores = [], [base]
    for k, src in enumerate(sources):
        ck = held_out_c([src])
        fold_scores.append(ck)
        mean_k = float(ck.mean())
        per_source.append(
            SourceScore(k, src.label, mean_k, mean_k - threshold, mean_k > threshold)
        )
    return DetectionReport(threshold, tuple(per_source), labels, seed,
                           np.vstack(fold_scores))

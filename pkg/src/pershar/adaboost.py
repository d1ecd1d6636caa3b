"""Multiclass AdaBoost (SAMME) over decision stumps with prior sample weights.

Personalization enters only through the initial weight distribution: a
sample's prior is the similarity of its subject to the test subject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PRIOR_FLOOR = 1e-12
ALPHA_CAP = 30.0
ZERO_ERROR = 1e-12
DEFAULT_ROUNDS = 100

# Weighted errors closer than this are treated as ties and resolved by
# candidate order; keeps selection stable against summation-order noise.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Stump:
    """``x[feature_index] <= threshold`` predicts ``left_label``, else ``right_label``.

    Labels are indices into the model's label set.
    """

    feature_index: int
    threshold: float
    left_label: int
    right_label: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.where(X[:, self.feature_index] <= self.threshold, self.left_label, self.right_label)


@dataclass(frozen=True)
class BoostModel:
    stumps: tuple[Stump, ...]
    alphas: tuple[float, ...]
    label_set: tuple
    n_features: int

    def __post_init__(self):
        if not self.stumps or len(self.stumps) != len(self.alphas):
            raise ValueError("a boost model needs at least one round and one alpha per stump")
        if not all(math.isfinite(a) for a in self.alphas):
            raise ValueError("non-finite alpha")

    @property
    def rounds(self):
        return list(zip(self.stumps, self.alphas))

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"dimension mismatch: model expects {self.n_features} features, got {X.shape[1]}")
        V = np.zeros((X.shape[0], len(self.label_set)))
        rows = np.arange(X.shape[0])
        for stump, alpha in zip(self.stumps, self.alphas):
            V[rows, stump.predict(X)] += alpha
        return V

    def predict_index(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def predict(self, X) -> list:
        return [self.label_set[i] for i in self.predict_index(X)]

    def dump(self) -> str:
        lines = []
        for t, (s, a) in enumerate(zip(self.stumps, self.alphas), start=1):
            lines.append(f"{t},{a!r},{s.feature_index},{s.threshold!r},"
                         f"{self.label_set[s.left_label]},{self.label_set[s.right_label]}")
        return "\n".join(lines) + "\n"


def predict(model: BoostModel, feature_vector):
    """Class of a single feature vector."""
    x = np.asarray(feature_vector, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict takes one feature vector; use BoostModel.predict for batches")
    return model.predict(x[None, :])[0]


def normalize_priors(priors) -> np.ndarray:
    """Normalize, floor at ``PRIOR_FLOOR`` and renormalize to sum 1."""
    p = np.asarray(priors, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("priors must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or p.sum() <= 0:
        raise ValueError("priors must be finite, non-negative and not all zero")
    p = p / p.sum()
    p = np.maximum(p, PRIOR_FLOOR)
    return p / p.sum()


def _pick(values: np.ndarray, best: float) -> int:
    return int(np.flatnonzero(values >= best - TIE_TOL)[0])


class StumpSearch:
    """Exhaustive stump search over a fixed sample matrix.

    Sorting and candidate thresholds depend only on ``X``, so they are
    computed once and reused across boosting rounds.
    """

    def __init__(self, X, y, n_classes: int | None = None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=int)
        n, self.k = X.shape
        if n == 0:
            raise ValueError("best_stump needs at least one sample")
        if self.y.shape != (n,):
            raise ValueError("labels must align with samples")
        self.n = n
        self.C = int(n_classes if n_classes is not None else self.y.max() + 1)
        self.first_value = float(X[0, 0])
        self.order = np.argsort(X.T, axis=1, kind="stable")
        xs = np.take_along_axis(X.T, self.order, axis=1)
        self.valid = xs[:, 1:] > xs[:, :-1]
        self.thresholds = (xs[:, 1:] + xs[:, :-1]) / 2.0

    def best(self, weights) -> Stump:
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.n,):
            raise ValueError("weights must align with samples")
        per_class = np.zeros((self.C, self.n))
        per_class[self.y, np.arange(self.n)] = w
        total = per_class.sum(axis=1)
        if not self.valid.any():
            # every feature constant: predict the weighted majority everywhere
            c = _pick(total, total.max())
            return Stump(0, self.first_value, c, c)
        # class-major (C, k, n-1) cumulative weight left of each cut
        left = np.cumsum(per_class[:, self.order], axis=2)[:, :, :-1]
        best_left = left[0].copy()
        best_right = total[0] - left[0]
        for c in range(1, self.C):
            np.maximum(best_left, left[c], out=best_left)
            np.maximum(best_right, total[c] - left[c], out=best_right)
        err = total.sum() - best_left - best_right
        err[~self.valid] = np.inf
        f, i = np.unravel_index(np.argmax(err <= err.min() + TIE_TOL), err.shape)
        lw = left[:, f, i]
        rw = total - lw
        return Stump(int(f), float(self.thresholds[f, i]), _pick(lw, lw.max()), _pick(rw, rw.max()))


def best_stump(X, y, weights, n_classes: int | None = None) -> Stump:
    """Stump with the least weighted 0-1 error.

    Candidates are every feature, every midpoint between consecutive
    distinct values of that feature, and every (left, right) label pair.
    Ties go to the lowest feature index, then the lowest threshold, then
    the lowest left and right labels.
    """
    return StumpSearch(X, y, n_classes).best(weights)


def train(X, labels: Sequence, priors=None, rounds: int = DEFAULT_ROUNDS,
          label_set: Sequence | None = None, return_trace: bool = False):
    """SAMME boosting starting from the prior distribution ``priors``.

    ``priors=None`` means uniform. ``label_set`` fixes the class order
    (defaults to the sorted distinct labels). With ``return_trace`` the
    per-round weight distributions are returned alongside the model.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if rounds < 1:
        raise ValueError("rounds must be a positive integer")
    if len(labels) != n:
        raise ValueError("labels must align with samples")
    label_set = tuple(sorted(set(labels))) if label_set is None else tuple(label_set)
    index = {c: i for i, c in enumerate(label_set)}
    try:
        y = np.array([index[c] for c in labels], dtype=int)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in label_set") from None
    if np.unique(y).size < 2:
        raise ValueError("AdaBoost needs at least two classes in the training data")
    C = len(label_set)
    D = normalize_priors(np.ones(n) if priors is None else priors)
    if D.shape != (n,):
        raise ValueError("priors must align with samples")

    search = StumpSearch(X, y, C)
    stumps, alphas, trace = [], [], [D.copy()]
    for _ in range(rounds):
        stump = search.best(D)
        miss = stump.predict(X) != y
        err = float(D[miss].sum())
        if err >= 1.0 - 1.0 / C:
            if not stumps:
                # no better-than-chance learner exists; keep it as a plain classifier
                stumps.append(stump)
                alphas.append(1.0)
            break
        if err <= ZERO_ERROR:
            stumps.append(stump)
            alphas.append(ALPHA_CAP)
            break
        alpha = min(math.log((1.0 - err) / err) + math.log(C - 1), ALPHA_CAP)
        stumps.append(stump)
        alphas.append(alpha)
        D = D * np.where(miss, math.exp(alpha), 1.0)
        D = D / D.sum()
        trace.append(D.copy())

    model = BoostModel(tuple(stumps), tuple(alphas), label_set, X.shape[1])
    return (model, trace) if return_trace else model

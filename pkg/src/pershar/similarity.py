"""Subject distances, exponential similarity kernels and neighbour selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .features import FeatureVector, _as_array, fit_standardizer

KINDS = ("physical", "sensor", "physical_sensor")


@dataclass(frozen=True)
class SimilarityConfig:
    """``gamma=None`` selects the median heuristic; a float fixes the scale."""

    kind: str = "physical"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown similarity kind {self.kind!r}; expected one of {KINDS}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("fixed gamma must be positive")

    @property
    def gamma_mode(self) -> str:
        return "median_heuristic" if self.gamma is None else "fixed"


def euclidean(a, b) -> float:
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.dot(d, d)))


def similarity(a, b, gamma: float) -> float:
    """exp(-gamma * d(a, b))."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return math.exp(-gamma * euclidean(a, b))


def select_gamma(distances) -> float:
    """ln 2 over the median positive distance, so the median pair scores 0.5."""
    d = np.asarray(list(distances), dtype=float)
    pos = d[d > 0]
    if pos.size == 0:
        raise ValueError("cannot select gamma: all pairwise distances are zero")
    return math.log(2.0) / float(np.median(pos))


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        diff = X[i + 1:] - X[i]
        D[i, i + 1:] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return D + D.T


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    subject_ids: tuple[str, ...]
    values: np.ndarray
    kind: str
    gamma_used: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        v = np.array(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.subject_ids)})

    def index(self, subject_id: str) -> int:
        try:
            return self._index[subject_id]
        except KeyError:
            raise KeyError(f"subject {subject_id!r} not in similarity matrix") from None

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.index(a), self.index(b)])

    def row(self, subject_id: str) -> dict[str, float]:
        r = self.values[self.index(subject_id)]
        return dict(zip(self.subject_ids, map(float, r)))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(["subject_id", *self.subject_ids]) + "\n")
            for sid, r in zip(self.subject_ids, self.values):
                fh.write(",".join([sid, *(f"{x:.6f}" for x in r)]) + "\n")


def _kernel(vectors: np.ndarray, gamma: float | None) -> tuple[np.ndarray, float]:
    Z = fit_standardizer(list(vectors)).apply(vectors)
    D = pairwise_distances(Z)
    if gamma is None:
        upper = D[np.triu_indices(D.shape[0], k=1)]
        # identical subjects score 1 under any scale
        gamma = select_gamma(upper) if np.any(upper > 0) else 1.0
    S = np.exp(-gamma * D)
    np.fill_diagonal(S, 1.0)
    return np.maximum(S, np.finfo(float).tiny), gamma


def build_matrix(kind: str, subjects, signatures: Mapping[str, FeatureVector] | None = None,
                 config: SimilarityConfig | None = None) -> SimilarityMatrix:
    """Similarity of every subject pair for one of ``KINDS``.

    Physical vectors are ``(sex, age, weight, height)``; sensor vectors are
    the subjects' signatures. Each is z-scored across ``subjects`` before
    the distance; the combined kind multiplies the two kernels.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown similarity kind {kind!r}")
    config = config or SimilarityConfig(kind)
    subjects = list(subjects)
    if len(subjects) < 2:
        raise ValueError("similarity needs at least two subjects")
    ids = [s.subject_id for s in subjects]
    gammas = {}
    S = np.ones((len(ids), len(ids)))
    if kind in ("physical", "physical_sensor"):
        P = np.vstack([s.physical_vector() for s in subjects])
        Sp, gammas["physical"] = _kernel(P, config.gamma)
        S = S * Sp
    if kind in ("sensor", "physical_sensor"):
        if signatures is None:
            raise ValueError(f"{kind} similarity requires subject signatures")
        missing = [i for i in ids if i not in signatures]
        if missing:
            raise ValueError(f"missing signatures for subjects {missing}")
        G = np.vstack([_as_array(signatures[i]) for i in ids])
        Ss, gammas["sensor"] = _kernel(G, config.gamma)
        S = S * Ss
    return SimilarityMatrix(tuple(ids), S, kind, gammas)


def top_m_similar(matrix: SimilarityMatrix, test_subject: str, m: int) -> list[str]:
    """The ``m`` subjects most similar to ``test_subject``; ties go to the smaller id."""
    n_other = len(matrix.subject_ids) - 1
    if not 1 <= m <= n_other:
        raise ValueError(f"m={m} out of range [1, {n_other}]")
    row = matrix.values[matrix.index(test_subject)]
    others = [(-row[i], sid) for i, sid in enumerate(matrix.subject_ids) if sid != test_subject]
    others.sort()
    return [sid for _, sid in others[:m]]

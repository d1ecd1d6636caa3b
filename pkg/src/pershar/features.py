"""Hand-crafted window features, subject signatures and standardization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledWindow

EPS_SCALE = 1e-8

WINDOW_SPEC = "stats32"
SIGNATURE_SPEC = "stats32-meanstd64"

_AXES = ("x", "y", "z")
_PER_AXIS = ("mean", "std", "min", "max", "median", "iqr", "zero_crossings", "energy")

FEATURE_NAMES = tuple(
    [f"{a}_{s}" for a in _AXES for s in _PER_AXIS]
    + ["corr_xy", "corr_xz", "corr_yz", "mag_mean", "mag_std"]
    + [f"{a}_mad" for a in _AXES]
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    spec_id: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.spec_id}: feature vector has non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _as_array(v) -> np.ndarray:
    return v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=float)


def upward_zero_crossings(x: np.ndarray) -> int:
    """Count negative-to-nonnegative transitions of the mean-removed signal."""
    s = x - x.mean()
    return int(np.count_nonzero((s[:-1] < 0) & (s[1:] >= 0)))


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    den = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if den == 0:
        return 0.0
    return float(np.clip(np.dot(da, db) / den, -1.0, 1.0))


def extract_features(window) -> FeatureVector:
    """32 statistics of a tri-axial window, ordered as ``FEATURE_NAMES``."""
    x = window.samples if isinstance(window, LabeledWindow) else np.asarray(window, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != 3:
        raise ValueError(f"expected a non-empty (n, 3) window, got shape {x.shape}")
    mean = x.mean(axis=0)
    q25, med, q75 = np.percentile(x, [25, 50, 75], axis=0)
    out = []
    for j in range(3):
        col = x[:, j]
        out += [mean[j], col.std(), col.min(), col.max(), med[j], q75[j] - q25[j],
                upward_zero_crossings(col), np.mean(col * col)]
    out += [_corr(x[:, 0], x[:, 1]), _corr(x[:, 0], x[:, 2]), _corr(x[:, 1], x[:, 2])]
    mag = np.sqrt(np.sum(x * x, axis=1))
    out += [mag.mean(), mag.std()]
    out += list(np.mean(np.abs(x - mean), axis=0))
    return FeatureVector(np.array(out, dtype=float), WINDOW_SPEC)


def feature_matrix(windows) -> np.ndarray:
    """Stack window features into an ``(n_windows, 32)`` array."""
    if len(windows) == 0:
        return np.empty((0, N_FEATURES))
    return np.vstack([extract_features(w).values for w in windows])


def subject_signature(windows) -> FeatureVector:
    """Mean and std of a subject's window features (64 values). Labels are ignored."""
    if len(windows) == 0:
        raise ValueError("subject_signature needs at least one window")
    F = feature_matrix(windows)
    return FeatureVector(np.concatenate([F.mean(axis=0), F.std(axis=0)]), SIGNATURE_SPEC)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ValueError("standardizer scale must be positive")

    def apply(self, v):
        return apply_standardizer(self, v)

    def invert(self, v) -> np.ndarray:
        return _as_array(v) * self.scale + self.mean


def fit_standardizer(vectors, eps: float = EPS_SCALE) -> Standardizer:
    X = np.vstack([_as_array(v) for v in vectors])
    if X.shape[0] < 2:
        raise ValueError("fit_standardizer needs at least two vectors")
    mean = X.mean(axis=0)
    # a summed mean can be an ulp off a constant column, which eps would magnify
    const = np.all(X == X[0], axis=0)
    mean[const] = X[0, const]
    return Standardizer(mean, np.maximum(X.std(axis=0), eps))


def apply_standardizer(s: Standardizer, v):
    """Standardize one vector (returns FeatureVector) or a 2-D batch (returns array)."""
    arr = _as_array(v)
    if arr.shape[-1] != s.mean.shape[0]:
        raise ValueError(f"dimension mismatch: standardizer has {s.mean.shape[0]}, vector has {arr.shape[-1]}")
    out = (arr - s.mean) / s.scale
    if isinstance(v, FeatureVector):
        return FeatureVector(out, v.spec_id)
    return out


def dump_features_csv(windows, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "window_id"] + [f"f{i}" for i in range(N_FEATURES)])
        for win in windows:
            w.writerow([win.subject_id, win.window_id] + [repr(float(v)) for v in extract_features(win).values])

"""Synthetic populations with controllable inter- and intra-subject variability.

Each class is a mixture of sinusoids whose frequencies and amplitudes climb
a geometric ladder with the class index. Subjects belong to style clusters;
a cluster rescales a class's amplitude and tempo by ``exp(inter * u)`` and
shifts its phase, where ``u`` is the cluster's position in [-1, 1]. Per-window
Gaussian noise of scale ``intra`` models intra-subject variability.

Because a cluster's rescaling moves a class along the same ladder that
separates classes, a large enough inter-subject scale makes one cluster's
class k look like another cluster's class k+1, which is exactly the
situation subject weighting is meant to untangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import DatasetBundle, LabeledWindow, SubjectMeta, make_bundle

CLASS_LADDER = 1.3


@dataclass(frozen=True)
class PopulationSpec:
    n_subjects: int = 12
    n_classes: int = 4
    windows_per_class: int = 10
    window_length: int = 150
    rate: float = 50.0
    n_style_clusters: int = 2
    inter_subject_scale: float = 0.3
    intra_subject_scale: float = 0.3
    physical_style_correlation: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("n_subjects", "n_classes", "windows_per_class", "window_length", "n_style_clusters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.inter_subject_scale < 0 or self.intra_subject_scale < 0:
            raise ValueError("variability scales must be non-negative")


def subject_ids(spec: PopulationSpec) -> list[str]:
    width = max(2, len(str(spec.n_subjects - 1)))
    return [f"s{i:0{width}d}" for i in range(spec.n_subjects)]


def class_labels(spec: PopulationSpec) -> list[str]:
    width = max(2, len(str(spec.n_classes - 1)))
    return [f"a{k:0{width}d}" for k in range(spec.n_classes)]


def subject_clusters(spec: PopulationSpec) -> dict[str, int]:
    """Round-robin cluster assignment, keyed by subject id."""
    return {sid: i % spec.n_style_clusters for i, sid in enumerate(subject_ids(spec))}


def cluster_positions(n: int) -> np.ndarray:
    return np.zeros(1) if n == 1 else np.linspace(-1.0, 1.0, n)


def _physical(rng, pos: float | None) -> tuple[int, int, float, float]:
    if pos is None:
        sex = int(rng.random() < 0.5)
        age = rng.normal(40, 12)
        weight = rng.normal(72, 12)
        height = rng.normal(171, 9)
    else:
        sex = int(rng.random() < 0.2 + 0.6 * pos)
        age = rng.normal(25 + 30 * pos, 4)
        weight = rng.normal(58 + 30 * pos, 5)
        height = rng.normal(160 + 22 * pos, 4)
    return sex, int(max(18, round(age))), float(max(35.0, round(weight, 1))), float(max(140.0, round(height, 1)))


def generate_population(spec: PopulationSpec) -> DatasetBundle:
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.window_length) / spec.rate

    n_sin = rng.integers(2, 4, size=3)
    shape = [
        (rng.uniform(0.6, 1.6, n_sin[j]), rng.uniform(0.2, 0.6, n_sin[j]), rng.uniform(0, 2 * np.pi, n_sin[j]))
        for j in range(3)
    ]
    offsets = rng.uniform(-0.3, 0.3, 3)
    positions = cluster_positions(spec.n_style_clusters)
    phase_dirs = rng.choice([-1.0, 1.0], size=(spec.n_style_clusters, 3))

    def template(k: int, c: int) -> np.ndarray:
        u = positions[c]
        gain = CLASS_LADDER ** k * np.exp(spec.inter_subject_scale * u)
        out = np.empty((spec.window_length, 3))
        for j, (freqs, amps, phases) in enumerate(shape):
            shift = spec.inter_subject_scale * u * phase_dirs[c, j] * np.pi / 2
            waves = amps[:, None] * np.sin(2 * np.pi * gain * freqs[:, None] * t + (phases + shift)[:, None])
            out[:, j] = offsets[j] + gain * waves.sum(axis=0)
        return out

    templates = {(k, c): template(k, c) for k in range(spec.n_classes) for c in range(spec.n_style_clusters)}
    labels = class_labels(spec)
    clusters = subject_clusters(spec)
    subjects, windows = [], []
    for sid in subject_ids(spec):
        c = clusters[sid]
        pos = (positions[c] + 1) / 2 if spec.physical_style_correlation and spec.n_style_clusters > 1 else None
        subjects.append(SubjectMeta(sid, *_physical(rng, pos)))
        wid = 0
        for k, label in enumerate(labels):
            for _ in range(spec.windows_per_class):
                noise = spec.intra_subject_scale * rng.standard_normal((spec.window_length, 3))
                windows.append(LabeledWindow(sid, label, wid, templates[k, c] + noise, spec.rate))
                wid += 1
    return make_bundle("synth", subjects, windows, labels)

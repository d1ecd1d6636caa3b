"""Evaluation splits, the PML / PDL / DL runners and macro-averaged accuracy."""

from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import adaboost, convnet
from .datasets import DatasetBundle, LabeledWindow
from .features import SIGNATURE_SPEC, FeatureVector, feature_matrix
from .similarity import KINDS, SimilarityConfig, SimilarityMatrix, build_matrix, top_m_similar

log = logging.getLogger(__name__)

METHODS = ("PML", "PDL", "DL")
SPLITS = ("SI", "HYB")
RESULT_FIELDS = ["dataset", "method", "sim_kind", "split", "subject_id", "m", "n_test", "accuracy"]

PDL_START = 10
PDL_STEP = 5


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "SI"
    test_subject: str = ""
    hyb_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLITS:
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "HYB" and not 0 < self.hyb_fraction < 1:
            raise ValueError("hyb_fraction must lie strictly between 0 and 1")


@dataclass(frozen=True)
class Split:
    """Train/test windows. ``donated`` holds keys of test-subject windows moved into train."""

    train: tuple[LabeledWindow, ...]
    test: tuple[LabeledWindow, ...]
    donated: frozenset = frozenset()
    flagged: tuple[str, ...] = ()

    def __iter__(self):
        return iter((self.train, self.test))


def _require_subject(bundle: DatasetBundle, subject_id: str):
    if subject_id not in bundle.subject_ids:
        raise KeyError(f"unknown subject {subject_id!r}")


def make_si_split(bundle: DatasetBundle, test_subject: str) -> Split:
    _require_subject(bundle, test_subject)
    train = tuple(w for w in bundle.windows if w.subject_id != test_subject)
    test = tuple(w for w in bundle.windows if w.subject_id == test_subject)
    return Split(train, test)


def make_hyb_split(bundle: DatasetBundle, test_subject: str, fraction: float = 0.2, seed: int = 0) -> Split:
    """Move ``floor(fraction * n)`` (at least 1) of each test-subject class into training.

    A class with a single window cannot both donate and be tested; it
    donates nothing and is reported in ``flagged``.
    """
    _require_subject(bundle, test_subject)
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    own = bundle.windows_of(test_subject)
    rng = np.random.default_rng(seed)
    donated, flagged = set(), []
    for label in bundle.label_set:
        group = sorted((w for w in own if w.label == label), key=lambda w: w.window_id)
        if not group:
            continue
        if len(group) < 2:
            flagged.append(label)
            continue
        k = max(1, math.floor(fraction * len(group)))
        for i in rng.permutation(len(group))[:k]:
            donated.add(group[i].key)
    if flagged:
        log.warning("subject %s: classes %s have one window and donate nothing", test_subject, flagged)
    train = tuple(w for w in bundle.windows if w.subject_id != test_subject or w.key in donated)
    test = tuple(w for w in own if w.key not in donated)
    return Split(train, test, frozenset(donated), tuple(flagged))


def make_split(bundle: DatasetBundle, spec: SplitSpec) -> Split:
    if spec.mode == "SI":
        return make_si_split(bundle, spec.test_subject)
    return make_hyb_split(bundle, spec.test_subject, spec.hyb_fraction, spec.seed)


# --------------------------------------------------------------------------
# schedule and results


def pdl_schedule(available: int) -> list[int]:
    """m values 10, 15, 20, ... topped off with ``available`` itself."""
    if available < 1:
        raise ValueError("available must be at least 1")
    if available < PDL_START:
        return [available]
    ms = list(range(PDL_START, available + 1, PDL_STEP))
    if ms[-1] != available:
        ms.append(available)
    return ms


@dataclass(frozen=True)
class RunResult:
    dataset: str
    method: str
    sim_kind: str | None
    split: str
    subject_id: str
    m: int | None
    n_test: int
    accuracy: float

    def row(self) -> dict:
        return {
            "dataset": self.dataset, "method": self.method, "sim_kind": self.sim_kind or "",
            "split": self.split, "subject_id": self.subject_id,
            "m": "" if self.m is None else self.m, "n_test": self.n_test, "accuracy": repr(self.accuracy),
        }


def accuracy(predicted: Sequence, truth: Sequence) -> tuple[float, int]:
    n = len(truth)
    if n == 0:
        return math.nan, 0
    return sum(p == t for p, t in zip(predicted, truth)) / n, n


def write_results(results: Iterable[RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in results:
            w.writerow(r.row())


def read_results(path) -> list[RunResult]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append(RunResult(
                row["dataset"], row["method"], row["sim_kind"] or None, row["split"], row["subject_id"],
                int(row["m"]) if row["m"] else None, int(row["n_test"]), float(row["accuracy"]),
            ))
    return out


def macro_accuracy(results: Sequence[RunResult], group_by: Sequence[str]) -> list[dict]:
    """Unweighted mean accuracy per group: first over m within a subject, then over subjects."""
    results = list(results)
    if not results:
        raise ValueError("macro_accuracy needs at least one result")
    per_subject: dict[tuple, dict[str, list[float]]] = {}
    for r in results:
        key = tuple(getattr(r, g) for g in group_by)
        per_subject.setdefault(key, {}).setdefault(r.subject_id, []).append(r.accuracy)
    rows = []
    for key in sorted(per_subject, key=lambda k: tuple("" if v is None else str(v) for v in k)):
        subject_means = [float(np.mean(v)) for v in per_subject[key].values()]
        row = dict(zip(group_by, key))
        row["accuracy"] = float(np.mean(subject_means))
        row["n_subjects"] = len(subject_means)
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# runners


@dataclass(frozen=True)
class EngineConfig:
    """Knobs shared by all runs; ``net`` overrides apply to the reference convnet."""

    boost_rounds: int = adaboost.DEFAULT_ROUNDS
    gamma: float | None = None
    hyb_fraction: float = 0.2
    seed: int = 0
    net: dict = field(default_factory=dict)
    pdl_m: tuple[int, ...] | None = None


def derive_seed(master: int, *parts) -> int:
    """Stable 32-bit seed for one result cell, independent of run order."""
    words = [int(master) & 0xFFFFFFFF]
    for p in parts:
        words.append(zlib.crc32(str(p).encode()))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


_FEATURES: dict[int, tuple[DatasetBundle, dict]] = {}


def bundle_features(bundle: DatasetBundle) -> dict:
    """Window features keyed by ``(subject_id, window_id)``, computed once per bundle."""
    hit = _FEATURES.get(id(bundle))
    if hit is not None and hit[0] is bundle:
        return hit[1]
    F = feature_matrix(bundle.windows)
    table = {w.key: F[i] for i, w in enumerate(bundle.windows)}
    if len(_FEATURES) >= 4:
        _FEATURES.pop(next(iter(_FEATURES)))
    _FEATURES[id(bundle)] = (bundle, table)
    return table


def _features(bundle: DatasetBundle, windows) -> np.ndarray:
    table = bundle_features(bundle)
    return np.vstack([table[w.key] for w in windows])


def subject_signatures(bundle: DatasetBundle, split: Split, test_subject: str) -> dict:
    """Signatures from training windows, plus a label-free one for the test subject."""
    by_subject: dict[str, list[LabeledWindow]] = {}
    for w in split.train:
        if w.subject_id != test_subject:
            by_subject.setdefault(w.subject_id, []).append(w)
    by_subject[test_subject] = bundle.windows_of(test_subject)
    return {sid: _signature(_features(bundle, ws)) for sid, ws in by_subject.items()}


def _signature(F: np.ndarray) -> FeatureVector:
    # same arithmetic as features.subject_signature, on cached rows
    return FeatureVector(np.concatenate([F.mean(axis=0), F.std(axis=0)]), SIGNATURE_SPEC)


def similarity_for_split(bundle: DatasetBundle, split: Split, test_subject: str, kind: str,
                         gamma: float | None = None) -> SimilarityMatrix:
    train_ids = {w.subject_id for w in split.train} - {test_subject}
    subjects = [s for s in bundle.subjects if s.subject_id in train_ids or s.subject_id == test_subject]
    sigs = subject_signatures(bundle, split, test_subject) if kind != "physical" else None
    return build_matrix(kind, subjects, sigs, SimilarityConfig(kind, gamma))


def pml_priors(split: Split, matrix: SimilarityMatrix, test_subject: str) -> np.ndarray:
    """Unnormalized prior per training window: its subject's similarity to the test subject."""
    row = matrix.row(test_subject)
    return np.array([1.0 if w.key in split.donated else row[w.subject_id] for w in split.train])


def _check_si(split: Split, test_subject: str, mode: str):
    if mode == "SI" and any(w.subject_id == test_subject for w in split.train):
        raise AssertionError(f"SI split leaks subject {test_subject} into training")


def _net_config(bundle: DatasetBundle, cfg: EngineConfig, seed: int) -> convnet.NetConfig:
    return convnet.reference_config(bundle.window_length, len(bundle.label_set), seed=seed, **cfg.net)


def _evaluate_net(params, split: Split) -> tuple[float, int]:
    return accuracy(convnet.predict_windows(params, split.test), [w.label for w in split.test])


def pdl_training_set(split: Split, matrix: SimilarityMatrix, test_subject: str, m: int) -> list[LabeledWindow]:
    chosen = set(top_m_similar(matrix, test_subject, m))
    return [w for w in split.train if w.subject_id in chosen or w.key in split.donated]


def run_experiment(bundle: DatasetBundle, method: str, sim_kind: str | None, split_spec: SplitSpec,
                   config: EngineConfig | None = None) -> list[RunResult]:
    """Train and evaluate one method for one test subject.

    PML yields one result, PDL one per scheduled m, DL one.
    """
    config = config or EngineConfig()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method != "DL" and sim_kind not in KINDS:
        raise ValueError(f"{method} requires a similarity kind from {KINDS}")
    test_subject = split_spec.test_subject
    split = make_split(bundle, split_spec)
    _check_si(split, test_subject, split_spec.mode)
    if not split.test:
        raise ValueError(f"subject {test_subject} has no test windows")
    missing = {w.label for w in split.test} - {w.label for w in split.train}
    if missing:
        log.warning("subject %s: classes %s absent from training; those windows cannot be correct",
                    test_subject, sorted(missing))
    truth = [w.label for w in split.test]
    common = dict(dataset=bundle.name, split=split_spec.mode, subject_id=test_subject)

    if method == "PML":
        matrix = similarity_for_split(bundle, split, test_subject, sim_kind, config.gamma)
        priors = pml_priors(split, matrix, test_subject)
        model = adaboost.train(_features(bundle, split.train), [w.label for w in split.train], priors,
                               config.boost_rounds, label_set=bundle.label_set)
        acc, n = accuracy(model.predict(_features(bundle, split.test)), truth)
        return [RunResult(method=method, sim_kind=sim_kind, m=None, n_test=n, accuracy=acc, **common)]

    available = len({w.subject_id for w in split.train} - {test_subject})
    if method == "DL":
        # DL is the m = available cell of the convnet family, so it shares PDL's seed there
        seed = derive_seed(config.seed, bundle.name, split_spec.mode, test_subject, "convnet", available)
        params = convnet.train(_net_config(bundle, config, seed), split.train, bundle.label_set)
        acc, n = _evaluate_net(params, split)
        return [RunResult(method=method, sim_kind=None, m=None, n_test=n, accuracy=acc, **common)]

    matrix = similarity_for_split(bundle, split, test_subject, sim_kind, config.gamma)
    schedule = list(config.pdl_m) if config.pdl_m else pdl_schedule(available)
    results = []
    for m in schedule:
        m = min(m, available)
        seed = derive_seed(config.seed, bundle.name, split_spec.mode, test_subject, "convnet", m)
        params = convnet.train(_net_config(bundle, config, seed),
                               pdl_training_set(split, matrix, test_subject, m), bundle.label_set)
        acc, n = _evaluate_net(params, split)
        results.append(RunResult(method=method, sim_kind=sim_kind, m=m, n_test=n, accuracy=acc, **common))
    return results


def run_plan(bundle: DatasetBundle, methods: Sequence[str], sim_kinds: Sequence[str],
             splits: Sequence[str], config: EngineConfig | None = None,
             subjects: Sequence[str] | None = None, workers: int = 1) -> list[RunResult]:
    """Every (subject, split, method, kind) cell; DL runs once per split."""
    config = config or EngineConfig()
    jobs = []
    for sid in subjects or bundle.subject_ids:
        for mode in splits:
            spec = SplitSpec(mode, sid, config.hyb_fraction, derive_seed(config.seed, "split", sid))
            for method in methods:
                for kind in ([None] if method == "DL" else sim_kinds):
                    jobs.append((method, kind, spec))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(lambda j: run_experiment(bundle, j[0], j[1], j[2], config), jobs))
    else:
        chunks = [run_experiment(bundle, *job, config) for job in jobs]
    return [r for chunk in chunks for r in chunk]


def with_net(config: EngineConfig, **overrides) -> EngineConfig:
    return replace(config, net={**config.net, **overrides})

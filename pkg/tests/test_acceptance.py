"""Acceptance criteria, one test each.

Every test prints a single ``PASS`` / ``FAIL`` line with the measured
quantity and runtime, then asserts the criterion at its stated tolerance
and time budget.
"""

import itertools
import math
import os
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from pershar import adaboost, convnet
from pershar.datasets import LabeledWindow, SubjectMeta, load_canonical, make_bundle
from pershar.experiments import (
    EngineConfig, RunResult, SplitSpec, bundle_features, make_split, macro_accuracy, make_si_split,
    pdl_schedule, pdl_training_set, run_experiment, run_plan, similarity_for_split, write_results,
)
from pershar.features import FeatureVector
from pershar.report import report_table
from pershar.similarity import KINDS, build_matrix
from pershar.synth import PopulationSpec, generate_population
from oracles import kernel_matrix, oracle_stump

# Boosting rounds for the personalization comparison. The default of 100
# also clears the bar on these seeds, with a thinner margin; see the notes
# in the README.
BENEFIT_ROUNDS = 30


@pytest.fixture
def verdict(capsys, request):
    def emit(ok, detail, elapsed, budget):
        within = elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] {request.node.name}: {detail} ({elapsed:.2f}s of {budget:.0f}s)")
        assert ok, detail
        assert within, f"runtime {elapsed:.2f}s exceeds {budget}s"
    return emit


def test_similarity_suite(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = worst_product = 0.0
    shape_ok = True
    for _ in range(100):
        n = int(rng.integers(4, 21))
        subjects = [SubjectMeta(f"p{i:02d}", int(rng.integers(0, 2)), int(rng.integers(18, 80)),
                                float(rng.uniform(40, 110)), float(rng.uniform(145, 200))) for i in range(n)]
        sigs = {s.subject_id: FeatureVector(rng.normal(size=64) * rng.uniform(0.1, 5, 64), "sig")
                for s in subjects}
        phys = np.array(kernel_matrix([s.physical_vector().tolist() for s in subjects]))
        sens = np.array(kernel_matrix([sigs[s.subject_id].values.tolist() for s in subjects]))
        oracle = {"physical": phys, "sensor": sens, "physical_sensor": phys * sens}
        got = {k: build_matrix(k, subjects, sigs).values for k in KINDS}
        for kind in KINDS:
            v = got[kind]
            shape_ok &= bool(np.array_equal(v, v.T) and np.all(np.diag(v) == 1.0) and np.all((v > 0) & (v <= 1)))
            worst = max(worst, float(np.abs(v - oracle[kind]).max()))
        worst_product = max(worst_product, float(np.abs(got["physical_sensor"] - got["physical"] * got["sensor"]).max()))
    elapsed = time.perf_counter() - start
    ok = shape_ok and worst <= 1e-12 and worst_product <= 1e-12
    verdict(ok, f"100 populations, symmetric/unit-diagonal/(0,1]={shape_ok}, max oracle gap {worst:.1e}, "
                f"max product gap {worst_product:.1e}", elapsed, 10)


def _toy(rng):
    n = int(rng.integers(4, 41))
    k = int(rng.integers(1, 4))
    C = int(rng.integers(2, 4))
    X = np.round(rng.normal(size=(n, k)), 1)
    y = rng.integers(0, C, n)
    y[:C] = np.arange(C)
    return X, y, C


def _grid(X):
    per = {1: [100], 2: [10, 10], 3: [5, 5, 4]}[X.shape[1]]
    axes = [np.linspace(X[:, j].min() - 0.5, X[:, j].max() + 0.5, m) for j, m in enumerate(per)]
    return np.array(list(itertools.product(*axes)))


def test_adaboost_oracle_equivalence(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    rounds_checked = mismatched_rounds = mismatched_probes = 0
    for _ in range(50):
        X, y, C = _toy(rng)
        priors = rng.uniform(0.05, 1, len(y))
        model, trace = adaboost.train(X, y.tolist(), priors, rounds=20, label_set=list(range(C)), return_trace=True)
        for stump, D in zip(model.stumps, trace):
            want = oracle_stump(X.tolist(), y.tolist(), D.tolist(), C)
            got = (stump.feature_index, stump.threshold, stump.left_label, stump.right_label)
            rounds_checked += 1
            mismatched_rounds += got != want
        s = int(rng.integers(0, len(y)))
        doubled = np.ones(len(y))
        doubled[s] = 2.0
        a = adaboost.train(np.vstack([X, X[s:s + 1]]), np.append(y, y[s]).tolist(), rounds=20,
                           label_set=list(range(C)))
        b = adaboost.train(X, y.tolist(), doubled, rounds=20, label_set=list(range(C)))
        grid = _grid(X)
        mismatched_probes += int(np.sum(a.predict_index(grid) != b.predict_index(grid)))
    elapsed = time.perf_counter() - start
    ok = mismatched_rounds == 0 and mismatched_probes == 0
    verdict(ok, f"50 datasets, {rounds_checked} rounds, {mismatched_rounds} stump mismatches, "
                f"{mismatched_probes} duplicate-vs-doubled probe disagreements", elapsed, 30)


def _smooth_batch(params, rng, n=4):
    cfg = params.config
    while True:
        x = rng.normal(size=(n, cfg.channels_in, cfg.input_length))
        if convnet.kink_margin(params, x) > 1e-2:
            return x, rng.integers(0, cfg.classes, n)


def test_convnet_gradient_check(verdict):
    start = time.perf_counter()
    errors = []
    for seed in range(10):
        cfg = convnet.tiny_config(seed=seed)
        params = convnet.init(cfg)
        errors.append(convnet.gradient_check(cfg, params, _smooth_batch(params, np.random.default_rng(seed)), eps=1e-4))

    def corrupt(p, x, y):
        loss, grads = convnet.loss_and_grads(p, x, y)
        g = grads["conv0.W"]
        g.flat[np.argmax(np.abs(g))] *= 1.5
        return loss, grads

    cfg = convnet.tiny_config()
    params = convnet.init(cfg)
    corrupted = convnet.gradient_check(cfg, params, _smooth_batch(params, np.random.default_rng(99)), grad_fn=corrupt)
    elapsed = time.perf_counter() - start
    ok = max(errors) < 1e-4 and corrupted > 1e-2
    verdict(ok, f"max relative error over 10 seeds {max(errors):.2e}, corrupted entry {corrupted:.2e}", elapsed, 60)


def _overfit_fixture(length=150):
    rng = np.random.default_rng(0)
    t = np.arange(length) / 50
    wins = []
    for k, freq in enumerate((1.0, 2.5)):
        for i in range(4):
            s = np.column_stack([np.sin(2 * np.pi * freq * t + i), np.cos(2 * np.pi * freq * t), np.full(length, 0.1 * i)])
            wins.append(LabeledWindow("s", f"c{k}", k * 4 + i, s + 0.1 * rng.normal(size=s.shape), 50))
    return wins


def test_overfit_check(verdict):
    start = time.perf_counter()
    wins = _overfit_fixture()
    accs, deterministic = [], True
    for seed in range(3):
        cfg = convnet.reference_config(150, 2, epochs=200, seed=seed)
        a, b = convnet.train(cfg, wins), convnet.train(cfg, wins)
        deterministic &= all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)
        preds = convnet.predict_windows(a, wins)
        accs.append(np.mean([p == w.label for p, w in zip(preds, wins)]))
    elapsed = time.perf_counter() - start
    ok = min(accs) == 1.0 and deterministic
    verdict(ok, f"training accuracy per seed {accs}, bit-identical reruns={deterministic}", elapsed, 30)


def test_split_correctness(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    leaks = count_errors = partition_errors = 0
    n_splits = 0
    while n_splits < 1000:
        n_subj = int(rng.integers(2, 7))
        counts = rng.integers(1, 15, int(rng.integers(1, 5)))
        subjects = [SubjectMeta(f"u{i}", 0, 30, 70.0, 170.0) for i in range(n_subj)]
        windows = [LabeledWindow(f"u{i}", f"c{k}", j, np.zeros((2, 3)), 50)
                   for i in range(n_subj) for j, k in enumerate(np.repeat(np.arange(len(counts)), counts))]
        bundle = make_bundle("split", subjects, windows)
        for _ in range(20):
            sid = f"u{int(rng.integers(0, n_subj))}"
            mode = ["SI", "HYB"][int(rng.integers(0, 2))]
            frac = float(rng.uniform(0.01, 0.99))
            split = make_split(bundle, SplitSpec(mode, sid, frac, int(rng.integers(0, 2**31))))
            keys = [w.key for w in (*split.train, *split.test)]
            partition_errors += len(keys) != len(set(keys)) or set(keys) != {w.key for w in windows}
            own = Counter(w.label for w in split.train if w.subject_id == sid)
            if mode == "SI":
                leaks += sum(own.values()) > 0
            else:
                for k, n in enumerate(counts):
                    want = 0 if n < 2 else max(1, math.floor(frac * n))
                    count_errors += own.get(f"c{k}", 0) != want
            n_splits += 1
    elapsed = time.perf_counter() - start
    ok = leaks == 0 and count_errors == 0 and partition_errors == 0
    verdict(ok, f"{n_splits} splits, {leaks} SI leaks, {count_errors} HYB count errors, "
                f"{partition_errors} partition errors", elapsed, 10)


def test_schedule(verdict):
    start = time.perf_counter()
    a, b = pdl_schedule(29), pdl_schedule(23)
    elapsed = time.perf_counter() - start
    verdict(a == [10, 15, 20, 25, 29] and b == [10, 15, 20, 23], f"pdl_schedule(29)={a}, pdl_schedule(23)={b}",
            elapsed, 1)


def test_personalization_benefit(verdict):
    start = time.perf_counter()
    pml, uniform = [], []
    config = EngineConfig(boost_rounds=BENEFIT_ROUNDS)
    for seed in range(10):
        bundle = generate_population(PopulationSpec(n_subjects=12, n_classes=4, n_style_clusters=2,
                                                    physical_style_correlation=True, seed=seed))
        features = bundle_features(bundle)
        for sid in bundle.subject_ids:
            pml.append(run_experiment(bundle, "PML", "physical", SplitSpec("SI", sid), config)[0].accuracy)
            split = make_si_split(bundle, sid)
            model = adaboost.train(np.vstack([features[w.key] for w in split.train]),
                                   [w.label for w in split.train], None, BENEFIT_ROUNDS, label_set=bundle.label_set)
            pred = model.predict(np.vstack([features[w.key] for w in split.test]))
            uniform.append(np.mean([p == w.label for p, w in zip(pred, split.test)]))
    elapsed = time.perf_counter() - start
    gain = 100 * (np.mean(pml) - np.mean(uniform))
    verdict(gain >= 5.0, f"PML {100 * np.mean(pml):.2f}% vs uniform {100 * np.mean(uniform):.2f}% "
                         f"-> +{gain:.2f} pp over 10 seeds x 12 subjects", elapsed, 120)


def test_pdl_at_max_equivalence(verdict):
    start = time.perf_counter()
    bundle = generate_population(PopulationSpec(n_subjects=6, n_classes=4, windows_per_class=8, seed=3))
    same_sets, same_acc, pairs = True, True, []
    for sid, kind in zip(("s00", "s03", "s05"), KINDS):
        split = make_si_split(bundle, sid)
        available = len(bundle.subject_ids) - 1
        chosen = pdl_training_set(split, similarity_for_split(bundle, split, sid, kind), sid, available)
        same_sets &= Counter(w.key for w in chosen) == Counter(w.key for w in split.train)
        pdl = run_experiment(bundle, "PDL", kind, SplitSpec("SI", sid), EngineConfig(pdl_m=(available,)))[0]
        dl = run_experiment(bundle, "DL", None, SplitSpec("SI", sid))[0]
        pairs.append((pdl.accuracy, dl.accuracy))
        same_acc &= pdl.accuracy == dl.accuracy
    elapsed = time.perf_counter() - start
    verdict(same_sets and same_acc, f"identical window multisets={same_sets}, (PDL, DL) accuracies {pairs}",
            elapsed, 120)


def _synthetic_results():
    out = []
    rng = np.random.default_rng(0)
    for ds in ("unimib", "motionsense"):
        for split in ("SI", "HYB"):
            for sid in ("a", "b", "c"):
                out.append(RunResult(ds, "DL", None, split, sid, None, 10, float(rng.uniform())))
                for kind in KINDS:
                    out.append(RunResult(ds, "PML", kind, split, sid, None, 10, float(rng.uniform())))
                    for m in (10, 15, 20):
                        out.append(RunResult(ds, "PDL", kind, split, sid, m, 10, float(rng.uniform())))
    return out


def test_table_reproduction_structure(verdict, tmp_path):
    start = time.perf_counter()
    results = _synthetic_results()
    write_results(results, tmp_path / "results.csv")
    text, table_csv = report_table(tmp_path / "results.csv")
    lines = text.splitlines()
    rows = [line for line in lines[3:] if not set(line) <= {"-"}]
    labels = [r.split("|")[0].strip() for r in rows]
    want = ["SI-physical", "SI-sensor", "SI-physical sensor", "HYB-physical", "HYB-sensor", "HYB-physical sensor"]
    cells = [[c.strip() for c in r.split("|")[1:]] for r in rows]
    pml = {(r["dataset"], r["split"], r["sim_kind"]): r["accuracy"]
           for r in macro_accuracy([r for r in results if r.method == "PML"], ["dataset", "split", "sim_kind"])}
    paired = all(" - " in cells[i][j] for i in range(6) for j in (0, 2))
    spanning = all(bool(cells[i][1]) == (i % 3 == 0) and bool(cells[i][3]) == (i % 3 == 0) for i in range(6))
    values = cells[0][0].split(" - ")[1] == f"{100 * pml[('unimib', 'SI', 'physical')]:.2f}"
    structure = labels == want and paired and spanning and values and "UniMiB-SHAR" in lines[0] \
        and "Motion Sense" in lines[0] and len(table_csv.splitlines()) == 7
    detail = f"rows {labels == want}, paired cells {paired}, split-spanning DL {spanning}, values {values}"

    smoke = os.environ.get("PERSHAR_UNIMIB_DIR")
    if smoke:
        root = Path(smoke)
        bundle = load_canonical(root / "windows.csv", root / "subjects.csv", name="unimib")
        res = run_plan(bundle, ["PML"], list(KINDS), ["SI"], EngineConfig())
        floor = 3 / len(bundle.label_set)
        worst = min(r["accuracy"] for r in macro_accuracy(res, ["sim_kind"]))
        structure &= worst > floor
        detail += f"; UniMiB SI PML macro accuracy min {100 * worst:.2f}% vs floor {100 * floor:.2f}%"
    else:
        detail += "; real-data smoke check not run (PERSHAR_UNIMIB_DIR unset)"
    elapsed = time.perf_counter() - start
    verdict(structure, detail, elapsed, 60 if not smoke else 3600)

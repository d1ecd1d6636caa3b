import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pershar import adaboost
from pershar.adaboost import BoostModel, Stump, best_stump, normalize_priors, train
from oracles import oracle_stump, samme_reference, vote


def toy_data(seed, n=None, k=None, C=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(6, 41))
    k = k or int(rng.integers(1, 4))
    C = C or int(rng.integers(2, 4))
    # coarse values make repeated feature values (and hence tied thresholds) common
    X = np.round(rng.normal(size=(n, k)), 1)
    y = rng.integers(0, C, n)
    y[:C] = np.arange(C)
    return X, y, C


def as_tuple(stump):
    return (stump.feature_index, stump.threshold, stump.left_label, stump.right_label)


def probe_grid(X, n=100):
    k = X.shape[1]
    per = {1: [100], 2: [10, 10], 3: [5, 5, 4]}[k]
    axes = [np.linspace(X[:, j].min() - 0.5, X[:, j].max() + 0.5, m) for j, m in enumerate(per)]
    return np.array(list(itertools.product(*axes)))


# ---------------------------------------------------------------- best_stump

def test_separable_pair():
    s = best_stump(np.array([[-1.0], [1.0]]), np.array([0, 1]), np.array([0.5, 0.5]), 2)
    assert as_tuple(s) == (0, 0.0, 0, 1)


def test_dominant_weight_side():
    X = np.array([[-1.0], [1.0], [2.0]])
    y = np.array([0, 1, 0])
    s = best_stump(X, y, np.array([1.0, 1e-9, 1e-9]), 2)
    assert s.predict(X[:1])[0] == 0


@pytest.mark.parametrize("seed", range(10))
def test_best_stump_matches_enumeration(seed):
    X, y, C = toy_data(seed, n=20, k=3)
    w = np.random.default_rng(seed + 100).dirichlet(np.ones(20))
    assert as_tuple(best_stump(X, y, w, C)) == oracle_stump(X.tolist(), y.tolist(), w.tolist(), C)


def test_best_stump_tie_prefers_low_feature_and_threshold():
    # both features separate perfectly; feature 0 must win, at its lowest threshold
    X = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    s = best_stump(X, np.array([0, 1, 1]), np.ones(3) / 3, 2)
    assert as_tuple(s) == (0, 0.5, 0, 1)


def test_best_stump_constant_features():
    s = best_stump(np.ones((4, 2)), np.array([1, 1, 0, 1]), np.ones(4) / 4, 2)
    assert s.left_label == s.right_label == 1


def test_best_stump_empty():
    with pytest.raises(ValueError):
        best_stump(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(0), 2)


# --------------------------------------------------------------------- train

def test_separable_two_class_one_round():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    m = train(X, ["a", "a", "b", "b"])
    assert len(m.stumps) == 1 and m.alphas[0] == adaboost.ALPHA_CAP
    assert m.predict(X) == ["a", "a", "b", "b"]


@pytest.mark.parametrize("seed", range(12))
def test_matches_textbook_samme(seed):
    X, y, C = toy_data(seed)
    m = train(X, y.tolist(), rounds=15, label_set=list(range(C)))
    ref = samme_reference(X.tolist(), y.tolist(), C, 15)
    assert [as_tuple(s) for s in m.stumps] == [s for s, _ in ref]
    np.testing.assert_allclose(m.alphas, [a for _, a in ref], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("seed", range(12))
def test_priors_match_weighted_reference(seed):
    X, y, C = toy_data(seed)
    p = np.random.default_rng(seed).uniform(0.05, 1, len(y))
    m = train(X, y.tolist(), priors=p, rounds=10, label_set=list(range(C)))
    ref = samme_reference(X.tolist(), y.tolist(), C, 10, priors=p.tolist())
    assert [as_tuple(s) for s in m.stumps] == [s for s, _ in ref]


@pytest.mark.parametrize("seed", range(10))
def test_duplicate_equals_doubled_prior(seed):
    X, y, C = toy_data(seed)
    s = seed % len(y)
    X_dup = np.vstack([X, X[s:s + 1]])
    y_dup = np.append(y, y[s])
    prior = np.ones(len(y))
    prior[s] = 2.0
    a = train(X_dup, y_dup.tolist(), rounds=25, label_set=list(range(C)))
    b = train(X, y.tolist(), priors=prior, rounds=25, label_set=list(range(C)))
    grid = probe_grid(X)
    assert a.predict(grid) == b.predict(grid)


@pytest.mark.parametrize("seed", range(6))
def test_prior_scaling_power_of_two_is_bit_identical(seed):
    X, y, C = toy_data(seed)
    p = np.random.default_rng(seed).uniform(0.1, 1, len(y))
    a = train(X, y.tolist(), priors=p, rounds=20)
    b = train(X, y.tolist(), priors=p * 8.0, rounds=20)
    assert a == b


@given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3))
def test_prior_scaling_general_constant(seed, c):
    X, y, C = toy_data(seed)
    p = np.random.default_rng(seed).uniform(0.1, 1, len(y))
    a = train(X, y.tolist(), priors=p, rounds=20)
    b = train(X, y.tolist(), priors=p * c, rounds=20)
    assert a.stumps == b.stumps
    np.testing.assert_allclose(a.alphas, b.alphas, rtol=1e-9)
    assert a.predict(probe_grid(X)) == b.predict(probe_grid(X))


@given(seed=st.integers(0, 10_000))
def test_round_invariants(seed):
    X, y, C = toy_data(seed)
    p = np.random.default_rng(seed).uniform(0, 1, len(y))
    m, trace = train(X, y.tolist(), priors=p, rounds=30, label_set=list(range(C)), return_trace=True)
    for D in trace:
        assert abs(D.sum() - 1) < 1e-9
        assert np.all(D > 0)
    for stump, D in zip(m.stumps, trace):
        err = D[stump.predict(X) != y].sum()
        assert err < 1 - 1 / C
    assert all(np.isfinite(m.alphas)) and all(0 < a <= adaboost.ALPHA_CAP for a in m.alphas)


def test_weight_monotone_sanity():
    on, off = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 3))
        subset = np.arange(60) < 30
        y = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, 1, 0)
        y[~subset] = rng.integers(0, 2, 30)
        p = np.where(subset, 0.99 / 30, 0.01 / 30)
        pred = np.array(train(X, y.tolist(), priors=p, rounds=20).predict(X))
        on.append(np.mean(pred[subset] == y[subset]))
        off.append(np.mean(pred[~subset] == y[~subset]))
    assert np.mean(on) >= np.mean(off)


def test_train_errors():
    X = np.zeros((3, 1))
    with pytest.raises(ValueError, match="two classes"):
        train(X, ["a", "a", "a"])
    with pytest.raises(ValueError, match="rounds"):
        train(X, ["a", "b", "a"], rounds=0)
    with pytest.raises(ValueError):
        train(X, ["a", "b"])
    with pytest.raises(ValueError, match="label_set"):
        train(X, ["a", "b", "c"], label_set=["a", "b"])


def test_unlearnable_data_keeps_one_round():
    # identical inputs, balanced labels: no stump beats chance
    m = train(np.zeros((4, 1)), ["a", "b", "a", "b"], rounds=5)
    assert len(m.stumps) == 1


# --------------------------------------------------------------------- priors

def test_normalize_priors_floor_and_sum():
    p = normalize_priors([1.0, 0.0, 3.0])
    assert p[1] > 0 and abs(p.sum() - 1) < 1e-12
    assert p[2] == pytest.approx(0.75)
    for bad in ([], [-1.0, 2.0], [0.0, 0.0], [np.inf, 1.0]):
        with pytest.raises(ValueError):
            normalize_priors(bad)


# ------------------------------------------------------------------- predict

def test_single_round_prediction():
    m = BoostModel((Stump(1, 0.5, 2, 0),), (0.7,), ("a", "b", "c"), 2)
    assert adaboost.predict(m, [9.0, 0.1]) == "c"
    assert adaboost.predict(m, [9.0, 0.9]) == "a"


def test_vote_ties_follow_label_order():
    m = BoostModel((Stump(0, 0.0, 1, 1), Stump(0, 0.0, 0, 0)), (1.0, 1.0), ("a", "b"), 1)
    assert adaboost.predict(m, [0.3]) == "a"


def test_zero_training_error_reproduces_labels():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    m = train(X, ["a", "a", "b", "b"])
    assert m.predict(X) == ["a", "a", "b", "b"]


@given(seed=st.integers(0, 10_000))
def test_predict_matches_vote_oracle(seed):
    rng = np.random.default_rng(seed)
    stumps = [Stump(int(rng.integers(0, 2)), float(rng.normal()), int(rng.integers(0, 3)), int(rng.integers(0, 3)))
              for _ in range(7)]
    alphas = [float(rng.uniform(0.1, 3)) for _ in stumps]
    m = BoostModel(tuple(stumps), tuple(alphas), ("a", "b", "c"), 2)
    probes = rng.normal(size=(30, 2))
    ref = [(as_tuple(s), a) for s, a in zip(stumps, alphas)]
    assert m.predict_index(probes).tolist() == [vote(ref, row, 3) for row in probes.tolist()]


def test_predict_dimension_mismatch():
    m = BoostModel((Stump(0, 0.0, 0, 1),), (1.0,), ("a", "b"), 2)
    with pytest.raises(ValueError, match="dimension"):
        adaboost.predict(m, [1.0, 2.0, 3.0])


def test_model_invariants():
    with pytest.raises(ValueError):
        BoostModel((), (), ("a",), 1)
    with pytest.raises(ValueError):
        BoostModel((Stump(0, 0.0, 0, 1),), (float("nan"),), ("a", "b"), 1)


def test_dump_format():
    m = BoostModel((Stump(0, 0.5, 0, 1), Stump(1, -1.25, 1, 0)), (0.75, 2.0), ("walk", "sit"), 2)
    assert m.dump() == "1,0.75,0,0.5,walk,sit\n2,2.0,1,-1.25,sit,walk\n"

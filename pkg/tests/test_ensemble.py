import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import all_vote_patterns, cart_oracle, cart_predict, knn_oracle, plurality_oracle
from streamids.ensemble import (
    CONFIRMED,
    DEMOTED,
    CommitteeConfig,
    CommitteeTrainingError,
    DecisionTree,
    KNearest,
    LinearSVM,
    RandomForest,
    majority_vote,
    train_committee,
    verify,
)


def test_vote_examples():
    assert majority_vote([1, 1, 1]) == 1
    assert majority_vote([3, 3, 5]) == 3
    with pytest.raises(ValueError):
        majority_vote([])


def test_vote_enumeration_matches_brute_force():
    n = 0
    for votes in all_vote_patterns(7, 3):
        votes = list(votes)
        assert majority_vote(votes) == plurality_oracle(votes)
        assert majority_vote(votes, positive=1) == plurality_oracle(votes, positive=1)
        n += 1
    assert n == sum(3 ** k for k in range(1, 8))


def test_three_binary_voters_never_tie():
    for votes in all_vote_patterns(3, 2):
        if len(votes) == 3:
            assert majority_vote(list(votes)) == majority_vote(list(votes), positive=1)


def test_config_validation():
    for kw in ({"rf_trees": 0}, {"knn_k": 4}, {"svm_lambda": 0.0}, {"train_buffer_size": 1}):
        with pytest.raises(ValueError):
            CommitteeConfig(**kw)


def _separable(seed, n=200):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, size=(n, 2))
    side = x[:, 0] + x[:, 1]
    keep = np.abs(side) >= 1.0
    x = x[keep]
    return x, (x[:, 0] + x[:, 1] > 0).astype(int)


def test_knn_exact_match_with_k1():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    y = np.array([0, 1, 0])
    knn = KNearest(1).fit(x, y)
    assert [knn.predict_one(row) for row in x] == [0, 1, 0]


@given(st.integers(0, 10_000), st.sampled_from([1, 3, 5, 7]))
def test_knn_matches_oracle(seed, k):
    rng = np.random.default_rng(seed)
    # coarse grid values make distance ties common
    x = rng.integers(0, 4, size=(30, 2)).astype(float)
    y = rng.integers(0, 2, size=30)
    keys = rng.permutation(30)
    knn = KNearest(k).fit(x, y, keys)
    for q in rng.integers(0, 4, size=(10, 2)).astype(float):
        assert knn.predict_one(q) == knn_oracle(x.tolist(), y.tolist(), keys.tolist(), q.tolist(), k)


def test_knn_permutation_invariance():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.integers(0, 5, size=(25, 3)).astype(float)
        y = rng.integers(0, 2, size=25)
        keys = np.arange(25)
        perm = rng.permutation(25)
        a = KNearest(5).fit(x, y, keys)
        b = KNearest(5).fit(x[perm], y[perm], keys[perm])
        q = rng.integers(0, 5, size=3).astype(float)
        assert a.predict_one(q) == b.predict_one(q)


@pytest.mark.parametrize("seed", range(5))
def test_svm_separates_margin_set(seed):
    x, y = _separable(seed)
    svm = LinearSVM(lam=1e-4, epochs=3, seed=seed).fit(x, y)
    assert np.mean(svm.predict(x) == y) == 1.0


@given(st.integers(0, 1000), st.floats(1e-3, 1e3))
def test_svm_decision_scale_covariant(seed, scale):
    x, y = _separable(seed, 80)
    svm = LinearSVM(seed=seed).fit(x, y)
    before = svm.predict(x)
    svm.w, svm.b = svm.w * scale, svm.b * scale
    np.testing.assert_array_equal(svm.predict(x), before)


def test_forest_learns_threshold_concept():
    rng = np.random.default_rng(1)
    x = rng.random((500, 4))
    y = (x[:, 0] > 0.5).astype(int)
    forest = RandomForest(10, 8, seed=0).fit(x, y)
    assert np.mean(forest.predict(x) == y) >= 0.99


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_degenerate_forest_is_one_cart_tree(seed, depth):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 6, size=(40, 3)).astype(float)
    y = rng.integers(0, 2, size=40)
    forest = RandomForest(1, depth, max_features=None, bootstrap=False, seed=seed).fit(x, y)
    tree = DecisionTree(depth).fit(x, y)
    oracle = cart_oracle(x.tolist(), y.tolist(), depth)
    assert forest.trees[0].root == tree.root
    queries = rng.integers(-1, 7, size=(30, 3)).astype(float)
    for q in queries:
        assert forest.predict_one(q) == tree.predict_one(q) == cart_predict(oracle, q.tolist())


def test_single_class_buffer_rejected():
    with pytest.raises(CommitteeTrainingError):
        train_committee(np.zeros((10, 2)), np.ones(10))
    with pytest.raises(CommitteeTrainingError):
        train_committee(np.zeros((0, 2)), np.zeros(0))


class _Fixed:
    def __init__(self, v):
        self.v = v

    def predict_one(self, x):
        return self.v


@pytest.mark.parametrize("votes, outcome", [
    ((1, 1, 1), CONFIRMED),
    ((1, 0, 0), DEMOTED),
    ((0, 1, 1), CONFIRMED),
    ((0, 0, 0), DEMOTED),
])
def test_verify_is_two_of_three(votes, outcome):
    x, y = _separable(0)
    c = train_committee(x, y)
    c.forest, c.knn, c.svm = (_Fixed(v) for v in votes)
    assert verify(c, x[0]) == outcome


def test_verify_on_constructed_geometry():
    x, y = _separable(2, 400)
    c = train_committee(x, y, CommitteeConfig(seed=3), target=2)
    assert c.target == 2
    assert verify(c, np.array([-2.5, -2.5])) == DEMOTED
    assert verify(c, np.array([2.5, 2.5])) == CONFIRMED
    assert min(c.train_accuracy.values()) >= 0.95


def test_committee_columns_project_inputs():
    x, y = _separable(4)
    wide = np.column_stack([np.zeros(len(y)), x])
    c = train_committee(wide, y, columns=np.array([1, 2]))
    assert verify(c, np.array([99.0, 2.5, 2.5])) == CONFIRMED


def test_committee_deterministic():
    rng = np.random.default_rng(0)
    x = rng.random((300, 4))
    y = (x[:, 0] + 0.2 * rng.normal(size=300) > 0.5).astype(int)
    a = train_committee(x, y, CommitteeConfig(seed=9))
    b = train_committee(x, y, CommitteeConfig(seed=9))
    assert [t.root for t in a.forest.trees] == [t.root for t in b.forest.trees]
    np.testing.assert_array_equal(a.svm.w, b.svm.w)
    queries = rng.random((50, 4))
    assert [verify(a, q) for q in queries] == [verify(b, q) for q in queries]

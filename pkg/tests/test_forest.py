import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krf import _tree_py, forest
from krf.forest import (
    DecisionTree, Forest, ForestError, Hyperparams, bootstrap_sample, fit_forest, fit_tree,
    forest_from_bytes, forest_to_bytes, normalize_fractions, tree_stream,
)

BACKENDS = ["python"] + (["compiled"] if forest.BACKEND == "compiled" else [])


def leaf(value):
    v = np.atleast_2d(np.asarray(value, dtype=float))
    return DecisionTree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), v,
                        np.array([1]))


def step_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 10, n)
    Y = np.zeros((n, 6))
    Y[x < 5, 2] = 1.0
    Y[x >= 5, 4] = 1.0
    return x[:, None], Y


def random_data(n=300, p=8, k=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X[:, 0] = np.round(X[:, 0])  # lots of ties
    logits = np.column_stack([X[:, j % p] * (j + 1) for j in range(k)])
    Y = np.exp(logits - logits.max(1, keepdims=True))
    return X, Y / Y.sum(1, keepdims=True)


def leaf_depths(t):
    d = np.zeros(t.n_nodes, dtype=int)
    for i in range(t.n_nodes):
        if t.feature[i] >= 0:
            d[t.left[i]] = d[t.right[i]] = d[i] + 1
    return d[t.leaves()]


class TestHyperparams:
    def test_defaults(self):
        hp = Hyperparams()
        assert (hp.n_trees, hp.max_depth, hp.min_samples_split, hp.min_samples_leaf, hp.m_try) == \
               (171, 25, 2, 10, 3)

    @pytest.mark.parametrize("kw", [dict(n_trees=0), dict(min_samples_split=1),
                                    dict(min_samples_leaf=0), dict(m_try=0), dict(m_try=9)])
    def test_invalid(self, kw):
        with pytest.raises(ForestError):
            Hyperparams(**kw).validate(8)


class TestBootstrap:
    def test_single_row(self):
        assert bootstrap_sample(1, tree_stream(0, 0)).tolist() == [0]

    def test_deterministic(self):
        a = bootstrap_sample(50, tree_stream(7, 3))
        b = bootstrap_sample(50, tree_stream(7, 3))
        np.testing.assert_array_equal(a, b)

    def test_unique_fraction(self):
        frac = [np.unique(bootstrap_sample(1000, tree_stream(s, 0))).size / 1000 for s in range(100)]
        assert abs(np.mean(frac) - (1 - np.exp(-1))) < 0.02

    def test_rejects_empty(self):
        with pytest.raises(ForestError):
            bootstrap_sample(0, tree_stream(0, 0))


@pytest.mark.parametrize("backend", BACKENDS)
class TestTree:
    def test_stump(self, backend):
        X, Y = step_data()
        t = fit_tree(X, Y, Hyperparams(max_depth=1, min_samples_leaf=1, m_try=1),
                     tree_stream(0, 0), backend=backend)
        x = X[:, 0]
        below, above = x[x < 5].max(), x[x >= 5].min()
        assert t.n_nodes == 3
        assert below < t.threshold[0] <= above
        np.testing.assert_array_equal(t.value[t.left[0]], np.eye(6)[2])
        np.testing.assert_array_equal(t.value[t.right[0]], np.eye(6)[4])
        assert np.all(t.predict(X).argmax(1) == Y.argmax(1))

    def test_pure_node_is_leaf(self, backend):
        X = np.random.default_rng(0).normal(size=(30, 8))
        Y = np.tile(np.eye(6)[1], (30, 1))
        t = fit_tree(X, Y, Hyperparams(min_samples_leaf=1), tree_stream(0, 0), backend=backend)
        assert t.n_nodes == 1

    def test_leaf_size_blocks_split(self, backend):
        X, Y = step_data(20)
        t = fit_tree(X, Y, Hyperparams(min_samples_leaf=20, m_try=1), tree_stream(0, 0),
                     backend=backend)
        assert t.n_nodes == 1

    def test_structure_invariants(self, backend):
        X, Y = random_data(500)
        hp = Hyperparams(max_depth=6, min_samples_leaf=7)
        t = fit_tree(X, Y, hp, tree_stream(1, 0), bootstrap_sample(500, tree_stream(1, 0)),
                     backend=backend)
        internal = t.feature >= 0
        assert np.all(t.left[internal] > 0) and np.all(t.right[internal] > 0)
        assert leaf_depths(t).max() <= 6
        assert np.all(t.n_node_samples[t.leaves()] >= 7)
        assert np.all(t.n_node_samples[internal] ==
                      t.n_node_samples[t.left[internal]] + t.n_node_samples[t.right[internal]])

    def test_best_split_is_brute_force_optimum(self, backend):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 3))
        Y = rng.dirichlet(np.ones(4), size=60)
        t = fit_tree(X, Y, Hyperparams(max_depth=1, min_samples_leaf=3, m_try=3),
                     tree_stream(0, 0), backend=backend)
        best = np.inf
        for j in range(3):
            xs = np.unique(X[:, j])
            for a, b in zip(xs[:-1], xs[1:]):
                left = X[:, j] <= 0.5 * (a + b)
                if left.sum() < 3 or (~left).sum() < 3:
                    continue
                sse = ((Y[left] - Y[left].mean(0)) ** 2).sum() + ((Y[~left] - Y[~left].mean(0)) ** 2).sum()
                best = min(best, sse)
        left = X[:, t.feature[0]] <= t.threshold[0]
        got = ((Y[left] - Y[left].mean(0)) ** 2).sum() + ((Y[~left] - Y[~left].mean(0)) ** 2).sum()
        assert got == pytest.approx(best, rel=1e-9)


@pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernel not built")
class TestBackendsAgree:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 8), st.integers(1, 6), st.integers(0, 12),
           st.integers(1, 12), st.integers(0, 2 ** 63 - 1))
    def test_identical_trees(self, n, p, k, depth, leaf_size, seed):
        rng = np.random.default_rng(seed % 1000)
        X = np.round(rng.normal(size=(n, p)), 1)
        Y = rng.dirichlet(np.ones(k), size=n)
        samples = rng.integers(0, n, n)
        mtry = int(rng.integers(1, p + 1))
        args = (X, Y, samples, depth, 2, leaf_size, mtry, seed)
        a = _tree_py.build_tree(*args)
        b = forest._tree_ext.build_tree(*args)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)

    def test_identical_forests(self):
        X, Y = random_data(400)
        hp = Hyperparams(n_trees=5, seed=3)
        a = fit_forest(X, Y, hp, backend="python")
        b = fit_forest(X, Y, hp, backend="compiled")
        assert forest_to_bytes(a) == forest_to_bytes(b)


class TestForest:
    def test_ensemble_arithmetic(self):
        f = Forest([leaf([1.0]), leaf([2.0]), leaf([3.0])], Hyperparams(n_trees=3), ("x",), False)
        mean, var = f.predict([[0.0]])
        assert mean[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert var[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_identical_trees_zero_variance(self):
        f = Forest([leaf([0.3, 0.7])] * 4, Hyperparams(n_trees=4), ("x",))
        _, var = f.predict([[1.0]])
        assert np.all(var == 0)

    def test_variance_two_pass_oracle(self):
        X, Y = random_data(300, seed=2)
        f = fit_forest(X, Y, Hyperparams(n_trees=12, seed=1, min_samples_leaf=3))
        T = f.predict_trees(X[:50])
        mean, var = f.predict(X[:50])
        mu = T.mean(0)
        np.testing.assert_allclose(var, ((T - mu) ** 2).mean(0), rtol=1e-12, atol=1e-15)
        assert np.all(mean >= T.min(0) - 1e-12) and np.all(mean <= T.max(0) + 1e-12)
        np.testing.assert_allclose(mean.sum(1), 1.0, atol=1e-12)

    def test_single_tree(self):
        X, Y = random_data(200)
        f = fit_forest(X, Y, Hyperparams(n_trees=1, seed=4))
        mean, var = f.predict(X)
        np.testing.assert_allclose(mean, normalize_fractions(f.trees[0].predict(X)), atol=1e-15)
        assert np.all(var == 0)

    def test_workers_identical(self):
        X, Y = random_data(300)
        hp = Hyperparams(n_trees=8, seed=9)
        assert forest_to_bytes(fit_forest(X, Y, hp, n_jobs=1)) == \
               forest_to_bytes(fit_forest(X, Y, hp, n_jobs=8))

    def test_row_order_invariant(self):
        X, Y = random_data(250)
        hp = Hyperparams(n_trees=4, seed=2)
        p = np.random.default_rng(0).permutation(250)
        assert forest_to_bytes(fit_forest(X, Y, hp)) == forest_to_bytes(fit_forest(X[p], Y[p], hp))

    def test_noise_has_no_skill(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(600, 8))
        y = rng.normal(size=(600, 1))
        f = fit_forest(X, y, Hyperparams(n_trees=30, min_samples_leaf=1, seed=0))
        oob = f.oob_predict(X)[:, 0]
        ok = np.isfinite(oob)
        mse = np.mean((oob[ok] - y[ok, 0]) ** 2)
        assert mse >= 0.9 * y.var()

    def test_round_trip_bytes(self):
        X, Y = random_data(200)
        f = fit_forest(X, Y, Hyperparams(n_trees=3, seed=5))
        g = forest_from_bytes(forest_to_bytes(f))
        np.testing.assert_array_equal(f.predict(X)[0], g.predict(X)[0])
        np.testing.assert_array_equal(f.predict(X)[1], g.predict(X)[1])
        assert g.hyperparams == f.hyperparams and g.features == f.features

    @pytest.mark.parametrize("mangle", [lambda b: b"XX" + b[2:], lambda b: b[:-3],
                                        lambda b: b + b"\0"])
    def test_corrupt_bytes(self, mangle):
        X, Y = random_data(50)
        data = forest_to_bytes(fit_forest(X, Y, Hyperparams(n_trees=1)))
        with pytest.raises(ForestError):
            forest_from_bytes(mangle(data))

    def test_feature_count_checked(self):
        X, Y = random_data(50)
        f = fit_forest(X, Y, Hyperparams(n_trees=1))
        with pytest.raises(ForestError):
            f.predict(np.zeros((2, 3)))


class TestNormalize:
    def test_clamps_and_rescales(self):
        np.testing.assert_allclose(normalize_fractions([0.5, -0.1, 0.7]), [0.5 / 1.2, 0, 0.7 / 1.2])

    def test_unit_rows_untouched(self):
        v = np.array([0.1, 0.2, 0.7])
        assert normalize_fractions(v).tobytes() == v.tobytes()

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
    def test_sums_to_one(self, vals):
        out = normalize_fractions(vals)
        if out.sum() > 0:
            assert out.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(out >= 0)

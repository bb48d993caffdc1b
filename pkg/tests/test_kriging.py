import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krf import kriging
from krf.kriging import (
    KrigingError, build_system, dedupe_latest, extrapolate, kriging_variance, kriging_weights,
    solve_weights,
)
from krf.variogram import VariogramModel, eval_model


@pytest.fixture
def model():
    return VariogramModel("spherical", 0.1, 0.9, 20.0)


def random_fixture(rng, n=None):
    n = n or int(rng.integers(1, 12))
    x = np.sort(rng.choice(np.arange(0.0, 300.0, 1.5), n, replace=False))
    kind = ("spherical", "gaussian", "exponential")[int(rng.integers(0, 3))]
    # a positive nugget keeps the literal (diagonal C0) system well posed
    m = VariogramModel(kind, float(rng.uniform(0.05, 0.5)), float(rng.uniform(0.2, 2.0)),
                       float(rng.uniform(5, 60)))
    return x, m, float(x.max() + rng.uniform(0.5, 10.0))


class TestLiteralMode:
    def test_one_point(self):
        m = VariogramModel("spherical", 1.0, 3.0, 10.0)
        A, b = build_system([0.0], 25.0, m, "paper_literal")
        lam, _ = solve_weights(A, b, "paper_literal")
        # A = [[gamma(0)]] = [[C0 = 1]], b = [gamma(25) = 4] -> lam = 4
        assert lam[0] == pytest.approx(4.0, abs=1e-12)

    def test_abstract_one_point_fixture(self, monkeypatch):
        # C0 = 2 on the diagonal and gamma = 1 towards the query
        A, b = np.array([[2.0]]), np.array([1.0])
        lam, mu = solve_weights(A, b, "paper_literal")
        assert mu is None and lam[0] == pytest.approx(0.5, abs=1e-12)
        assert kriging_variance(lam, A, b, "paper_literal") == pytest.approx(0.5, abs=1e-12)
        monkeypatch.setattr(kriging, "build_system", lambda *a, **k: (A, b))
        est = extrapolate([0.0], [10.0], 1.0, VariogramModel("spherical", 2.0, 1.0, 5.0),
                          "paper_literal")
        assert est.value[0] == pytest.approx(5.0, abs=1e-12)
        assert est.variance == pytest.approx(0.5, abs=1e-12)

    def test_not_translation_invariant(self, model):
        x = np.array([0.0, 1.5, 3.0])
        z = np.array([0.2, 0.5, 0.1])
        lam, _ = kriging_weights(x, 6.0, model, "paper_literal")
        assert abs(lam.sum() - 1) > 1e-3
        a = extrapolate(x, z, 6.0, model, "paper_literal").value[0]
        b = extrapolate(x, z + 1.0, 6.0, model, "paper_literal").value[0]
        assert abs((b - a) - 1.0) > 1e-3

    def test_variance_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x, m, x0 = random_fixture(rng)
            A, b = build_system(x, x0, m, "paper_literal")
            lam, _ = solve_weights(A, b, "paper_literal")
            v = kriging_variance(lam, A, b, "paper_literal")
            assert v == pytest.approx(float(lam @ b), abs=1e-9)

    def test_diagonal_is_nugget(self, model):
        A, _ = build_system([0.0, 3.0, 9.0], 10.0, model, "paper_literal")
        np.testing.assert_array_equal(np.diag(A), [0.1] * 3)


class TestOrdinary:
    def test_weights_sum_to_one(self, model):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x, m, x0 = random_fixture(rng)
            lam, mu = kriging_weights(x, x0, m, "ordinary")
            assert lam.sum() == pytest.approx(1.0, abs=1e-10)
            assert mu is not None

    def test_exact_at_samples(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            x, m, _ = random_fixture(rng, n=int(rng.integers(2, 10)))
            z = rng.standard_normal((len(x), 3))
            i = int(rng.integers(0, len(x)))
            est = extrapolate(x, z, x[i], m, "ordinary")
            np.testing.assert_allclose(est.value, z[i], atol=1e-9)
            assert est.variance < 1e-9

    def test_equidistant_pair(self, model):
        lam, _ = kriging_weights([0.0, 10.0], 5.0, model)
        np.testing.assert_allclose(lam, [0.5, 0.5], atol=1e-12)

    def test_coincident_query(self, model):
        lam, _ = kriging_weights([0.0, 1.5, 3.0], 0.0, model)
        np.testing.assert_allclose(lam, [1.0, 0.0, 0.0], atol=1e-9)

    def test_constant_history(self, model):
        est = extrapolate([0.0, 1.5, 3.0, 4.5], np.full(4, 0.37), 9.0, model)
        assert est.value[0] == pytest.approx(0.37, abs=1e-12)

    def test_fraction_sum_preserved(self, model):
        rng = np.random.default_rng(3)
        z = rng.dirichlet(np.ones(6), size=8)
        est = extrapolate(1.5 * np.arange(8), z, 14.0, model)
        assert est.value.sum() == pytest.approx(1.0, abs=1e-9)

    def test_variance_permutation_invariant(self):
        rng = np.random.default_rng(4)
        for mode in ("ordinary", "paper_literal"):
            x, m, x0 = random_fixture(rng, n=7)
            p = rng.permutation(7)
            a = extrapolate(x, np.zeros(7), x0, m, mode).variance
            b = extrapolate(x[p], np.zeros(7), x0, m, mode).variance
            assert a == pytest.approx(b, abs=1e-12)

    def test_single_sample_copies(self, model):
        est = extrapolate([1.5], [[0.2, 0.8]], 10.0, model, "ordinary")
        np.testing.assert_allclose(est.value, [0.2, 0.8], atol=1e-15)
        # Var = lam*gamma(h) + mu with lam = 1, mu = gamma(h): 2*gamma(8.5)
        assert est.variance == pytest.approx(2 * eval_model(model, 8.5), abs=1e-12)

    def test_variance_grows_with_distance(self, model):
        x = [0.0, 1.5, 3.0, 4.5]
        v = [extrapolate(x, np.zeros(4), 4.5 + d, model).variance for d in (0.5, 3, 10, 30)]
        assert all(a <= b + 1e-12 for a, b in zip(v, v[1:]))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-100, 100), st.floats(0.01, 100))
    def test_affine_equivariance(self, shift, scale):
        m = VariogramModel("exponential", 0.05, 1.0, 15.0)
        x = np.array([0.0, 1.5, 3.0, 6.0])
        z = np.array([0.3, -0.2, 1.1, 0.4])
        a = extrapolate(x, z, 8.0, m).value[0]
        b = extrapolate(x, scale * z + shift, 8.0, m).value[0]
        assert b == pytest.approx(scale * a + shift, rel=1e-7, abs=1e-7)


class TestErrors:
    def test_duplicates_rejected_by_weights(self, model):
        with pytest.raises(KrigingError, match="distinct"):
            kriging_weights([1.0, 1.0], 2.0, model)

    def test_dedupe_keeps_latest(self):
        x, z = dedupe_latest([1.0, 2.0, 1.0], [[1], [2], [3]])
        assert x.tolist() == [2.0, 1.0] and z[:, 0].tolist() == [2, 3]

    def test_extrapolate_dedupes(self, model):
        a = extrapolate([1.0, 2.0, 1.0], [0.0, 5.0, 1.0], 3.0, model)
        b = extrapolate([2.0, 1.0], [5.0, 1.0], 3.0, model)
        np.testing.assert_allclose(a.value, b.value, atol=1e-14)

    def test_empty_and_bad_mode(self, model):
        with pytest.raises(KrigingError):
            build_system([], 1.0, model)
        with pytest.raises(KrigingError):
            build_system([0.0], 1.0, model, "simple")
        with pytest.raises(KrigingError):
            build_system([0.0], np.nan, model)

    def test_zero_diagonal_rescued_by_regularisation(self):
        # zero nugget makes the literal 1x1 system [[0]]; the retry makes it solvable
        m = VariogramModel("spherical", 0.0, 1.0, 10.0)
        est = extrapolate([0.0], [1.0], 5.0, m, "paper_literal")
        assert np.all(np.isfinite(est.weights))

    def test_second_failure_raises(self, model, monkeypatch):
        def broken(*a, **k):
            raise np.linalg.LinAlgError("singular")
        monkeypatch.setattr(kriging.spl, "solve", broken)
        with pytest.raises(KrigingError, match="degenerate kriging system .condition number"):
            extrapolate([0.0, 1.5], [0.0, 1.0], 3.0, model)

    def test_negative_variance_clamped(self, model, monkeypatch):
        monkeypatch.setattr(kriging, "kriging_variance", lambda *a, **k: -1e-17)
        est = extrapolate([0.0, 1.5], [0.0, 1.0], 3.0, model)
        assert est.variance == 0.0 and est.clamped

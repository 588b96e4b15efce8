import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazepipe.errors import ConfigError, TrainingError, ValidationError
from gazepipe.ml import SvmConfig, TrainedModel, predict, smo_train
from gazepipe.ml.svm import decision_function, kernel_matrix, machine_pairs, smo_binary, vote


def dual_objective(alpha, Q):
    """Dual objective to maximize: sum(a) - a^T Q a / 2 (vectorized over rows)."""
    return alpha.sum(axis=-1) - 0.5 * np.einsum("...i,ij,...j->...", alpha, Q, alpha)


def full_alpha(model, key, n_rows, X, y):
    """Place the stored support-vector coefficients back onto the training rows."""
    alpha = np.zeros(n_rows)
    for sv, a in zip(model.params[f"{key}.sv"], model.params[f"{key}.alpha"]):
        alpha[np.flatnonzero(np.all(X == sv, axis=1))[0]] = a
    return alpha


class TestTwoPoint:
    X = np.array([[-1.0], [1.0]])
    y = np.array([0, 1])

    def test_brute_force_dual(self):
        # class 0 is the positive side of machine m0_1
        ys = np.array([1.0, -1.0])
        Q = np.outer(ys, ys) * (self.X @ self.X.T)
        grid = np.linspace(0.0, 1.0, 100001)
        # equality constraint forces alpha_1 = alpha_2
        cand = np.column_stack([grid, grid])
        best = grid[np.argmax(dual_objective(cand, Q))]
        assert best == pytest.approx(0.5, abs=1e-5)

        m = smo_train(self.X, self.y, SvmConfig(C=1.0, kernel="linear"))
        alpha = m.params["m0_1.alpha"]
        assert alpha.shape == (2,)
        np.testing.assert_allclose(alpha, best, atol=1e-5)
        assert m.params["m0_1.bias"][0] == pytest.approx(0.0, abs=1e-12)
        dec, _ = decision_function(m, np.array([[-1e-3], [1e-3]]))
        assert dec[0, 0] > 0 > dec[1, 0]


class TestXor:
    X = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    y = np.array([0, 0, 1, 1])

    def brute_force(self, C):
        ys = np.where(self.y == 0, 1.0, -1.0)
        Q = np.outer(ys, ys) * kernel_matrix(self.X, self.X, "rbf", 1.0)

        def search(lo, hi, step):
            axes = [np.arange(l, h + step / 2, step) for l, h in zip(lo, hi)]
            a1, a2, a3 = (g.ravel() for g in np.meshgrid(*axes, indexing="ij"))
            # y^T a = 0 fixes the last coefficient
            a4 = a1 + a2 - a3
            cand = np.column_stack([a1, a2, a3, a4])
            ok = (a4 >= 0) & (a4 <= C)
            obj = np.where(ok, dual_objective(cand, Q), -np.inf)
            return cand[np.argmax(obj)], obj.max()

        # coarse-to-fine grid: the dual objective is concave, so refining
        # around the coarse optimum cannot miss the global one
        best, _ = search([0, 0, 0], [C, C, C], C / 100)
        for width, step in ((C / 100, C / 2000), (C / 2000, C / 40000)):
            lo = np.maximum(best[:3] - width, 0)
            hi = np.minimum(best[:3] + width, C)
            best, obj = search(lo, hi, step)
        return (best, obj), Q

    def test_brute_force_dual(self):
        C = 10.0
        (best, best_obj), Q = self.brute_force(C)
        m = smo_train(self.X, self.y, SvmConfig(C=C, kernel="rbf", gamma=1.0, tol=1e-8))
        alpha = full_alpha(m, "m0_1", 4, self.X, self.y)
        np.testing.assert_allclose(alpha, best, atol=1e-3)
        assert dual_objective(alpha, Q) >= best_obj - 1e-9
        np.testing.assert_array_equal(predict(m, self.X), self.y)

    def test_box_bound_active(self):
        m = smo_train(self.X, self.y, SvmConfig(C=1.0, kernel="rbf", gamma=1.0))
        np.testing.assert_allclose(m.params["m0_1.alpha"], 1.0)
        np.testing.assert_array_equal(predict(m, self.X), self.y)


class TestFeasibility:
    @settings(max_examples=30, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        n_classes=st.integers(2, 4),
        C=st.sampled_from([0.1, 1.0, 10.0]),
        kernel=st.sampled_from(["rbf", "linear"]),
    )
    def test_dual_feasible(self, seed, n_classes, C, kernel):
        rng = np.random.default_rng(seed)
        y = np.repeat(np.arange(n_classes), 8)
        X = rng.normal(size=(y.size, 3)) + y[:, None] * 0.7
        m = smo_train(X, y, SvmConfig(C=C, kernel=kernel))
        for a, b in machine_pairs(m):
            key = f"m{a}_{b}"
            alpha = m.params[f"{key}.alpha"]
            ys = m.params[f"{key}.y"]
            assert np.all(alpha >= 0) and np.all(alpha <= C)
            assert abs(np.dot(alpha, ys)) <= 1e-3

    def test_kkt_gap_on_convergence(self, rng):
        y = np.repeat([0, 1], 20)
        X = rng.normal(size=(40, 2)) + y[:, None]
        m = smo_train(X, y)
        info = m.info["machines"]["m0_1"]
        assert info["converged"] and info["kkt_gap"] <= 1e-3

    def test_iteration_cap_reports_unconverged(self, rng):
        y = np.where(rng.random(40) < 0.5, 1.0, -1.0)
        K = kernel_matrix(rng.normal(size=(40, 2)), rng.normal(size=(40, 2)), "linear", 0.0)
        K = K @ K.T
        sol = smo_binary(K, y, 1.0, 1e-12, 1)
        assert sol.iterations == 1 and not sol.converged


class TestMulticlass:
    def test_separable_fixture(self, rng):
        centers = np.array([[0, 0], [5, 0], [0, 5], [5, 5]], dtype=float)
        y = np.repeat(np.arange(4), 10)
        X = centers[y] + 0.3 * rng.normal(size=(40, 2))
        m = smo_train(X, y)
        assert len(machine_pairs(m)) == 6
        np.testing.assert_array_equal(predict(m, X), y)

    def test_two_way_tie_goes_low(self):
        pairs = list(itertools.combinations(range(4), 2))
        # winners: 1, 2, 0, 1, 3, 2 -> classes 1 and 2 both get two votes
        dec = np.array([[-1.0, -1.0, 1.0, 1.0, -1.0, 1.0]])
        assert vote(dec, pairs, 4)[0] == 1

    def test_three_way_cycle(self):
        pairs = [(0, 1), (0, 2), (1, 2)]
        dec = np.array([[1.0, -1.0, 1.0]])  # 0>1, 2>0, 1>2
        assert vote(dec, pairs, 3)[0] == 0

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(1e-3, 1e3))
    def test_vote_invariant_to_positive_rescale(self, c):
        rng = np.random.default_rng(3)
        y = np.repeat(np.arange(3), 10)
        X = rng.normal(size=(30, 2)) + y[:, None]
        m = smo_train(X, y)
        params = dict(m.params)
        for k in params:
            if k.endswith(".alpha") or k.endswith(".bias"):
                params[k] = params[k] * c
        scaled = TrainedModel("SVM", params, m.input_spec, m.config)
        probe = rng.normal(size=(50, 2)) * 2
        np.testing.assert_array_equal(predict(scaled, probe), predict(m, probe))

    def test_missing_classes_keep_label_space(self, rng):
        y = np.array([0, 0, 2, 2])
        X = np.array([[0.0], [0.1], [3.0], [3.1]])
        m = smo_train(X, y, n_classes=5)
        assert m.n_classes == 5 and machine_pairs(m) == [(0, 2)]
        np.testing.assert_array_equal(predict(m, X), y)


class TestErrors:
    def test_single_class(self):
        with pytest.raises(TrainingError):
            smo_train(np.zeros((3, 2)), np.zeros(3, dtype=int))

    def test_non_finite(self):
        X = np.array([[0.0], [np.nan]])
        with pytest.raises(ValidationError):
            smo_train(X, np.array([0, 1]))

    def test_shape_mismatch_at_predict(self):
        m = smo_train(np.array([[0.0], [1.0]]), np.array([0, 1]))
        with pytest.raises(ValidationError):
            predict(m, np.zeros((2, 3)))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            SvmConfig(C=0.0)
        with pytest.raises(ConfigError):
            SvmConfig(kernel="poly")

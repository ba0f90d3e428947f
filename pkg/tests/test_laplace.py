import numpy as np
import pytest
import scipy.sparse as sparse

from labelconf import graph, laplace
from labelconf.core import FeatureMatrix, one_hot
from labelconf.errors import ConvergenceError, InputError


def two_node_graph():
    return graph.normalize(sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))


def random_graph(seed, n=40, k=4):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 6)) + 1.0
    return graph.normalize(graph.knn_adjacency(FeatureMatrix(X), k=k))


def naive_energy(g, Y, T, mu):
    """Dense double loop over ordered pairs; each unordered edge therefore
    enters twice and is compensated by the 1/4 factor."""
    A = g.adjacency.toarray()
    D = g.degrees
    n = A.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            diff = Y[i] / np.sqrt(D[i]) - Y[j] / np.sqrt(D[j])
            total += 0.25 * A[i, j] * float(diff @ diff)
    total += 0.5 * mu * float(np.sum((Y - T) ** 2))
    return total


def finite_difference_gradient(g, Y, T, mu, step=1e-6):
    grad = np.zeros_like(Y)
    for i in range(Y.shape[0]):
        for c in range(Y.shape[1]):
            plus = Y.copy()
            plus[i, c] += step
            minus = Y.copy()
            minus[i, c] -= step
            grad[i, c] = (
                laplace.laplacian_energy(g, plus, T, mu)
                - laplace.laplacian_energy(g, minus, T, mu)
            ) / (2 * step)
    return grad


class TestLaplacianEnergy:
    def test_identical_rows_zero(self):
        g = two_node_graph()
        Y = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert laplace.laplacian_energy(g, Y, Y, mu=3.0) == 0.0

    def test_disagreeing_rows_hand_value(self):
        # single unit-weight edge, rows (1,0) vs (0,1): 1/2 * 1 * 2 = 1
        g = two_node_graph()
        Y = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert laplace.laplacian_energy(g, Y, Y, mu=5.0) == pytest.approx(1.0, abs=1e-15)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(9)
        for seed in range(3):
            g = random_graph(seed, n=25, k=3)
            Y = rng.standard_normal((25, 3))
            T = one_hot(rng.integers(0, 3, 25), 3)
            expected = naive_energy(g, Y, T, mu=0.7)
            assert laplace.laplacian_energy(g, Y, T, 0.7) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        g = two_node_graph()
        with pytest.raises(InputError):
            laplace.laplacian_energy(g, np.ones((3, 2)), np.ones((3, 2)), 1.0)
        with pytest.raises(InputError):
            laplace.laplacian_energy(g, np.ones((2, 2)), np.ones((2, 3)), 1.0)


class TestSolveLabels:
    def test_agreeing_two_node_closed_form(self):
        g = two_node_graph()
        T = np.array([[1.0, 0.0], [1.0, 0.0]])
        raw, _ = laplace.solve_labels(g, T, laplace.SolverConfig(mu=1.0, tol=1e-12))
        np.testing.assert_allclose(raw.matrix, [[2.0, 0.0], [2.0, 0.0]], atol=1e-10)

    def test_disagreeing_two_node_closed_form(self):
        g = two_node_graph()
        T = np.array([[1.0, 0.0], [0.0, 1.0]])
        raw, _ = laplace.solve_labels(g, T, laplace.SolverConfig(mu=1.0, tol=1e-12))
        np.testing.assert_allclose(
            raw.matrix, [[4 / 3, 2 / 3], [2 / 3, 4 / 3]], atol=1e-10
        )

    def test_matches_dense_direct_solve(self):
        rng = np.random.default_rng(17)
        for seed, mu in ((0, 0.1), (1, 1.0), (2, 10.0)):
            g = random_graph(seed, n=60, k=5)
            T = one_hot(rng.integers(0, 4, 60), 4)
            raw, _ = laplace.solve_labels(g, T, laplace.SolverConfig(mu=mu, tol=1e-12))
            M = np.eye(60) - g.normalized.toarray() / (1.0 + mu)
            expected = np.linalg.solve(M, T)
            np.testing.assert_allclose(raw.matrix, expected, atol=1e-6)

    def test_stationary_mode_is_scaled_paper_mode(self):
        g = random_graph(4)
        T = one_hot(np.arange(40) % 3, 3)
        cfg = dict(mu=2.0, tol=1e-13)
        paper, _ = laplace.solve_labels(g, T, laplace.SolverConfig(rhs_mode="paper", **cfg))
        stat, _ = laplace.solve_labels(g, T, laplace.SolverConfig(rhs_mode="stationary", **cfg))
        np.testing.assert_allclose(stat.matrix, (2.0 / 3.0) * paper.matrix, atol=1e-10)

    def test_stationary_solution_has_zero_gradient(self):
        g = random_graph(8, n=20, k=3)
        T = one_hot(np.arange(20) % 2, 2)
        stat, _ = laplace.solve_labels(
            g, T, laplace.SolverConfig(mu=1.5, tol=1e-13, rhs_mode="stationary")
        )
        grad = finite_difference_gradient(g, stat.matrix.copy(), T, 1.5)
        assert np.abs(grad).max() <= 1e-4

    def test_energy_decreases_in_stationary_mode(self):
        g = random_graph(12, n=30, k=4)
        T = one_hot(np.arange(30) % 3, 3)
        stat, _ = laplace.solve_labels(
            g, T, laplace.SolverConfig(mu=0.5, tol=1e-12, rhs_mode="stationary")
        )
        assert laplace.laplacian_energy(g, stat, T, 0.5) <= laplace.laplacian_energy(g, T, T, 0.5)

    def test_cg_converges_within_n_iterations_at_tight_tol(self):
        # positive definiteness keeps unpreconditioned CG inside n steps
        for seed in range(3):
            g = random_graph(seed, n=50, k=5)
            T = one_hot(np.arange(50) % 4, 4)
            _, stats = laplace.solve_labels(g, T, laplace.SolverConfig(mu=1.0, tol=1e-10))
            assert max(stats.iterations) <= 50
            assert max(stats.residuals) <= 1e-10

    def test_nonconvergence_raises_with_residual(self):
        g = random_graph(2)
        T = one_hot(np.arange(40) % 2, 2)
        with pytest.raises(ConvergenceError) as err:
            laplace.solve_labels(g, T, laplace.SolverConfig(mu=1.0, tol=1e-14, max_iter=1))
        assert err.value.residual is not None

    def test_zero_rhs_column_short_circuits(self):
        g = two_node_graph()
        T = np.array([[1.0, 0.0], [1.0, 0.0]])  # class 1 never appears
        raw, stats = laplace.solve_labels(g, T, laplace.SolverConfig(mu=1.0))
        assert stats.iterations[1] == 0
        np.testing.assert_array_equal(raw.matrix[:, 1], [0.0, 0.0])

    def test_threads_match_serial(self):
        g = random_graph(3)
        T = one_hot(np.arange(40) % 4, 4)
        serial, _ = laplace.solve_labels(g, T, laplace.SolverConfig(mu=1.0, tol=1e-12))
        threaded, _ = laplace.solve_labels(g, T, laplace.SolverConfig(mu=1.0, tol=1e-12), threads=4)
        np.testing.assert_array_equal(serial.matrix, threaded.matrix)


class TestRowNormalize:
    def test_scaling(self):
        out, degenerate = laplace.row_normalize(np.array([[2.0, 0.0]]))
        np.testing.assert_array_equal(out.matrix, [[1.0, 0.0]])
        assert degenerate == 0

    def test_two_thirds(self):
        out, _ = laplace.row_normalize(np.array([[4 / 3, 2 / 3]]))
        np.testing.assert_allclose(out.matrix, [[2 / 3, 1 / 3]], rtol=1e-15)

    def test_negative_row_becomes_uniform(self):
        out, degenerate = laplace.row_normalize(np.array([[-1.0, -1.0]]))
        np.testing.assert_array_equal(out.matrix, [[0.5, 0.5]])
        assert degenerate == 1

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out, _ = laplace.row_normalize(rng.standard_normal((50, 4)))
        np.testing.assert_allclose(out.matrix.sum(axis=1), 1.0, atol=1e-9)
        assert out.matrix.min() >= 0.0


class TestExtractConfidence:
    def test_agreement_row(self):
        w = laplace.extract_confidence(np.array([[1.0, 0.0]]), [0])
        np.testing.assert_array_equal(w.values, [1.0])

    def test_two_node_fixture_continuation(self):
        Y = np.array([[2 / 3, 1 / 3], [1 / 3, 2 / 3]])
        w = laplace.extract_confidence(Y, [0, 1])
        np.testing.assert_allclose(w.values, [2 / 3, 2 / 3], rtol=1e-15)

    def test_uniform_row(self):
        Y = np.full((1, 4), 0.25)
        for label in range(4):
            assert laplace.extract_confidence(Y, [label]).values[0] == 0.25

    def test_label_out_of_range(self):
        with pytest.raises(InputError):
            laplace.extract_confidence(np.array([[1.0, 0.0]]), [2])


class TestEstimate:
    def _two_cluster_features(self, per_cluster=4):
        a = np.tile([5.0, 0.0], (per_cluster, 1))
        b = np.tile([0.0, 5.0], (per_cluster, 1))
        return FeatureMatrix(np.vstack([a, b]))

    def test_consistent_clusters_full_trust(self):
        feats = self._two_cluster_features()
        labels = np.array([0] * 4 + [1] * 4)
        w = laplace.estimate(feats, labels, 2, k=3, mu=1.0, tol=1e-12)
        np.testing.assert_allclose(w.values, 1.0, atol=1e-9)

    def test_flipped_sample_gets_smallest_confidence(self):
        feats = self._two_cluster_features()
        labels = np.array([0, 0, 0, 1, 1, 1, 1, 1])  # sample 3 mislabeled
        w = laplace.estimate(feats, labels, 2, k=3, mu=1.0, tol=1e-12)
        assert np.argmin(w.values) == 3
        assert w.values[3] < w.values.min(initial=np.inf, where=np.arange(8) != 3)

    def test_flipped_sample_matches_dense_oracle(self):
        feats = self._two_cluster_features()
        labels = np.array([0, 0, 0, 1, 1, 1, 1, 1])
        g = graph.normalize(graph.knn_adjacency(feats, 3))
        M = np.eye(8) - 0.5 * g.normalized.toarray()
        dense = np.linalg.solve(M, one_hot(labels, 2))
        dense = np.maximum(dense, 0.0)
        dense /= dense.sum(axis=1, keepdims=True)
        expected = dense[np.arange(8), labels]
        w = laplace.estimate(feats, labels, 2, k=3, mu=1.0, tol=1e-12)
        np.testing.assert_allclose(w.values, expected, atol=1e-9)

    def test_mode_equivalence_after_normalization(self):
        rng = np.random.default_rng(23)
        X = rng.standard_normal((80, 5)) + 1.0
        labels = rng.integers(0, 3, 80)
        kwargs = dict(k=6, mu=0.8, tol=1e-13)
        w_paper = laplace.estimate(FeatureMatrix(X), labels, 3, rhs_mode="paper", **kwargs)
        w_stat = laplace.estimate(FeatureMatrix(X), labels, 3, rhs_mode="stationary", **kwargs)
        np.testing.assert_allclose(w_paper.values, w_stat.values, atol=1e-9)

    def test_stats_payload(self):
        feats = self._two_cluster_features()
        labels = np.array([0] * 4 + [1] * 4)
        w, stats = laplace.estimate(feats, labels, 2, k=3, return_stats=True)
        assert stats["n"] == 8 and stats["d"] == 2 and stats["k"] == 3
        assert len(stats["cg_iterations"]) == 2
        assert stats["graph_seconds"] >= 0 and stats["solve_seconds"] >= 0

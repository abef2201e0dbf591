import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components

from meda.errors import DegenerateError
from meda.graph import build_affinity, build_laplacian, cosine_similarity, laplacian_graph
from oracles import brute_force_affinity, double_sum_smoothness


class TestAffinity:
    def test_two_points(self):
        z = np.array([[1.0, 0.0], [0.8, 0.6]])
        np.testing.assert_allclose(build_affinity(z, 1), [[0, 0.8], [0.8, 0]], atol=1e-15)

    def test_orthogonal_vectors(self):
        assert not build_affinity(np.eye(3), 1).any()

    def test_brute_force(self, rng):
        z = rng.normal(size=(30, 5))
        np.testing.assert_array_equal(build_affinity(z, 4) != 0, brute_force_affinity(z, 4) != 0)
        np.testing.assert_allclose(build_affinity(z, 4), brute_force_affinity(z, 4), atol=1e-14)

    def test_ties_prefer_lower_index(self):
        z = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        w = build_affinity(z, 1)
        np.testing.assert_array_equal(w, brute_force_affinity(z, 1))

    def test_negative_similarity_clamped(self):
        z = np.array([[1.0, 0.0], [-1.0, 0.1]])
        assert not build_affinity(z, 1).any()

    def test_invalid_inputs(self, rng):
        with pytest.raises(DegenerateError):
            cosine_similarity(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValueError):
            build_affinity(rng.normal(size=(4, 2)), 4)


class TestLaplacian:
    def test_two_points(self):
        g = build_laplacian(np.array([[0, 0.8], [0.8, 0]]))
        np.testing.assert_allclose(g.l, [[0.8, -0.8], [-0.8, 0.8]])
        np.testing.assert_allclose(g.l @ np.ones(2), 0)

    def test_empty_graph(self):
        assert not build_laplacian(np.zeros((3, 3))).l.any()

    @pytest.mark.parametrize("w,components", [
        (np.diag([1.0, 1.0, 1.0], 1) + np.diag([1.0, 1.0, 1.0], -1), 1),
        (np.kron(np.eye(2), [[0.0, 1.0], [1.0, 0.0]]), 2),
    ])
    def test_zero_eigenvalue_multiplicity(self, w, components):
        eig = np.linalg.eigvalsh(build_laplacian(w).l)
        assert np.sum(np.abs(eig) < 1e-10) == components
        assert connected_components(w, directed=False)[0] == components


@settings(max_examples=100, deadline=None)
@given(n=st.integers(3, 25), dim=st.integers(2, 6), seed=st.integers(0, 2**32 - 1),
       data=st.data())
def test_random_graphs(n, dim, seed, data):
    p = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, dim))
    g = laplacian_graph(z, p)
    oracle = brute_force_affinity(z, p)
    np.testing.assert_allclose(g.w, oracle, atol=1e-13)
    np.testing.assert_allclose(g.l @ np.ones(n), 0, atol=1e-10)
    assert np.linalg.eigvalsh(g.l).min() >= -1e-10
    f = rng.normal(size=n)
    assert 2 * f @ g.l @ f == pytest.approx(double_sum_smoothness(g.w, f), abs=1e-10)

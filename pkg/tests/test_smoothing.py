import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gtrans.errors import TooFewNodesError
from gtrans.graphons import build_prob_matrix, sample_adjacency, sample_latents
from gtrans.smoothing import (
    SmootherConfig,
    neighborhood_structure,
    ns_dissimilarity,
    ns_estimate,
    usvt_estimate,
)
from oracles import naive_delta


def two_block(n, within=0.8, across=0.2):
    z = np.arange(n) < n // 2
    return np.where(z[:, None] == z[None, :], within, across)


def random_graph(n, seed, gid=6):
    r = np.random.default_rng(seed)
    P = build_prob_matrix(gid, sample_latents(n, r))
    return P, sample_adjacency(P, r)


class TestDissimilarity:
    def test_identical_rows(self, rng):
        X = rng.random((6, 6))
        X = (X + X.T) / 2
        X[3] = X[1]
        X[:, 3] = X[:, 1]
        D = ns_dissimilarity(X)
        assert D[1, 3] == pytest.approx(0.0, abs=1e-12)

    def test_two_block_sbm(self):
        P = two_block(6)
        D = ns_dissimilarity(P)
        np.testing.assert_allclose(D, naive_delta(P), atol=1e-12)
        same = np.equal.outer(np.arange(6) < 3, np.arange(6) < 3)
        assert np.all(D[same] < 1e-12)
        assert np.all(D[~same] > 0.1)

    def test_complete_graph_triangle(self):
        np.testing.assert_array_equal(ns_dissimilarity(1 - np.eye(3)), np.zeros((3, 3)))

    @pytest.mark.parametrize("n", [0, 1, 2])
    def test_too_few_nodes(self, n):
        with pytest.raises(TooFewNodesError):
            ns_dissimilarity(np.zeros((n, n)))

    @given(st.integers(3, 9), st.integers(0, 2**31 - 1), st.booleans())
    def test_matches_triple_loop(self, n, seed, binary):
        r = np.random.default_rng(seed)
        X = r.random((n, n))
        X = (X + X.T) / 2
        if binary:
            X = (X > 0.5).astype(float)
            np.fill_diagonal(X, 0)
        D = ns_dissimilarity(X)
        np.testing.assert_allclose(D, naive_delta(X), atol=1e-12)
        assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0) and D.min() >= 0


class TestNeighborhoods:
    @given(st.integers(3, 30), st.integers(0, 2**31 - 1))
    def test_structure_invariants(self, n, seed):
        _, A = random_graph(n, seed)
        nb = neighborhood_structure(A)
        assert 0 < nb.h <= 1
        for i, members in enumerate(nb.neighborhoods):
            assert members.size >= 1
            assert i not in members

    def test_ties_are_all_admitted(self):
        # Large enough that the quantile rank stays inside one block.
        P = two_block(80)
        nb = neighborhood_structure(P)
        for i, members in enumerate(nb.neighborhoods):
            block = set(range(40)) if i < 40 else set(range(40, 80))
            assert set(members) == block - {i}


class TestNsEstimate:
    def test_erdos_renyi(self):
        # A single draw has entrywise noise near 0.06, so average over draws.
        r = np.random.default_rng(1)
        ests = [ns_estimate(sample_adjacency(np.full((200, 200), 0.5), r)) for _ in range(20)]
        mean = np.mean(ests, axis=0)
        assert np.all(np.abs(mean - 0.5) <= 0.1)
        assert abs(np.mean(ests) - 0.5) < 0.01

    def test_sbm_probabilities_are_a_fixed_point(self):
        P = two_block(80)
        np.testing.assert_allclose(ns_estimate(P), P, atol=1e-10)

    def test_real_valued_input_without_clamp(self, rng):
        R = rng.normal(size=(12, 12))
        R = (R + R.T) / 2
        out = ns_estimate(R, SmootherConfig(clamp_range=None))
        assert out.min() < 0

    def test_constant_offset_is_preserved(self, rng):
        P = two_block(40) + 0.1
        np.testing.assert_allclose(ns_estimate(P, SmootherConfig(clamp_range=None)), P, atol=1e-12)

    @given(st.integers(3, 40), st.integers(0, 2**31 - 1))
    def test_symmetric_and_bounded(self, n, seed):
        _, A = random_graph(n, seed, gid=(seed % 10) + 1)
        est = ns_estimate(A)
        assert np.array_equal(est, est.T)
        assert est.min() >= 0 and est.max() <= 1

    @given(st.integers(3, 20), st.integers(0, 2**31 - 1))
    def test_permutation_equivariance(self, n, seed):
        _, A = random_graph(n, seed, gid=(seed % 10) + 1)
        perm = np.random.default_rng(seed + 1).permutation(n)
        np.testing.assert_allclose(ns_estimate(A[np.ix_(perm, perm)]),
                                   ns_estimate(A)[np.ix_(perm, perm)], atol=1e-12)

    def test_consistency_trend(self):
        medians = []
        for n in (50, 100, 200, 400):
            errs = []
            for seed in range(20):
                P, A = random_graph(n, 1000 * n + seed)
                errs.append(np.mean((ns_estimate(A) - P) ** 2))
            medians.append(np.median(errs))
        assert all(a > b for a, b in zip(medians, medians[1:])), medians

    def test_mse_on_product_graphon(self):
        errs = [np.mean((ns_estimate(A) - P) ** 2) for P, A in
                (random_graph(50, 7000 + s) for s in range(50))]
        assert 1e-3 < np.mean(errs) < 2e-2


class TestUsvt:
    def test_zero_graph(self):
        np.testing.assert_array_equal(usvt_estimate(np.zeros((8, 8))), np.zeros((8, 8)))

    @pytest.mark.parametrize("n", [9, 20, 50])
    def test_complete_graph(self, n):
        est = usvt_estimate(1 - np.eye(n))
        np.testing.assert_allclose(est, np.full((n, n), (n - 1) / n), atol=1e-12)
        assert est.min() > 1 - 1.0 / 9 - 1e-12

    def test_output_is_probability_matrix(self):
        _, A = random_graph(60, 3, gid=9)
        est = usvt_estimate(A)
        assert np.array_equal(est, est.T)
        assert est.min() >= 0 and est.max() <= 1

import numpy as np
import pytest
import scipy.io
from hypothesis import given, settings, strategies as st

from sheaflab.graph import Graph, complete_graph, path_graph, random_connected_graph
from sheaflab.laplacian import (LaplacianError, NormalizationKind, assemble, degree_blocks,
                                inv_sqrt_psd, normalize, sheaf_laplacian)
from sheaflab.sheaf import Family, Sheaf, random_bundle, random_sheaf, trivial_sheaf
from sheaflab.spectral import harmonic_space


def adjacency(g):
    A = np.zeros((g.n, g.n))
    for u, v in g.edges:
        A[u, v] = A[v, u] = 1.0
    return A


def corpus(seed=0, count=12):
    rng = np.random.default_rng(seed)
    for i in range(count):
        g = random_connected_graph(int(rng.integers(3, 9)), 0.5, rng)
        family = ["orthogonal", "general", "diagonal", "scalar"][i % 4]
        d = 1 if family == "scalar" else int(rng.integers(1, 4))
        yield random_sheaf(g, d, family, seed=rng)


def test_p2_trivial():
    np.testing.assert_array_equal(assemble(trivial_sheaf(path_graph(2))).to_dense(),
                                  [[1.0, -1.0], [-1.0, 1.0]])


def test_trivial_equals_d_minus_a():
    g = random_connected_graph(12, 0.3, np.random.default_rng(5))
    A = adjacency(g)
    np.testing.assert_array_equal(assemble(trivial_sheaf(g)).to_dense(), np.diag(A.sum(1)) - A)


def test_bundle_degree_blocks():
    g = random_connected_graph(8, 0.5, np.random.default_rng(2))
    D = degree_blocks(assemble(random_bundle(g, 3, seed=1)))
    for v in range(g.n):
        np.testing.assert_allclose(D.diag[v], g.degrees[v] * np.eye(3), atol=1e-12)
    assert D.off is None
    dense = D.to_dense()
    assert np.abs(dense - np.diag(np.diag(dense))).max() <= 1e-12


def test_trivial_degree_blocks():
    g = complete_graph(4)
    np.testing.assert_array_equal(degree_blocks(assemble(trivial_sheaf(g))).to_dense(), 3 * np.eye(4))


def test_general_degree_blocks_psd():
    s = random_sheaf(complete_graph(5), 3, "general", seed=7)
    assert np.linalg.eigvalsh(assemble(s).diag).min() >= -1e-12


def test_assembled_symmetric_psd_and_sparse():
    for s in corpus():
        L = assemble(s).to_dense()
        assert np.abs(L - L.T).max() <= 1e-12
        assert np.linalg.eigvalsh(L).min() >= -1e-9 * max(1.0, np.linalg.norm(L, 2))
        A = adjacency(s.graph) + np.eye(s.n)
        mask = np.kron(A, np.ones((s.d, s.d))) == 0
        assert np.all(L[mask] == 0)


def test_sym_spectrum_in_unit_interval():
    for s in corpus(seed=1):
        lam = np.linalg.eigvalsh(sheaf_laplacian(s, "sym").to_dense())
        assert lam.min() >= -1e-9 and lam.max() <= 2 + 1e-9


def test_trivial_sym_is_classical_normalized():
    g = random_connected_graph(10, 0.4, np.random.default_rng(3))
    A = adjacency(g)
    Dm = np.diag(1 / np.sqrt(A.sum(1)))
    expected = np.eye(g.n) - Dm @ A @ Dm
    np.testing.assert_allclose(sheaf_laplacian(trivial_sheaf(g), "sym").to_dense(), expected, atol=1e-14)


def test_p2_sym_eigenvalues():
    M = sheaf_laplacian(trivial_sheaf(path_graph(2)), "sym").to_dense()
    np.testing.assert_allclose(M, [[1, -1], [-1, 1]], atol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(M), [0.0, 2.0], atol=1e-14)


def test_isolated_node():
    g = Graph(3, [(0, 1)])
    L = assemble(trivial_sheaf(g, 2))
    with pytest.raises(LaplacianError, match="AugSym"):
        normalize(L, "sym")
    dense = normalize(L, "augsym").to_dense()
    assert np.all(dense[4:] == 0) and np.all(dense[:, 4:] == 0)


def test_augsym_and_none():
    s = random_bundle(complete_graph(4), 2, seed=0)
    L = assemble(s)
    assert normalize(L, "none") is L
    S = np.eye(8) / np.sqrt(3 + 1.0)
    np.testing.assert_allclose(normalize(L, "augsym").to_dense(), S @ L.to_dense() @ S, atol=1e-14)


def test_normalization_kind_clamp():
    with pytest.raises(LaplacianError):
        NormalizationKind("sym", 0.0)


def test_weighted_laplacian_from_symmetric_scalar_sheaf():
    g = random_connected_graph(9, 0.4, np.random.default_rng(8))
    w = np.random.default_rng(9).uniform(0.1, 3.0, g.m)
    s = Sheaf(g, 1, np.sqrt(w), np.sqrt(w), Family.SCALAR)
    W = np.zeros((g.n, g.n))
    for (u, v), we in zip(g.edges, w):
        W[u, v] = W[v, u] = we
    np.testing.assert_allclose(assemble(s).to_dense(), np.diag(W.sum(1)) - W, rtol=1e-14, atol=1e-14)


def test_bundle_kernel_block_scaling():
    g = random_connected_graph(7, 0.5, np.random.default_rng(4))
    tree_like = random_bundle(g, 2, seed=0)
    from sheaflab.oracle import potential_sheaf
    s = potential_sheaf(g, np.stack([tree_like.maps_lo[0]] * g.n))
    K = harmonic_space(assemble(s)).basis
    scale = np.repeat(np.sqrt(g.degrees.astype(float)), 2)[:, None]
    delta = sheaf_laplacian(s, "sym")
    assert np.abs(delta.matmat(scale * K)).max() <= 1e-10


# -- inverse square root ----------------------------------------------------------

def test_inv_sqrt_examples():
    np.testing.assert_array_equal(inv_sqrt_psd(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(inv_sqrt_psd(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]), atol=1e-15)


def test_inv_sqrt_rejects_asymmetric():
    with pytest.raises(LaplacianError):
        inv_sqrt_psd(np.array([[1.0, 1.0], [0.0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 6), rank=st.integers(0, 6), seed=st.integers(0, 10_000))
def test_inv_sqrt_reconstructs_range_projector(d, rank, seed):
    rank = min(rank, d)
    G = np.random.default_rng(seed).standard_normal((d, rank)) + 0.5 * np.eye(d, rank)
    B = G @ G.T
    M = inv_sqrt_psd(B)
    lam, Q = np.linalg.eigh(B)
    keep = lam > 1e-8
    proj = Q[:, keep] @ Q[:, keep].T
    np.testing.assert_allclose(M @ B @ M, proj, atol=1e-8)


def test_inv_sqrt_stack():
    B = np.stack([np.diag([1.0, 4.0]), np.zeros((2, 2))])
    np.testing.assert_allclose(inv_sqrt_psd(B), [np.diag([1.0, 0.5]), np.zeros((2, 2))])


# -- matmat --------------------------------------------------------------------------

def test_matmat_zero_and_dense():
    for s in corpus(seed=2, count=8):
        M = sheaf_laplacian(s, "augsym")
        X = np.random.default_rng(0).standard_normal((s.n * s.d, 4))
        assert np.all(M.matmat(np.zeros_like(X)) == 0)
        ref = M.to_dense() @ X
        assert np.linalg.norm(M @ X - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


def test_matmat_harmonic_vector():
    s = random_bundle(random_connected_graph(6, 0.0, np.random.default_rng(1)), 2, seed=3)
    delta = sheaf_laplacian(s, "sym")
    H = harmonic_space(delta)
    assert H.dim >= 1
    assert np.linalg.norm(delta.matmat(H.basis[:, :1])) <= 1e-8


def test_matmat_shape_mismatch():
    with pytest.raises(LaplacianError):
        assemble(trivial_sheaf(path_graph(3))).matmat(np.ones((4, 1)))


def test_dense_cap():
    L = assemble(trivial_sheaf(path_graph(4100)))
    with pytest.raises(LaplacianError):
        L.to_dense()


def test_matrix_market_roundtrip(tmp_path):
    L = assemble(random_sheaf(complete_graph(4), 2, "general", seed=1))
    L.write_matrix_market(tmp_path / "L.mtx")
    back = scipy.io.mmread(str(tmp_path / "L.mtx")).toarray()
    np.testing.assert_allclose(back, L.to_dense(), rtol=1e-12)

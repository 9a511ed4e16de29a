import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from sheaflab.graph import (Graph, GraphError, complete_graph, cycle_graph, path_graph,
                            random_connected_graph, random_tree)
from sheaflab.laplacian import assemble
from sheaflab.sheaf import (Family, RestrictionMap, Sheaf, SheafError, SingularMapError,
                            cycle_fixed_space, exhaustive_radius, householder_orthogonal,
                            max_holonomy, path_dependence_radius, random_bundle, random_sheaf,
                            rotation2, scalar_sheaf, transport, tree_transports, trivial_sheaf)


def triangle_rotations(t01, t02, t12):
    g = cycle_graph(3)          # edges (0,1), (0,2), (1,2)
    theta = {(0, 1): t01, (0, 2): t02, (1, 2): t12}
    lo = np.stack([np.eye(2)] * 3)
    hi = np.stack([rotation2(theta[e]) for e in g.edges])
    return Sheaf(g, 2, lo, hi, Family.ORTHOGONAL)


# -- restriction maps -----------------------------------------------------------

def test_family_invariants():
    with pytest.raises(SheafError):
        RestrictionMap(np.array([[1.0, 0.1], [0.0, 1.0]]), Family.DIAGONAL)
    with pytest.raises(SheafError):
        RestrictionMap(2.0 * np.eye(2), Family.ORTHOGONAL)
    with pytest.raises(SheafError):
        RestrictionMap(np.eye(2), Family.SCALAR)
    assert RestrictionMap([[3.0]], "scalar").family is Family.SCALAR


def test_sheaf_maps_are_read_only():
    s = trivial_sheaf(path_graph(3), 2)
    with pytest.raises(ValueError):
        s.maps_lo[0, 0, 0] = 5.0


def test_restriction_lookup():
    g = path_graph(3)
    s = scalar_sheaf(g, [1.0, 2.0], [3.0, 4.0])
    assert s.restriction(1, 1)[0, 0] == 2.0 and s.restriction(2, 1)[0, 0] == 4.0
    with pytest.raises(SheafError):
        s.restriction(0, 1)


# -- trivial sheaves -------------------------------------------------------------

def test_trivial_p2():
    s = trivial_sheaf(path_graph(2), 1)
    assert s.maps_lo.tolist() == [[[1.0]]] and s.maps_hi.tolist() == [[[1.0]]]


def test_trivial_k3():
    s = trivial_sheaf(complete_graph(3), 2)
    maps = np.concatenate([s.maps_lo, s.maps_hi])
    assert maps.shape == (6, 2, 2) and np.all(maps == np.eye(2))


def test_trivial_laplacian_is_graph_laplacian():
    g = random_connected_graph(9, 0.4, np.random.default_rng(1))
    A = np.zeros((g.n, g.n))
    for u, v in g.edges:
        A[u, v] = A[v, u] = 1
    np.testing.assert_array_equal(assemble(trivial_sheaf(g)).to_dense(), np.diag(A.sum(1)) - A)


# -- Householder products ---------------------------------------------------------

def test_householder_axis_reflection():
    np.testing.assert_array_equal(householder_orthogonal([[1.0, 0.0]]), [[-1.0, 0.0], [0.0, 1.0]])


def test_householder_involution():
    v = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(householder_orthogonal([v, v]), np.eye(3), atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 6), k=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_householder_orthogonal_with_determinant(d, k, seed):
    k = min(k, d)
    M = householder_orthogonal(np.random.default_rng(seed).standard_normal((k, d)))
    np.testing.assert_allclose(M.T @ M, np.eye(d), atol=1e-12)
    assert np.isclose(np.linalg.det(M), (-1) ** k)


def test_householder_errors():
    with pytest.raises(SheafError):
        householder_orthogonal([[0.0, 0.0]])
    with pytest.raises(SheafError):
        householder_orthogonal(np.ones((3, 2)))


# -- random bundles ------------------------------------------------------------------

def test_random_bundle_d1_signs():
    s = random_bundle(complete_graph(6), 1, seed=3)
    assert set(np.unique(np.concatenate([s.maps_lo, s.maps_hi]).ravel())) <= {-1.0, 1.0}


def test_random_bundle_deterministic():
    g = complete_graph(5)
    a, b = random_bundle(g, 3, seed=9), random_bundle(g, 3, seed=9)
    np.testing.assert_array_equal(a.maps_lo, b.maps_lo)
    np.testing.assert_array_equal(a.maps_hi, b.maps_hi)
    assert not np.array_equal(a.maps_lo, random_bundle(g, 3, seed=10).maps_lo)


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_random_bundle_orthogonal(d):
    s = random_bundle(complete_graph(5), d, seed=d)
    assert s.is_bundle()
    maps = np.concatenate([s.maps_lo, s.maps_hi])
    err = np.linalg.norm(np.swapaxes(maps, 1, 2) @ maps - np.eye(d), axis=(1, 2))
    assert err.max() <= 1e-10


def test_random_sheaf_symmetric_flag():
    s = random_sheaf(cycle_graph(5), 2, "general", seed=0, symmetric=True)
    assert s.is_symmetric()
    assert not random_sheaf(cycle_graph(5), 2, "general", seed=0).is_symmetric()


def test_json_roundtrip():
    s = random_sheaf(cycle_graph(4), 2, "diagonal", seed=1)
    back = Sheaf.from_json(s.to_json())
    assert back.family is Family.DIAGONAL and back.graph.edges == s.graph.edges
    np.testing.assert_array_equal(back.maps_lo, s.maps_lo)
    np.testing.assert_array_equal(back.maps_hi, s.maps_hi)


# -- transport --------------------------------------------------------------------------

def test_transport_length_zero_is_identity():
    s = random_bundle(cycle_graph(4), 3, seed=0)
    np.testing.assert_array_equal(transport(s, [2]).matrix, np.eye(3))


def test_trivial_transport_is_identity():
    s = trivial_sheaf(complete_graph(5), 3)
    np.testing.assert_array_equal(transport(s, [0, 3, 1, 4, 2]).matrix, np.eye(3))


def test_triangle_cycle_rotation():
    t01, t02, t12 = 0.4, 1.1, -0.3
    s = triangle_rotations(t01, t02, t12)
    # each step a -> b applies R(theta)^{+-1} by which endpoint holds the rotation
    expected = rotation2(t02 - t01 - t12)
    np.testing.assert_allclose(transport(s, [0, 1, 2, 0]).matrix, expected, atol=1e-14)
    np.testing.assert_allclose(transport(s, [0, 2, 1, 0]).matrix, expected.T, atol=1e-14)


def test_transport_rejects_non_adjacent():
    with pytest.raises(GraphError):
        transport(trivial_sheaf(path_graph(3)), [0, 2])
    with pytest.raises(SheafError):
        transport(trivial_sheaf(path_graph(3)), [])


def test_general_transport_singular_map():
    g = path_graph(2)
    s = Sheaf(g, 2, np.eye(2)[None], np.array([[[1.0, 0.0], [0.0, 0.0]]]), Family.GENERAL)
    with pytest.raises(SingularMapError):
        transport(s, [0, 1])
    np.testing.assert_allclose(transport(s, [1, 0]).matrix, [[1.0, 0.0], [0.0, 0.0]])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), family=st.sampled_from(["orthogonal", "general", "diagonal"]))
def test_transport_composition_law(seed, family):
    rng = np.random.default_rng(seed)
    g = complete_graph(5)
    s = random_sheaf(g, 3, family, seed=rng)
    p1 = [int(x) for x in rng.permutation(5)[:3]]
    p2 = [p1[-1]] + [int(x) for x in rng.permutation([v for v in range(5) if v != p1[-1]])[:2]]
    whole = transport(s, p1 + p2[1:]).matrix
    np.testing.assert_allclose(whole, transport(s, p2).matrix @ transport(s, p1).matrix,
                               rtol=1e-8, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_orthogonal_reverse_is_inverse(seed):
    rng = np.random.default_rng(seed)
    s = random_bundle(complete_graph(5), 3, seed=rng)
    path = [int(x) for x in rng.permutation(5)]
    P = transport(s, path).matrix
    np.testing.assert_allclose(transport(s, path[::-1]).matrix, P.T, atol=1e-12)
    np.testing.assert_allclose(P.T @ P, np.eye(3), atol=1e-10)


# -- path dependence ---------------------------------------------------------------------

def test_radius_trivial_and_tree():
    assert path_dependence_radius(trivial_sheaf(complete_graph(5), 2)) == 0.0
    tree = random_tree(9, np.random.default_rng(0))
    assert path_dependence_radius(random_bundle(tree, 3, seed=1)) == 0.0


def test_radius_half_turn_is_two():
    s = triangle_rotations(np.pi, 0.0, 0.0)
    assert path_dependence_radius(s) == pytest.approx(2.0, abs=1e-12)
    assert exhaustive_radius(s) == pytest.approx(2.0, abs=1e-12)


def test_radius_requires_bundle():
    with pytest.raises(SheafError):
        path_dependence_radius(random_sheaf(cycle_graph(3), 2, "general"))


def test_exhaustive_radius_bounds_basis_radius():
    for seed in range(5):
        s = random_bundle(complete_graph(5), 2, seed=seed)
        assert exhaustive_radius(s) >= max_holonomy(s) - 1e-12


def test_tree_transports_match_paths():
    g = random_connected_graph(7, 0.5, np.random.default_rng(2))
    s = random_bundle(g, 2, seed=4)
    P = tree_transports(s, 0)
    np.testing.assert_array_equal(P[0], np.eye(2))
    assert all(np.allclose(P[v].T @ P[v], np.eye(2)) for v in range(g.n))


def test_fixed_space_examples():
    assert cycle_fixed_space(trivial_sheaf(cycle_graph(3), 3), [0, 1, 2, 0]).shape == (3, 3)
    assert cycle_fixed_space(triangle_rotations(np.pi / 2, 0, 0), [0, 1, 2, 0]).shape[1] == 0
    full = cycle_fixed_space(triangle_rotations(0.7, 0.7, 0.0), [0, 1, 2, 0])
    assert full.shape[1] == 2
    with pytest.raises(SheafError):
        cycle_fixed_space(trivial_sheaf(cycle_graph(3)), [0, 1, 2])


def test_fixed_space_of_reflection_is_axis():
    g = cycle_graph(3)
    lo = np.stack([np.eye(2)] * 3)
    hi = lo.copy()
    hi[0] = householder_orthogonal([[1.0, 0.0]])
    basis = cycle_fixed_space(Sheaf(g, 2, lo, hi, Family.ORTHOGONAL), [0, 1, 2, 0])
    assert basis.shape == (2, 1)
    np.testing.assert_allclose(np.abs(basis[:, 0]), [0.0, 1.0], atol=1e-12)


def test_sheaf_on_edgeless_graph():
    s = trivial_sheaf(Graph(3, []), 2)
    assert s.maps_lo.shape == (0, 2, 2)
    with pytest.raises(GraphError):
        path_dependence_radius(s)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
@pytest.mark.parametrize("spread", [1e-3, 1.0])
def test_pair_distance_matches_brute_force(d, spread):
    from sheaflab.sheaf import _max_pair_distance
    rng = np.random.default_rng(d)
    base = random_bundle(cycle_graph(3), d, seed=d).maps_lo[0]
    mats = []
    for _ in range(12):
        A = rng.standard_normal((d, d)) * spread
        Q = scipy.linalg.expm(A - A.T) @ base
        mats.append(-Q if d == 1 and rng.random() < 0.5 else Q)
    M = np.stack(mats)
    ref = max(np.linalg.norm(a - b, 2) for a in M for b in M)
    assert _max_pair_distance(M) == pytest.approx(ref, abs=1e-7)
    assert _max_pair_distance(np.concatenate([M, M[:1] @ np.diag([-1.0] + [1.0] * (d - 1))])) \
        == pytest.approx(2.0)


def test_exhaustive_radius_on_dense_graph():
    s = random_bundle(complete_graph(8), 3, seed=0)
    assert path_dependence_radius(s) <= exhaustive_radius(s) + 1e-12 <= 2.0 + 1e-12

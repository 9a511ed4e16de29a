import numpy as np
import pytest

from sheaflab.experiments import (angle_census, balanced_labels, build_oracle, class_directions,
                                  complexity_table, oracle_diffuse, pairwise_angles,
                                  parse_graph_spec, random_graph_with_m, rotation_angles,
                                  scalar_transports, scaling_exponent, time_gcn_layer,
                                  time_trivial_layer)
from sheaflab.graph import GraphError, cycle_graph
from sheaflab.sheaf import Family, Sheaf, rotation2


@pytest.mark.parametrize("spec, n, m", [("cycle:7", 7, 7), ("path:5", 5, 4),
                                        ("complete:5", 5, 10), ("regular:10:3", 10, 15)])
def test_parse_graph_spec(spec, n, m):
    g, labels = parse_graph_spec(spec, np.random.default_rng(0))
    assert (g.n, g.m) == (n, m) and labels is None


def test_parse_bipartite_and_file_specs(tmp_path):
    g, labels = parse_graph_spec("bipartite:6:5:0.5", np.random.default_rng(0))
    assert g.n == 11 and np.bincount(labels).tolist() == [6, 5]
    path = tmp_path / "g.txt"
    path.write_text("0 1\n1 2\n")
    assert parse_graph_spec(f"file:{path}", np.random.default_rng(0))[0].m == 2


@pytest.mark.parametrize("spec", ["cycle", "cycle:x", "torus:4", "random:5"])
def test_parse_graph_spec_errors(spec):
    with pytest.raises(GraphError):
        parse_graph_spec(spec, np.random.default_rng(0))


def test_balanced_labels():
    y = balanced_labels(10, 3, np.random.default_rng(0))
    assert sorted(np.bincount(y)) == [3, 3, 4]
    with pytest.raises(GraphError):
        balanced_labels(2, 3, np.random.default_rng(0))


def test_transport_statistics():
    g = cycle_graph(4)
    s1 = Sheaf(g, 1, np.array([1.0, -2.0, 0.5, 1.0]), np.array([1.0, 1.0, 2.0, -1.0]),
               Family.SCALAR)
    np.testing.assert_allclose(scalar_transports(s1), [1.0, -2.0, 1.0, -1.0])
    lo = np.stack([np.eye(2)] * 4)
    hi = np.stack([rotation2(t) for t in (0.0, 0.5, -1.0, np.pi)])
    s2 = Sheaf(g, 2, lo, hi, Family.ORTHOGONAL)
    np.testing.assert_allclose(rotation_angles(s2), [0.0, 0.5, 1.0, np.pi], atol=1e-12)
    census = angle_census(s2, [0, 0, 1, 1])
    # edges are sorted: (0,1), (0,3), (1,2), (2,3); the first and last are intra-class
    assert census["intra_mean"] == pytest.approx(np.pi / 2)
    assert census["inter_mean"] == pytest.approx(0.75)
    assert sum(census["hist_counts"]) == 4


def test_class_directions_and_angles():
    Z = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
    dirs = class_directions(Z, [0, 0, 1], 3)
    np.testing.assert_allclose(dirs, [[1, 0], [0, 1]])
    np.testing.assert_allclose(pairwise_angles(dirs), [[0, np.pi / 2], [np.pi / 2, 0]], atol=1e-12)


def test_oracle_diffuse_reaches_separation():
    g = cycle_graph(12)
    y = np.arange(12) % 4
    res = oracle_diffuse("orth2", g, y, 40.0, seed=1)
    e = res["trajectory"].energies
    assert e[-1] < 1e-4 * e[0] and res["train_acc"][-1] == 1.0


def test_build_oracle_rejects_unknown():
    with pytest.raises(ValueError):
        build_oracle("mystery", cycle_graph(4), np.zeros(4, int))


def test_random_graph_with_m():
    g = random_graph_with_m(20, 57, np.random.default_rng(0))
    assert g.m == 57 and len(set(g.edges)) == 57
    with pytest.raises(GraphError):
        random_graph_with_m(4, 7, np.random.default_rng(0))


def test_scaling_exponent():
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    assert scaling_exponent(xs, 3 * xs ** 1.5) == pytest.approx(1.5)


def test_timers_return_positive_times():
    g = random_graph_with_m(50, 120, np.random.default_rng(1))
    rows = complexity_table(50, [120], 3, [1, 2], ("diagonal", "general", "orthogonal"), repeats=1)
    assert len(rows) == 6 and all(r.seconds > 0 for r in rows)
    assert time_trivial_layer(g, 4, repeats=1) > 0
    assert time_gcn_layer(g, 4, repeats=1) > 0

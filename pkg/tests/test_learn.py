import json

import numpy as np
import pytest
import scipy.optimize

from sheaflab import autodiff as ad
from sheaflab.experiments import BipartiteSettings, bipartite_experiment
from sheaflab.graph import LabeledDataset, cycle_graph, random_connected_graph, synth_bipartite
from sheaflab.laplacian import assemble, sheaf_laplacian
from sheaflab.learn import (Adam, NSDConfig, NSDModel, SheafLearnerParams, TrainConfig,
                            build_learned_sheaf, constrain_symmetric, diagonal_fast_path,
                            finite_difference_check, laplacian_operator, learner_maps,
                            learner_output_dim, load_checkpoint, phi_restriction,
                            save_checkpoint, train, write_history_csv)
from sheaflab.sheaf import Family, random_sheaf


def tiny_dataset(n=10, k=3, C=2, seed=0):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, 0.3, rng)
    y = np.arange(n) % C
    X = rng.standard_normal((n, k)) + y[:, None]
    return LabeledDataset(g, X, y, np.arange(0, n, 2), np.array([1, 3]), np.arange(5, n, 2))


# -- learner -----------------------------------------------------------------------

def test_output_dims():
    assert learner_output_dim("diagonal", 3) == 3
    assert learner_output_dim("general", 3) == 9
    assert learner_output_dim("orthogonal", 3, householder_k=2) == 6
    assert learner_output_dim("diagonal", 5, hybrid=True) == 3
    with pytest.raises(ValueError):
        learner_output_dim("orthogonal", 2, householder_k=3)
    with pytest.raises(ValueError):
        learner_output_dim("general", 2, hybrid=True)


def test_phi_zero_weights():
    p = SheafLearnerParams(np.zeros((2, 8)), "diagonal", d=2)
    F = phi_restriction(p, np.ones((2, 2)), np.ones((2, 2)))
    np.testing.assert_array_equal(F.matrix, np.zeros((2, 2)))
    s = build_learned_sheaf(p, cycle_graph(4), np.ones((8, 2)))
    assert np.linalg.eigvalsh(assemble(s).to_dense()).min() >= -1e-12


@pytest.mark.parametrize("family", ["diagonal", "general", "orthogonal"])
def test_phi_swap_changes_output(family):
    rng = np.random.default_rng(1)
    q = learner_output_dim(family, 2)
    p = SheafLearnerParams(rng.standard_normal((q, 8)), family, d=2)
    xv, xu = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
    assert not np.allclose(phi_restriction(p, xv, xu).matrix, phi_restriction(p, xu, xv).matrix)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_phi_orthogonal(k):
    rng = np.random.default_rng(k)
    p = SheafLearnerParams(rng.standard_normal((3 * k, 12)), "orthogonal", d=3, householder_k=k)
    M = phi_restriction(p, rng.standard_normal((3, 2)), rng.standard_normal((3, 2))).matrix
    np.testing.assert_allclose(M.T @ M, np.eye(3), atol=1e-10)
    assert np.isclose(np.linalg.det(M), (-1) ** k)


def test_hybrid_block():
    rng = np.random.default_rng(0)
    p = SheafLearnerParams(rng.standard_normal((1, 6)), "diagonal", d=3, hybrid=True)
    lo = phi_restriction(p, rng.standard_normal(3), rng.standard_normal(3)).matrix
    hi = phi_restriction(p, rng.standard_normal(3), rng.standard_normal(3), high_end=True).matrix
    assert lo[1, 1] == 1 and lo[2, 2] == 1 and hi[1, 1] == 1 and hi[2, 2] == -1


def test_identical_features_give_identical_maps():
    rng = np.random.default_rng(2)
    g = random_connected_graph(8, 0.4, rng)
    p = SheafLearnerParams(rng.standard_normal((4, 8)), "general", d=2)
    s = build_learned_sheaf(p, g, np.tile(rng.standard_normal((2, 2)), (g.n, 1)))
    assert np.allclose(s.maps_lo, s.maps_lo[0]) and np.allclose(s.maps_hi, s.maps_hi[0])


def test_learned_sheaf_deterministic_and_distinct():
    rng = np.random.default_rng(3)
    g = random_connected_graph(8, 0.4, rng)
    p = SheafLearnerParams(rng.standard_normal((2, 8)), "diagonal", d=2)
    X = rng.standard_normal((16, 2))
    a, b = build_learned_sheaf(p, g, X), build_learned_sheaf(p, g, X)
    assert a.maps_lo.tobytes() == b.maps_lo.tobytes()
    diag = a.maps_lo[:, 0, 0]
    assert np.unique(np.round(diag, 12)).size == g.m


def test_constrain_symmetric():
    rng = np.random.default_rng(4)
    g = random_connected_graph(9, 0.4, rng)
    p = constrain_symmetric(SheafLearnerParams(rng.standard_normal((1, 4)), "diagonal", d=1))
    s = build_learned_sheaf(p, g, rng.standard_normal((9, 2)))
    np.testing.assert_array_equal(s.maps_lo, s.maps_hi)
    w = s.maps_lo[:, 0, 0] ** 2
    W = np.zeros((9, 9))
    for (u, v), we in zip(g.edges, w):
        W[u, v] = W[v, u] = we
    np.testing.assert_allclose(assemble(s).to_dense(), np.diag(W.sum(1)) - W, atol=1e-14)


def test_vector_maps_match_matrices():
    rng = np.random.default_rng(5)
    g = random_connected_graph(7, 0.4, rng)
    V, H = ad.const(rng.standard_normal((3, 12))), ad.const(rng.standard_normal((7, 6)))
    lo_v, hi_v = learner_maps(V, H, g.edge_array, "diagonal", 3, as_vectors=True)
    lo_m, hi_m = learner_maps(V, H, g.edge_array, "diagonal", 3)
    np.testing.assert_array_equal(lo_v.value[:, :, None] * np.eye(3), lo_m.value)
    np.testing.assert_array_equal(hi_v.value[:, :, None] * np.eye(3), hi_m.value)
    assert diagonal_fast_path("diagonal", False) and not diagonal_fast_path("general", False)
    with pytest.raises(ValueError):
        learner_maps(ad.const(np.zeros((9, 12))), H, g.edge_array, "general", 3, as_vectors=True)


# -- differentiable Laplacian ------------------------------------------------------------

@pytest.mark.parametrize("norm", ["augsym", "sym", "none"])
@pytest.mark.parametrize("family", ["general", "diagonal"])
def test_operator_matches_dense(norm, family):
    rng = np.random.default_rng(6)
    g = random_connected_graph(8, 0.4, rng)
    s = random_sheaf(g, 3, family, seed=rng)
    X = rng.standard_normal((8, 3, 2))
    if family == "diagonal":
        F_lo = ad.const(np.diagonal(s.maps_lo, axis1=1, axis2=2).copy())
        F_hi = ad.const(np.diagonal(s.maps_hi, axis1=1, axis2=2).copy())
    else:
        F_lo, F_hi = ad.const(s.maps_lo), ad.const(s.maps_hi)
    out = laplacian_operator(F_lo, F_hi, g.edge_array, 8, norm)(ad.const(X)).value
    ref = sheaf_laplacian(s, norm).to_dense() @ X.reshape(24, 2)
    np.testing.assert_allclose(out.reshape(24, 2), ref, atol=1e-13)


# -- model ------------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        NSDConfig(2, 2, d=2, symmetric=True)
    with pytest.raises(ValueError):
        NSDConfig(3, 2, d=1, hidden=2, encoder="identity")
    with pytest.raises(ValueError):
        NSDConfig(2, 2, norm="rw")
    with pytest.raises(ValueError):
        NSDConfig(2, 2, sheaf_mode="shared")


def test_forward_deterministic_and_shape():
    data = tiny_dataset()
    m1 = NSDModel(NSDConfig(3, 2, d=2, hidden=4, layers=2, seed=7))
    m2 = NSDModel(NSDConfig(3, 2, d=2, hidden=4, layers=2, seed=7))
    a, b = m1.forward(data), m2.forward(data)
    assert a.shape == (10, 2)
    np.testing.assert_array_equal(a, b)


def test_forward_shape_mismatch():
    with pytest.raises(ValueError):
        NSDModel(NSDConfig(4, 2)).forward(tiny_dataset())


def test_t0_is_logistic_regression():
    data = tiny_dataset()
    m = NSDModel(NSDConfig(3, 2, d=1, hidden=3, layers=0, encoder="identity"))
    assert set(m.params) == {"out.W", "out.b"}
    np.testing.assert_allclose(m.forward(data), data.features @ m.params["out.W"] + m.params["out.b"])


def test_pure_diffusion_reduction():
    data = tiny_dataset()
    cfg = NSDConfig(3, 2, d=1, hidden=3, layers=1, encoder="identity", sigma="identity",
                    learn_w1=False, learn_w2=False, learn_eps=False, norm="augsym")
    m = NSDModel(cfg)
    m.params["sheaf0.V"][:] = 0.0
    s = build_learned_sheaf(m.learner(0), data.graph, data.features)
    # V = 0 gives tanh(0) = 0 maps, so the Laplacian vanishes and diffusion is the identity
    np.testing.assert_allclose(m.final_features(data).reshape(10, 3), data.features)
    assert np.all(s.maps_lo == 0)


def test_gradient_vanishes_at_convex_minimum():
    data = tiny_dataset(n=30, k=2, seed=9)
    data = LabeledDataset(data.graph, np.random.default_rng(1).standard_normal((30, 2)),
                          data.labels, np.arange(30), np.array([], int), np.array([], int))
    m = NSDModel(NSDConfig(2, 2, d=1, hidden=2, layers=0, encoder="identity"))
    shapes = {k: v.shape for k, v in m.params.items()}
    keys = sorted(shapes)

    def unpack(z):
        out, i = {}, 0
        for k in keys:
            size = int(np.prod(shapes[k]))
            out[k] = z[i:i + size].reshape(shapes[k])
            i += size
        return out

    def fun(z):
        m.params = unpack(z)
        loss, g, _ = m.loss_and_grad(data)
        return loss, np.concatenate([g[k].ravel() for k in keys])

    z0 = np.concatenate([m.params[k].ravel() for k in keys])
    res = scipy.optimize.minimize(fun, z0, jac=True, method="BFGS", options={"gtol": 1e-11})
    m.params = unpack(res.x)
    g = m.grad(data)
    assert max(np.abs(v).max() for v in g.values()) <= 1e-8


@pytest.mark.parametrize("layers", [1, 2])
@pytest.mark.parametrize("family,extra", [("diagonal", {}), ("orthogonal", {}), ("general", {}),
                                          ("diagonal", {"hybrid": True}),
                                          ("diagonal", {"symmetric": True})])
def test_finite_differences(layers, family, extra):
    data = tiny_dataset()
    d = 3 if extra.get("hybrid") else (1 if extra.get("symmetric") else 2)
    cfg = NSDConfig(3, 2, d=d, hidden=2, layers=layers, family=family, seed=layers, **extra)
    errs = finite_difference_check(NSDModel(cfg), data)
    assert max(errs.values()) <= 1e-4, errs


def test_learned_orthogonal_maps_stay_orthogonal():
    data = tiny_dataset()
    cfg = NSDConfig(3, 2, d=2, hidden=2, layers=1, family="orthogonal")
    res = train(NSDModel(cfg), data, TrainConfig(lr=0.05, epochs=5))
    for s in res.model.learned_sheaves(data):
        maps = np.concatenate([s.maps_lo, s.maps_hi])
        assert np.abs(np.swapaxes(maps, 1, 2) @ maps - np.eye(2)).max() <= 1e-10


# -- training ---------------------------------------------------------------------------

def test_lr_zero_leaves_parameters():
    data = tiny_dataset()
    m = NSDModel(NSDConfig(3, 2, d=2, hidden=2, layers=1))
    res = train(m, data, TrainConfig(lr=0.0, epochs=4, weight_decay=0.0, sheaf_weight_decay=0.0))
    for k in m.params:
        np.testing.assert_array_equal(res.model.params[k], m.params[k])
    assert len({row["loss"] for row in res.history}) == 1


def test_convex_model_loss_decreases():
    data = tiny_dataset(n=20)
    m = NSDModel(NSDConfig(3, 2, d=1, hidden=3, layers=0, encoder="identity"))
    res = train(m, data, TrainConfig(lr=1e-3, epochs=10, weight_decay=0.0, patience=100))
    assert np.all(np.diff([r["loss"] for r in res.history]) <= 1e-12)


def test_training_deterministic():
    data = tiny_dataset()
    cfg = NSDConfig(3, 2, d=2, hidden=2, layers=2, seed=3)
    a = train(NSDModel(cfg), data, TrainConfig(epochs=15))
    b = train(NSDModel(cfg), data, TrainConfig(epochs=15))
    for k in a.model.params:
        assert a.model.params[k].tobytes() == b.model.params[k].tobytes()


def test_training_fits_tiny_dataset():
    data = tiny_dataset()
    res = train(NSDModel(NSDConfig(3, 2, d=2, hidden=4, layers=1)), data,
                TrainConfig(lr=0.05, epochs=200, patience=200))
    assert max(r["train_acc"] for r in res.history) >= 0.95


def test_early_stopping_and_empty_val():
    data = tiny_dataset()
    res = train(NSDModel(NSDConfig(3, 2)), data, TrainConfig(lr=0.05, epochs=300, patience=5))
    assert len(res.history) <= 300 and res.best_epoch <= len(res.history) - 1
    no_val = LabeledDataset(data.graph, data.features, data.labels, data.train,
                            np.array([], int), data.test)
    res2 = train(NSDModel(NSDConfig(3, 2)), no_val, TrainConfig(epochs=7))
    assert res2.best_epoch == 6 and len(res2.history) == 7


def test_weight_decay_groups():
    m = NSDModel(NSDConfig(3, 2, layers=1))
    assert m.param_group("sheaf0.V") == "sheaf" and m.param_group("layer0.W1") == "regular"
    p = {"w": np.array([1.0])}
    opt = Adam(p, lr=0.1, weight_decay={"w": 1.0})
    opt.step(p, {"w": np.array([0.0])})
    assert p["w"][0] < 1.0


def test_checkpoint_roundtrip(tmp_path):
    data = tiny_dataset()
    m = NSDModel(NSDConfig(3, 2, d=2, hidden=2, family="orthogonal", seed=5))
    save_checkpoint(tmp_path / "ck.json", m, epoch=3, metrics={"test_acc": 0.5})
    back, obj = load_checkpoint(tmp_path / "ck.json")
    assert obj["epoch"] == 3 and obj["metrics"]["test_acc"] == 0.5
    np.testing.assert_array_equal(back.forward(data), m.forward(data))
    write_history_csv(tmp_path / "h.csv", [{"epoch": 0, "loss": 1.0, "train_acc": 0.5,
                                            "val_acc": 0.5, "test_acc": 0.5}])
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "epoch,loss,train_acc,val_acc,test_acc"
    json.loads((tmp_path / "ck.json").read_text())


def test_bipartite_general_learner_learns_negative_transports():
    cfg = BipartiteSettings(nA=30, nB=30, p=0.2, t_grid=(5,), epochs=150, seed=1)
    row = bipartite_experiment(cfg, models=("general",))["rows"][0]
    assert row["test_acc"] >= 0.9 and row["neg_fraction"] >= 0.9

"""Experiment recipes shared by the CLI, the demos and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .diffusion import DiffusionConfig, diffuse, linear_probe, node_features
from .graph import (Graph, GraphError, LabeledDataset, complete_graph, cycle_graph, load_edge_list,
                    path_graph, random_connected_graph, random_regular_graph, synth_bipartite,
                    synth_multiclass)
from .laplacian import NormKind, assemble, normalize
from .learn import (NSDConfig, NSDModel, TrainConfig, diagonal_fast_path, laplacian_operator,
                    laplacian_pattern, learner_maps, train)
from .oracle import (diagonal_multiclass_sheaf, homophily_sym_sheaf, orth_bundle_sheaf,
                     regular_rotation_sheaf, signed_two_class_sheaf)
from .sheaf import Sheaf


# --------------------------------------------------------------------------
# transport statistics


def scalar_transports(s: Sheaf) -> np.ndarray:
    """Per-edge transport ``F_hi F_lo`` of a d = 1 sheaf."""
    return s.maps_lo[:, 0, 0] * s.maps_hi[:, 0, 0]


def rotation_angles(s: Sheaf) -> np.ndarray:
    """Absolute rotation angle of the per-edge transport of a d = 2 sheaf."""
    P = np.swapaxes(s.maps_hi, 1, 2) @ s.maps_lo
    return np.abs(np.arctan2(P[:, 1, 0], P[:, 0, 0]))


def angle_census(s: Sheaf, labels) -> dict:
    y = np.asarray(labels)
    ea = s.graph.edge_array
    same = y[ea[:, 0]] == y[ea[:, 1]]
    ang = rotation_angles(s)
    hist, edges = np.histogram(ang, bins=12, range=(0.0, np.pi))
    return {
        "intra_mean": float(ang[same].mean()) if same.any() else float("nan"),
        "inter_mean": float(ang[~same].mean()) if (~same).any() else float("nan"),
        "inter_median": float(np.median(ang[~same])) if (~same).any() else float("nan"),
        "hist_counts": hist.tolist(),
        "hist_edges": edges.tolist(),
    }


def class_directions(Z: np.ndarray, labels, n: int) -> np.ndarray:
    """Unit mean direction of the (normalized) node vectors of each class."""
    F = node_features(Z, n)
    y = np.asarray(labels)
    nrm = np.linalg.norm(F, axis=1, keepdims=True)
    U = F / np.where(nrm > 0, nrm, 1.0)
    dirs = []
    for c in range(int(y.max()) + 1):
        m = U[y == c].mean(axis=0)
        dirs.append(m / max(np.linalg.norm(m), 1e-300))
    return np.array(dirs)


def pairwise_angles(dirs: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(dirs @ dirs.T, -1.0, 1.0))


# --------------------------------------------------------------------------
# bipartite experiment


@dataclass
class BipartiteSettings:
    nA: int = 100
    nB: int = 100
    p: float = 0.03
    mean_sep: float = 0.5
    sigma: float = 1.0
    seed: int = 0
    t_grid: tuple = (0, 1, 5, 20)
    lr: float = 0.05
    epochs: int = 200
    dt: float = 1.0


def bipartite_model_config(T: int, symmetric: bool, seed: int, dt: float = 1.0, feat_dim: int = 2) -> NSDConfig:
    """Vanilla d = 1 sheaf diffusion: identity encoder, W = I, no nonlinearity,
    one sheaf learned from the input features, linear readout."""
    return NSDConfig(input_dim=feat_dim, n_classes=2, d=1, hidden=feat_dim, layers=T,
                     family="general", sigma="id", encoder="identity", sheaf_mode="fixed",
                     symmetric=symmetric, learn_w1=False, learn_w2=False, learn_eps=False,
                     norm="augsym", dt=dt, seed=seed)


def bipartite_experiment(cfg: BipartiteSettings, data: LabeledDataset | None = None,
                         models=("general", "symmetric")) -> dict:
    """General versus symmetric d = 1 learners across diffusion times."""
    if data is None:
        data = synth_bipartite(cfg.nA, cfg.nB, cfg.p, cfg.mean_sep, cfg.sigma, cfg.seed)
    rows = []
    hists = {}
    tc = TrainConfig(lr=cfg.lr, epochs=cfg.epochs, weight_decay=0.0, sheaf_weight_decay=0.0,
                     seed=cfg.seed)
    for model_name in models:
        symmetric = model_name == "symmetric"
        for t in cfg.t_grid:
            T = int(round(t / cfg.dt))
            if T == 0:
                pr = linear_probe(data.features, data.labels, data.train, data.test)
                rows.append({"model": model_name, "t": 0.0, "train_acc": pr.train_acc,
                             "test_acc": pr.test_acc, "neg_fraction": float("nan")})
                continue
            res = train(NSDModel(bipartite_model_config(T, symmetric, cfg.seed, cfg.dt)), data, tc)
            sheaf = res.model.learned_sheaves(data)[0]
            tr = scalar_transports(sheaf)
            counts, edges = np.histogram(tr, bins=20, range=(-1.0, 1.0))
            hists[(model_name, float(t))] = {"counts": counts.tolist(), "edges": edges.tolist()}
            rows.append({"model": model_name, "t": float(T * cfg.dt),
                         "train_acc": res.metrics["train_acc"], "test_acc": res.metrics["test_acc"],
                         "neg_fraction": float(np.mean(tr < 0))})
    return {"rows": rows, "histograms": hists, "dataset": data}


# --------------------------------------------------------------------------
# multiclass experiment


@dataclass
class MulticlassSettings:
    n: int = 150
    C: int = 3
    h: float = 0.2
    mean_sep: float = 2.0
    sigma: float = 1.0
    layers: int = 20
    lr: float = 0.02
    epochs: int = 300
    seed: int = 0


def multiclass_model_config(d: int, C: int, layers: int, seed: int, feat_dim: int = 2) -> NSDConfig:
    """d = 2: rotation (two Householder reflections) bundle with 2 channels;
    d = 1: general scalar sheaf with 4 channels. Both use an affine encoder."""
    if d == 2:
        return NSDConfig(input_dim=feat_dim, n_classes=C, d=2, hidden=2, layers=layers,
                         family="orthogonal", householder_k=2, sigma="id", encoder="affine",
                         sheaf_mode="fixed", learn_w1=False, learn_w2=False, learn_eps=False,
                         seed=seed)
    if d == 1:
        return NSDConfig(input_dim=feat_dim, n_classes=C, d=1, hidden=4, layers=layers,
                         family="general", sigma="id", encoder="affine", sheaf_mode="fixed",
                         learn_w1=False, learn_w2=False, learn_eps=False, seed=seed)
    raise ValueError("multiclass recipe supports d in {1, 2}")


def multiclass_run(cfg: MulticlassSettings, d: int, seed: int | None = None) -> dict:
    seed = cfg.seed if seed is None else seed
    data = synth_multiclass(cfg.n, cfg.C, cfg.h, feat_dim=2, seed=seed, mean_sep=cfg.mean_sep,
                            sigma=cfg.sigma)
    tc = TrainConfig(lr=cfg.lr, epochs=cfg.epochs, weight_decay=0.0, sheaf_weight_decay=0.0,
                     seed=seed)
    res = train(NSDModel(multiclass_model_config(d, cfg.C, cfg.layers, seed)), data, tc)
    out = {"d": d, "seed": seed, "train_acc": res.metrics["train_acc"],
           "test_acc": res.metrics["test_acc"]}
    if d == 2:
        out["angles"] = angle_census(res.model.learned_sheaves(data)[0], data.labels)
    return out


# --------------------------------------------------------------------------
# oracle diffusion


def parse_graph_spec(spec: str, rng: np.random.Generator) -> tuple[Graph, np.ndarray | None]:
    """``cycle:N``, ``path:N``, ``complete:N``, ``regular:N:K``, ``random:N:P``,
    ``bipartite:NA:NB:P`` or ``file:PATH``. Bipartite specs also return the
    partition labels."""
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "cycle":
            return cycle_graph(int(args[0])), None
        if kind == "path":
            return path_graph(int(args[0])), None
        if kind == "complete":
            return complete_graph(int(args[0])), None
        if kind == "regular":
            return random_regular_graph(int(args[0]), int(args[1]), rng), None
        if kind == "random":
            return random_connected_graph(int(args[0]), float(args[1]), rng), None
        if kind == "bipartite":
            data = synth_bipartite(int(args[0]), int(args[1]), float(args[2]),
                                   seed=int(rng.integers(2 ** 31)))
            return data.graph, data.labels
        if kind == "file":
            return load_edge_list(rest), None
    except (IndexError, ValueError) as exc:
        raise GraphError(f"bad graph spec {spec!r}: {exc}") from exc
    raise GraphError(f"unknown graph spec {spec!r}")


def balanced_labels(n: int, C: int, rng: np.random.Generator) -> np.ndarray:
    if C > n:
        raise GraphError("more classes than nodes")
    y = np.arange(n) % C
    rng.shuffle(y)
    return y


def build_oracle(construction: str, g: Graph, labels: np.ndarray, d: int | None = None,
                 alpha: float = 10.0) -> Sheaf:
    if construction == "signed":
        return signed_two_class_sheaf(g, labels)
    if construction == "homophily":
        return homophily_sym_sheaf(g, labels, alpha)
    if construction == "diagonal":
        return diagonal_multiclass_sheaf(g, labels, d)
    if construction == "orth2":
        return orth_bundle_sheaf(g, labels, 2)
    if construction == "orth4":
        return orth_bundle_sheaf(g, labels, 4)
    if construction == "regular":
        return regular_rotation_sheaf(g, labels)
    raise ValueError(f"unknown construction {construction!r}")


def oracle_diffuse(construction: str, g: Graph, labels: np.ndarray, t_max: float,
                   seed: int = 0, dt: float = 0.5, record_every: int = 1,
                   channels: int = 1, d: int | None = None, alpha: float = 10.0) -> dict:
    """Diffuse random features on an oracle sheaf; record energy, probe
    accuracy and class geometry per snapshot."""
    rng = np.random.default_rng(seed)
    s = build_oracle(construction, g, labels, d, alpha)
    delta = normalize(assemble(s), NormKind.SYM)
    X0 = rng.standard_normal((s.n * s.d, channels))
    traj = diffuse(delta, X0, DiffusionConfig("rk4", dt, t_max, record_every))
    train_acc, test_acc, angles = [], [], []
    for X in traj.states:
        pr = linear_probe(node_features(X, s.n), labels)
        train_acc.append(pr.train_acc)
        test_acc.append(pr.test_acc)
        angles.append(pairwise_angles(class_directions(X, labels, s.n)))
    return {"sheaf": s, "trajectory": traj, "train_acc": train_acc, "test_acc": test_acc,
            "class_angles": angles}


# --------------------------------------------------------------------------
# complexity


def random_graph_with_m(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Uniform simple graph with exactly m edges (not necessarily connected)."""
    if m > n * (n - 1) // 2:
        raise GraphError("too many edges")
    chosen = set()
    while len(chosen) < m:
        k = m - len(chosen)
        u = rng.integers(0, n, 2 * k)
        v = rng.integers(0, n, 2 * k)
        for a, b in zip(u, v):
            if a != b:
                chosen.add((min(a, b), max(a, b)))
                if len(chosen) == m:
                    break
    return Graph(n, sorted(chosen))


def time_layer(g: Graph, d: int, c: int, family: str = "diagonal", repeats: int = 5,
               seed: int = 0) -> float:
    """Median wall time of one NSD layer forward (sheaf learner, Laplacian, update).

    The Laplacian sparsity pattern depends only on the graph and is built
    once, outside the timed region.
    """
    rng = np.random.default_rng(seed)
    X = ad.const(rng.standard_normal((g.n, d, c)))
    cfg = NSDConfig(input_dim=d * c, n_classes=2, d=d, hidden=c, layers=1, family=family)
    V = ad.const(NSDModel(cfg).params["sheaf0.V"])
    W1 = ad.const(np.eye(d))
    W2 = ad.const(rng.standard_normal((c, c)) / np.sqrt(c))
    edges = g.edge_array
    vec = diagonal_fast_path(family, False)
    pattern = laplacian_pattern(edges, g.n, d, vec)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        F_lo, F_hi = learner_maps(V, ad.reshape(X, (g.n, d * c)), edges, family, d, as_vectors=vec)
        op = laplacian_operator(F_lo, F_hi, edges, g.n, pattern=pattern)
        out = X - ad.elu(op(W1 @ X @ W2))
        times.append(time.perf_counter() - t0)
    assert out.shape == X.shape
    return float(np.median(times))


def time_trivial_layer(g: Graph, c: int, repeats: int = 5, seed: int = 0) -> float:
    """Median wall time of a d = 1 trivial-sheaf diffusion layer (no learner)."""
    rng = np.random.default_rng(seed)
    X = ad.const(rng.standard_normal((g.n, 1, c)))
    W = ad.const(rng.standard_normal((c, c)) / np.sqrt(c))
    ones = ad.const(np.ones((g.m, 1)))
    edges = g.edge_array
    pattern = laplacian_pattern(edges, g.n, 1, True)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        op = laplacian_operator(ones, ones, edges, g.n, pattern=pattern)
        out = X - ad.elu(op(X @ W))
        times.append(time.perf_counter() - t0)
    assert out.shape == X.shape
    return float(np.median(times))


def time_gcn_layer(g: Graph, c: int, repeats: int = 5, seed: int = 0) -> float:
    """Median wall time of a GCN layer ``elu(A_hat X W)`` with a scipy CSR A_hat.

    ``A_hat = (D + I)^{-1/2} (A + I) (D + I)^{-1/2}``. Its index structure
    is built once; the normalized values are recomputed inside the timed
    region, matching the per-layer Laplacian assembly of sheaf layers.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((g.n, c))
    W = rng.standard_normal((c, c)) / np.sqrt(c)
    ea = g.edge_array
    rows = np.concatenate([ea[:, 0], ea[:, 1], np.arange(g.n)])
    cols = np.concatenate([ea[:, 1], ea[:, 0], np.arange(g.n)])
    pattern = ad.SparsePattern(rows, cols, g.n)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        deg = np.bincount(rows, minlength=g.n).astype(float)
        s = 1.0 / np.sqrt(deg)
        A_hat = pattern.matrix(s[rows] * s[cols])
        Z = A_hat @ (X @ W)
        out = np.where(Z > 0, Z, np.expm1(np.minimum(Z, 0.0)))
        times.append(time.perf_counter() - t0)
    assert out.shape == X.shape
    return float(np.median(times))


@dataclass
class ComplexityRow:
    n: int
    m: int
    c: int
    d: int
    family: str
    seconds: float


def complexity_table(n: int, ms, c: int, ds, families=("diagonal",), repeats: int = 5,
                     seed: int = 0) -> list[ComplexityRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for m in ms:
        g = random_graph_with_m(n, m, rng)
        for d in ds:
            for fam in families:
                rows.append(ComplexityRow(n, m, c, d, fam, time_layer(g, d, c, fam, repeats, seed)))
    return rows


def scaling_exponent(xs, ts) -> float:
    """Least-squares slope of log t against log x."""
    lx, lt = np.log(np.asarray(xs, float)), np.log(np.asarray(ts, float))
    return float(np.polyfit(lx, lt, 1)[0])

"""Property suites behind ``sheaflab verify``.

Each suite is a list of named zero-argument tasks, each returning one
:class:`CheckReport`. Tasks own their random state (derived from the suite
seed and the task index), so they can run on worker threads and still give
the same reports in the same order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .diffusion import SCNParams, check_energy_decrease, linear_probe, node_features
from .experiments import balanced_labels, class_directions, pairwise_angles
from .graph import (Graph, complete_graph, cycle_graph, random_connected_graph,
                    random_tree, synth_bipartite, synth_multiclass)
from .laplacian import NormKind, assemble, normalize
from .oracle import (convex_hull_violation, diagonal_multiclass_sheaf, energy_increase_witness,
                     impossibility_probe, orth_bundle_sheaf, signed_two_class_sheaf)
from .sheaf import Family, Sheaf, random_bundle, random_sheaf
from .spectral import (CheckReport, check_gap_lower, check_gap_upper, check_harmonic_dim,
                       dirichlet_energy, harmonic_space, project_harmonic)

SUITES = ("gap", "harmonic", "energy", "separation")
ANGLE_TOL_DEG = 1.0

Task = tuple[str, Callable[[], CheckReport]]


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _small_connected(rng: np.random.Generator, n_lo: int = 3, n_hi: int = 8) -> Graph:
    n = int(rng.integers(n_lo, n_hi + 1))
    return random_connected_graph(n, float(rng.uniform(0.3, 0.7)), rng)


def _named(report: CheckReport, name: str) -> CheckReport:
    report.inputs = dict(report.inputs, check=name)
    return report


# --------------------------------------------------------------------------
# gap


def gap_tasks(seed: int = 0, n_draws: int = 50) -> list[Task]:
    tasks: list[Task] = []

    def upper(i):
        rng = _rng(seed, i)
        g = _small_connected(rng)
        s = random_bundle(g, int(rng.integers(1, 4)), rng)
        return check_gap_upper(s, exhaustive=True)

    def tree(i):
        rng = _rng(seed, 10_000 + i)
        g = random_tree(int(rng.integers(2, 9)), rng)
        return check_gap_upper(random_bundle(g, int(rng.integers(1, 4)), rng), exhaustive=True)

    lower_graphs = [cycle_graph(4), cycle_graph(6), cycle_graph(8), complete_graph(4)]

    def lower(i):
        rng = _rng(seed, 20_000 + i)
        return check_gap_lower(random_bundle(lower_graphs[i % len(lower_graphs)], 2, rng))

    def odd_safe(i):
        # odd cycles are only covered by the (2 diam + 1) variant of the bound
        rng = _rng(seed, 30_000 + i)
        rep = check_gap_lower(random_bundle(cycle_graph((3, 5, 7)[i % 3]), 2, rng))
        rep.prop = "gap_lower_safe"
        rep.rhs = rep.extra["bound_safe"]
        rep.holds = rep.extra["holds_safe"]
        return rep

    for i in range(n_draws):
        tasks.append((f"gap_upper/{i}", lambda i=i: upper(i)))
    for i in range(max(1, n_draws // 5)):
        tasks.append((f"gap_upper_tree/{i}", lambda i=i: tree(i)))
    for i in range(n_draws):
        tasks.append((f"gap_lower/{i}", lambda i=i: lower(i)))
    for i in range(max(3, n_draws // 5)):
        tasks.append((f"gap_lower_odd_safe/{i}", lambda i=i: odd_safe(i)))
    return tasks


# --------------------------------------------------------------------------
# harmonic


def harmonic_tasks(seed: int = 0, n_draws: int = 100) -> list[Task]:
    tasks: list[Task] = []

    def bundle(i):
        rng = _rng(seed, i)
        return check_harmonic_dim(random_bundle(_small_connected(rng, 3, 12), int(rng.integers(1, 4)), rng))

    def tree(i):
        rng = _rng(seed, 10_000 + i)
        return check_harmonic_dim(random_bundle(random_tree(int(rng.integers(2, 15)), rng),
                                                int(rng.integers(1, 4)), rng))

    def exact_dim(s: Sheaf) -> CheckReport:
        rep = check_harmonic_dim(s)
        rep.holds = bool(rep.holds and rep.extra["h"] == s.d)
        return rep

    def oracle(kind):
        rng = _rng(seed, 20_000)
        if kind == "signed":
            data = synth_bipartite(12, 12, 0.3, seed=seed)
            return exact_dim(signed_two_class_sheaf(data.graph, data.labels))
        g = random_connected_graph(16, 0.3, rng)
        if kind == "diagonal":
            return exact_dim(diagonal_multiclass_sheaf(g, balanced_labels(16, 3, rng)))
        if kind == "orth2":
            return exact_dim(orth_bundle_sheaf(g, balanced_labels(16, 4, rng), 2))
        return exact_dim(orth_bundle_sheaf(g, balanced_labels(16, 8, rng), 4))

    for i in range(n_draws):
        tasks.append((f"harmonic_bundle/{i}", lambda i=i: bundle(i)))
    for i in range(max(1, n_draws // 5)):
        tasks.append((f"harmonic_tree/{i}", lambda i=i: tree(i)))
    for kind in ("signed", "diagonal", "orth2", "orth4"):
        tasks.append((f"harmonic_oracle/{kind}", lambda k=kind: oracle(k)))
    return tasks


# --------------------------------------------------------------------------
# energy


def random_h1_plus(g: Graph, rng: np.random.Generator) -> Sheaf:
    """d = 1 sheaf with positive transports (both maps share a sign)."""
    mag_lo = rng.uniform(0.1, 2.0, g.m)
    mag_hi = rng.uniform(0.1, 2.0, g.m)
    sign = rng.choice([-1.0, 1.0], g.m)
    return Sheaf(g, 1, sign * mag_lo, sign * mag_hi, Family.SCALAR)


def energy_draw(family: str, rng: np.random.Generator) -> CheckReport:
    g = _small_connected(rng, 4, 12)
    if family == "h1_plus":
        s = random_h1_plus(g, rng)
    else:
        s = random_sheaf(g, int(rng.integers(2, 4)), Family.ORTHOGONAL, rng, symmetric=True)
    f = int(rng.integers(1, 4))
    W1 = rng.standard_normal((s.d, s.d))
    W2 = rng.standard_normal((f, f))
    sigma = str(rng.choice(["relu", "leaky_relu"]))
    X = rng.standard_normal((s.n * s.d, f))
    return check_energy_decrease(s, SCNParams(W1, W2, sigma), X)


def witness_report(eps: float, n: int = 6) -> CheckReport:
    """Expected-violation case: energy grows from zero under a tiny W1.

    ``holds`` is True when the witness does what it should, i.e. the
    non-symmetric bundle escapes the energy bound.
    """
    w = energy_increase_witness(cycle_graph(n), 2, eps)
    delta = normalize(assemble(w.sheaf), NormKind.SYM)
    e_in = dirichlet_energy(w.sheaf, delta, w.x)
    y = (np.kron(np.eye(w.sheaf.n), w.W1) @ w.x)
    e_out = dirichlet_energy(w.sheaf, delta, y)
    w_norm = float(np.linalg.norm(w.W1, 2))
    holds = e_in <= 1e-12 and e_out > 1e-14 and w_norm < eps
    return CheckReport(
        prop="energy_witness",
        inputs={"n": n, "d": 2, "eps": eps},
        lhs=e_out, rhs=e_in, holds=bool(holds), tolerance=1e-12,
        extra={"expected_violation": True, "energy_in": e_in, "energy_out": e_out,
               "w1_norm": w_norm},
    )


def energy_tasks(seed: int = 0, n_draws: int = 200) -> list[Task]:
    tasks: list[Task] = []
    for j, fam in enumerate(("h1_plus", "orth_sym")):
        for i in range(n_draws):
            tasks.append((f"energy_{fam}/{i}",
                          lambda i=i, j=j, fam=fam: energy_draw(fam, _rng(seed, j * 100_000 + i))))
    for eps in (1e-1, 1e-3):
        tasks.append((f"energy_witness/{eps:g}", lambda eps=eps: witness_report(eps)))
    return tasks


# --------------------------------------------------------------------------
# separation


def harmonic_features(s: Sheaf, X: np.ndarray) -> np.ndarray:
    H = harmonic_space(normalize(assemble(s), NormKind.SYM))
    return node_features(project_harmonic(H, X), s.n)


def _angles_on_grid(angles: np.ndarray, step: float, tol_deg: float) -> tuple[bool, float]:
    off = np.abs(angles - step * np.round(angles / step))
    worst = float(np.degrees(off.max()))
    return worst <= tol_deg, worst


def signed_separation(i: int, seed: int = 0) -> CheckReport:
    data = synth_bipartite(10 + 3 * i, 12 + 2 * i, 0.3, seed=seed + i)
    s = signed_two_class_sheaf(data.graph, data.labels)
    X = _rng(seed, 40_000 + i).standard_normal((s.n, 2))
    pr = linear_probe(harmonic_features(s, X), data.labels)
    return CheckReport("separation_signed", {"n": s.n, "m": s.graph.m}, pr.train_acc, 1.0,
                       bool(pr.train_acc == 1.0), 0.0, {"probe_acc": pr.train_acc})


def diagonal_separation(seed: int = 0, C: int = 3) -> CheckReport:
    data = synth_multiclass(60, C, 0.3, seed=seed)
    s = diagonal_multiclass_sheaf(data.graph, data.labels, C)
    X = _rng(seed, 50_000).standard_normal((s.n * s.d, 2))
    pr = linear_probe(harmonic_features(s, X), data.labels)
    return CheckReport("separation_diagonal", {"n": s.n, "C": C, "d": C}, pr.train_acc, 1.0,
                       bool(pr.train_acc == 1.0), 0.0, {"probe_acc": pr.train_acc})


def orth_separation(d: int, C: int, seed: int = 0) -> CheckReport:
    rng = _rng(seed, 60_000 + d)
    n = 8 * C
    g = random_connected_graph(n, 0.25, rng)
    y = balanced_labels(n, C, rng)
    s = orth_bundle_sheaf(g, y, d)
    X = rng.standard_normal((n * d, 1))
    F = harmonic_features(s, X)
    pr = linear_probe(F, y)
    ang = pairwise_angles(class_directions(F, y, n))
    ok, worst = _angles_on_grid(ang[np.triu_indices(C, 1)], np.pi / 2, ANGLE_TOL_DEG)
    return CheckReport(f"separation_orth{d}", {"n": n, "C": C, "d": d}, pr.train_acc, 1.0,
                       bool(pr.train_acc == 1.0 and ok), 0.0,
                       {"probe_acc": pr.train_acc, "worst_angle_offset_deg": worst})


def potential_scalar_sheaf(g: Graph, rng: np.random.Generator) -> Sheaf:
    """Random invertible d = 1 sheaf with path-independent transport.

    ``F[v <| e] = a_e / p_v`` for random non-zero edge weights ``a_e`` and
    node potentials ``p_v``, so the harmonic space is one-dimensional.
    """
    p = rng.uniform(0.2, 2.0, g.n) * rng.choice([-1.0, 1.0], g.n)
    a = rng.uniform(0.2, 2.0, g.m) * rng.choice([-1.0, 1.0], g.m)
    ea = g.edge_array
    return Sheaf(g, 1, a / p[ea[:, 0]], a / p[ea[:, 1]], Family.SCALAR)


def hull_separation(i: int, seed: int = 0) -> CheckReport:
    rng = _rng(seed, 70_000 + i)
    data = synth_multiclass(30, 3, 0.3, seed=seed + i)
    s = potential_scalar_sheaf(data.graph, rng) if i % 2 == 0 else \
        random_sheaf(data.graph, 1, Family.GENERAL, rng)
    F = harmonic_features(s, rng.standard_normal((s.n, 1)))
    hull = convex_hull_violation(F, data.labels)
    h = int(np.linalg.matrix_rank(F) if F.any() else 0)
    return CheckReport("separation_h1_hull", {"n": s.n, "C": 3}, float(hull), 1.0, bool(hull),
                       0.0, {"hull_violation": bool(hull), "feature_rank": h})


def symmetric_bipartite(seed: int = 0, n_sheaves: int = 100, nA: int = 50,
                        p: float = 0.08) -> CheckReport:
    """Mean probe test accuracy of symmetric sheaves on a balanced bipartite graph."""
    rng = _rng(seed, 80_000)
    accs, train_accs = [], []
    prior = 0.5
    for k in range(n_sheaves):
        data = synth_bipartite(nA, nA, p, mean_sep=0.0, seed=seed * 1000 + k)
        g = data.graph
        w = rng.uniform(0.1, 2.0, g.m) * rng.choice([-1.0, 1.0], g.m)
        s = Sheaf(g, 1, w, w, Family.SCALAR)
        rep = impossibility_probe(s, rng.standard_normal((g.n, 2)), data.labels,
                                  data.train, data.test)
        accs.append(rep.extra["test_acc"])
        train_accs.append(rep.extra["train_acc"])
        prior = rep.extra["prior"]
    mean_acc = float(np.mean(accs))
    return CheckReport("separation_symmetric_bipartite", {"n_sheaves": n_sheaves, "n": 2 * nA},
                       mean_acc, prior + 0.05, bool(mean_acc <= prior + 0.05), 0.05,
                       {"mean_test_acc": mean_acc, "max_test_acc": float(np.max(accs)),
                        "mean_train_acc": float(np.mean(train_accs)), "prior": prior})


def separation_tasks(seed: int = 0, n_draws: int = 50) -> list[Task]:
    tasks: list[Task] = []
    for i in range(10):
        tasks.append((f"separation_signed/{i}", lambda i=i: signed_separation(i, seed)))
    tasks.append(("separation_diagonal", lambda: diagonal_separation(seed)))
    tasks.append(("separation_orth2_C4", lambda: orth_separation(2, 4, seed)))
    tasks.append(("separation_orth4_C8", lambda: orth_separation(4, 8, seed)))
    for i in range(n_draws):
        tasks.append((f"separation_h1_hull/{i}", lambda i=i: hull_separation(i, seed)))
    tasks.append(("separation_symmetric_bipartite", lambda: symmetric_bipartite(seed)))
    return tasks


# --------------------------------------------------------------------------
# driver


_BUILDERS = {"gap": gap_tasks, "harmonic": harmonic_tasks, "energy": energy_tasks,
             "separation": separation_tasks}


def suite_tasks(suite: str, seed: int = 0, n_draws: int | None = None) -> list[Task]:
    if suite == "all":
        names = SUITES
    elif suite in SUITES:
        names = (suite,)
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}")
    tasks: list[Task] = []
    for name in names:
        builder = _BUILDERS[name]
        tasks.extend(builder(seed) if n_draws is None else builder(seed, n_draws))
    return tasks


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SHEAFLAB_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(suite: str, seed: int = 0, n_draws: int | None = None,
              threads: int | None = None) -> list[CheckReport]:
    """Run every task of ``suite``; reports come back in task order."""
    tasks = suite_tasks(suite, seed, n_draws)
    threads = default_threads() if threads is None else threads

    def run(task: Task) -> CheckReport:
        name, fn = task
        return _named(fn(), name)

    if threads <= 1:
        return [run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, tasks))


__all__ = ["SUITES", "run_suite", "suite_tasks", "witness_report", "energy_draw",
           "symmetric_bipartite", "orth_separation", "diagonal_separation", "signed_separation",
           "hull_separation", "potential_scalar_sheaf", "random_h1_plus", "harmonic_features"]

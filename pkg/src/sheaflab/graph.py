"""Graphs, labelled datasets, loaders and synthetic generators."""

from __future__ import annotations

import hashlib
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed graph or dataset files."""


class GraphError(ValueError):
    """Raised when a graph violates a structural precondition."""


class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored once, as sorted pairs ``(u, v)`` with ``u < v``, in
    lexicographic order. ``edge_index[(u, v)]`` maps a sorted pair to its
    position in ``edges``.
    """

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = ()):
        if n < 0:
            raise GraphError("node count must be non-negative")
        pairs = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
            pairs.add((min(u, v), max(u, v)))
        self.n = int(n)
        self.edges: list[tuple[int, int]] = sorted(pairs)
        self.edge_index = {e: i for i, e in enumerate(self.edges)}
        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self.adjacency = [sorted(a) for a in adj]

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @property
    def edge_array(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` int array."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edge_index

    def edge_id(self, u: int, v: int) -> int:
        try:
            return self.edge_index[(min(u, v), max(u, v))]
        except KeyError:
            raise GraphError(f"nodes {u} and {v} are not adjacent") from None

    def adjacency_matrix(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for u, v in self.edges:
            A[u, v] = A[v, u] = 1.0
        return A

    def bfs_distances(self, source: int) -> np.ndarray:
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for w in self.adjacency[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return dist

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        return bool(np.all(self.bfs_distances(0) >= 0))

    def components(self) -> list[list[int]]:
        seen = np.zeros(self.n, dtype=bool)
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            members = np.flatnonzero(self.bfs_distances(s) >= 0)
            seen[members] = True
            comps.append(members.tolist())
        return comps

    def is_regular(self) -> bool:
        deg = self.degrees
        return self.n > 0 and bool(np.all(deg == deg[0]))

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, tuple(self.edges)))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class CycleBasis:
    """Closed walks ``(v0, ..., vL = v0)``, one per non-tree edge."""

    cycles: list[list[int]] = field(default_factory=list)

    def __len__(self):
        return len(self.cycles)

    def __iter__(self):
        return iter(self.cycles)


@dataclass
class LabeledDataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train = np.asarray(self.train, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        n = self.graph.n
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphFormatError(
                f"feature matrix has {self.features.shape[0]} rows, expected {n}")
        if self.labels.shape != (n,):
            raise GraphFormatError(f"expected {n} labels, got {self.labels.shape[0]}")
        if n and self.labels.min() < 0:
            raise GraphFormatError("labels must be non-negative")
        if n and len(np.unique(self.labels)) != self.labels.max() + 1:
            raise GraphFormatError("every class id in 0..C-1 must appear at least once")
        splits = (self.train, self.val, self.test)
        for s in splits:
            if s.size and (s.min() < 0 or s.max() >= n):
                raise GraphFormatError("split index out of range")
            if len(np.unique(s)) != s.size:
                raise GraphFormatError("duplicate index inside a split")
        total = np.concatenate(splits)
        if len(np.unique(total)) != total.size:
            raise GraphFormatError("train/val/test splits overlap")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def digest(self) -> str:
        """SHA-256 over the canonical byte representation of the dataset."""
        h = hashlib.sha256()
        h.update(np.int64(self.graph.n).tobytes())
        h.update(self.graph.edge_array.tobytes())
        for arr in (self.features, self.labels, self.train, self.val, self.test):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


# --------------------------------------------------------------------------
# file formats


def parse_edge_list(text: str) -> Graph:
    n = None
    pairs = []
    max_id = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "n":
            if len(tok) != 2 or n is not None or pairs:
                raise GraphFormatError(f"line {lineno}: bad header {raw!r}")
            try:
                n = int(tok[1])
            except ValueError:
                raise GraphFormatError(f"line {lineno}: bad node count {tok[1]!r}") from None
            continue
        if len(tok) != 2:
            raise GraphFormatError(f"line {lineno}: expected 'u v', got {raw!r}")
        try:
            u, v = int(tok[0]), int(tok[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer node id in {raw!r}") from None
        if u < 0 or v < 0:
            raise GraphFormatError(f"line {lineno}: negative node id")
        if u == v:
            raise GraphFormatError(f"line {lineno}: self-loop at node {u}")
        if n is not None and (u >= n or v >= n):
            raise GraphFormatError(f"line {lineno}: node id out of range for n={n}")
        max_id = max(max_id, u, v)
        pairs.append((u, v))
    if n is None:
        n = max_id + 1
    return Graph(n, pairs)


def load_edge_list(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n {graph.n}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def _read_index_file(path) -> np.ndarray:
    if not os.path.exists(path):
        return np.zeros(0, dtype=np.int64)
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                ids.append(int(line))
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: bad node id {line!r}") from None
    return np.asarray(ids, dtype=np.int64)


DATASET_FILES = ("edges.txt", "features.csv", "labels.csv", "train.idx", "val.idx", "test.idx")


def load_dataset(directory) -> LabeledDataset:
    """Load a dataset directory.

    Expected files: ``edges.txt``, ``features.csv`` (headerless, row i =
    node i), ``labels.csv`` (one integer per line) and the split files
    ``train.idx`` / ``val.idx`` / ``test.idx``. ``val.idx`` may be absent
    or empty.
    """
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    for name in ("edges.txt", "features.csv", "labels.csv", "train.idx", "test.idx"):
        if not os.path.exists(os.path.join(directory, name)):
            raise FileNotFoundError(f"missing dataset file: {name}")
    graph = load_edge_list(os.path.join(directory, "edges.txt"))
    try:
        features = np.loadtxt(os.path.join(directory, "features.csv"), delimiter=",",
                              dtype=np.float64, ndmin=2)
        labels = np.loadtxt(os.path.join(directory, "labels.csv"), dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None
    if graph.n != features.shape[0] and graph.n < features.shape[0]:
        # an edge file without header only knows about nodes that have edges
        graph = Graph(features.shape[0], graph.edges)
    return LabeledDataset(
        graph=graph,
        features=features,
        labels=labels,
        train=_read_index_file(os.path.join(directory, "train.idx")),
        val=_read_index_file(os.path.join(directory, "val.idx")),
        test=_read_index_file(os.path.join(directory, "test.idx")),
    )


def save_dataset(data: LabeledDataset, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    write_edge_list(data.graph, os.path.join(directory, "edges.txt"))
    np.savetxt(os.path.join(directory, "features.csv"), data.features, delimiter=",",
               fmt="%.17g")
    np.savetxt(os.path.join(directory, "labels.csv"), data.labels, fmt="%d")
    for name, idx in (("train", data.train), ("val", data.val), ("test", data.test)):
        np.savetxt(os.path.join(directory, f"{name}.idx"), idx, fmt="%d")


# --------------------------------------------------------------------------
# metrics


def diameter(g: Graph) -> int:
    if g.n == 0:
        raise GraphError("empty graph")
    best = 0
    for s in range(g.n):
        dist = g.bfs_distances(s)
        if np.any(dist < 0):
            raise GraphError("graph is disconnected")
        best = max(best, int(dist.max()))
    return best


def bfs_tree(g: Graph, root: int = 0) -> np.ndarray:
    """Parent array of a BFS spanning tree; the root's parent is -1."""
    parent = np.full(g.n, -2, dtype=np.int64)
    parent[root] = -1
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w in g.adjacency[u]:
            if parent[w] == -2:
                parent[w] = u
                queue.append(w)
    if np.any(parent == -2):
        raise GraphError("graph is disconnected")
    return parent


def tree_path(parent: np.ndarray, u: int, v: int) -> list[int]:
    """Node sequence from u to v along the tree given by ``parent``."""
    up_u = [u]
    while parent[up_u[-1]] >= 0:
        up_u.append(int(parent[up_u[-1]]))
    up_v = [v]
    while parent[up_v[-1]] >= 0:
        up_v.append(int(parent[up_v[-1]]))
    anc_v = {x: i for i, x in enumerate(up_v)}
    for i, x in enumerate(up_u):
        if x in anc_v:
            return up_u[: i + 1] + up_v[: anc_v[x]][::-1]
    raise GraphError("nodes lie in different trees")


def fundamental_cycles(g: Graph, root: int = 0) -> CycleBasis:
    """One cycle per non-tree edge of a BFS spanning tree rooted at ``root``."""
    if g.n == 0:
        return CycleBasis([])
    parent = bfs_tree(g, root)
    cycles = []
    for u, v in g.edges:
        if parent[u] == v or parent[v] == u:
            continue
        cycles.append(tree_path(parent, u, v) + [u])
    return CycleBasis(cycles)


def edge_homophily(g: Graph, labels) -> float:
    labels = np.asarray(labels)
    if g.m == 0:
        return float("nan")
    e = g.edge_array
    return float(np.mean(labels[e[:, 0]] == labels[e[:, 1]]))


# --------------------------------------------------------------------------
# standard graphs


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 nodes")
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_tree(n: int, rng: np.random.Generator) -> Graph:
    return Graph(n, [(i, int(rng.integers(0, i))) for i in range(1, n)])


def random_connected_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Random spanning tree plus independent extra edges with probability p."""
    edges = {(min(i, j), max(i, j)) for i, j in random_tree(n, rng).edges}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.add((i, j))
    return Graph(n, edges)


def random_regular_graph(n: int, k: int, rng: np.random.Generator, max_tries: int = 1000) -> Graph:
    """Connected k-regular simple graph by configuration-model rejection."""
    if (n * k) % 2 or k >= n:
        raise GraphError(f"no simple {k}-regular graph on {n} nodes")
    for _ in range(max_tries):
        stubs = np.repeat(np.arange(n), k)
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        keyed = {(min(a, b), max(a, b)) for a, b in pairs.tolist()}
        if len(keyed) != len(pairs):
            continue
        g = Graph(n, keyed)
        if g.is_connected():
            return g
    raise GraphError("failed to sample a connected regular graph")


# --------------------------------------------------------------------------
# synthetic datasets


def stratified_split(labels, train_frac: float, rng: np.random.Generator,
                     val_frac: float = 0.0):
    """Per-class uniform split; each class contributes round(frac * size) nodes."""
    labels = np.asarray(labels)
    train, val, test = [], [], []
    for c in range(int(labels.max()) + 1):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_tr = int(round(train_frac * idx.size))
        n_va = int(round(val_frac * idx.size))
        if idx.size > 1:
            n_tr = min(max(n_tr, 1), idx.size - 1) if train_frac < 1 else idx.size
        train.extend(idx[:n_tr])
        val.extend(idx[n_tr:n_tr + n_va])
        test.extend(idx[n_tr + n_va:])
    return (np.sort(np.asarray(train, dtype=np.int64)),
            np.sort(np.asarray(val, dtype=np.int64)),
            np.sort(np.asarray(test, dtype=np.int64)))


def synth_bipartite(nA: int, nB: int, p: float, mean_sep: float = 1.0, sigma: float = 1.0,
                    seed: int = 0, feat_dim: int = 2, max_tries: int = 10,
                    val_frac: float = 0.0) -> LabeledDataset:
    """Connected bipartite graph whose partitions are the two classes.

    Cross edges are sampled independently with probability ``p``. If the
    sample is disconnected after ``max_tries`` draws, a random maximum
    matching between the partitions is added. Features are isotropic
    Gaussians (std ``sigma``) whose means sit ``mean_sep`` apart along the
    first axis.
    """
    if nA < 1 or nB < 1:
        raise GraphError("both partitions need at least one node")
    if not 0 < p <= 1:
        raise GraphError("edge probability must lie in (0, 1]")
    if sigma <= 0:
        raise GraphError("sigma must be positive")
    rng = np.random.default_rng(seed)
    n = nA + nB
    g = None
    for _ in range(max_tries):
        mask = rng.random((nA, nB)) < p
        a, b = np.nonzero(mask)
        g = Graph(n, zip(a.tolist(), (b + nA).tolist()))
        if g.is_connected():
            break
    else:
        k = min(nA, nB)
        pa = rng.permutation(nA)[:k]
        pb = rng.permutation(nB)[:k] + nA
        g = Graph(n, list(g.edges) + list(zip(pa.tolist(), pb.tolist())))
        if not g.is_connected():
            raise GraphError("could not connect the bipartite graph; increase p")
    labels = np.concatenate([np.zeros(nA, dtype=np.int64), np.ones(nB, dtype=np.int64)])
    means = np.zeros((2, feat_dim))
    means[0, 0] = -mean_sep / 2
    means[1, 0] = mean_sep / 2
    features = means[labels] + sigma * rng.standard_normal((n, feat_dim))
    train, val, test = stratified_split(labels, 0.8 - val_frac, rng, val_frac=val_frac)
    return LabeledDataset(g, features, labels, train, val, test)


def synth_multiclass(n: int, C: int, h: float, feat_dim: int = 2, seed: int = 0,
                     avg_degree: float = 6.0, mean_sep: float = 1.0, sigma: float = 1.0,
                     max_tries: int = 200, val_frac: float = 0.0) -> LabeledDataset:
    """Graph with C balanced classes and edge homophily ``h`` (up to rounding).

    Exactly ``round(h * m)`` intra-class and ``m - round(h * m)`` inter-class
    edges are drawn without replacement, ``m = round(n * avg_degree / 2)``.
    Draws are repeated until the graph is connected. Class means lie on a
    circle of radius ``mean_sep`` in the first two feature coordinates.

    With ``h == 1`` no inter-class edge exists, so the graph is returned
    disconnected whenever ``C > 1``.
    """
    if not 2 <= C <= n:
        raise GraphError("need 2 <= C <= n")
    if not 0 <= h <= 1:
        raise GraphError("homophily must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % C
    labels = labels[rng.permutation(n)]
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    intra_pairs = np.flatnonzero(same)
    inter_pairs = np.flatnonzero(~same)
    m = int(round(n * avg_degree / 2))
    m_intra = int(round(h * m))
    m_inter = m - m_intra
    if m_intra > intra_pairs.size or m_inter > inter_pairs.size:
        raise GraphError("homophily level infeasible for these class sizes and density")
    g = None
    for _ in range(max_tries):
        chosen = np.concatenate([
            rng.choice(intra_pairs, size=m_intra, replace=False),
            rng.choice(inter_pairs, size=m_inter, replace=False),
        ])
        g = Graph(n, zip(iu[chosen].tolist(), ju[chosen].tolist()))
        if g.is_connected() or m_inter == 0:
            break
    else:
        raise GraphError("could not sample a connected graph; increase avg_degree")
    angles = 2 * np.pi * np.arange(C) / C
    means = np.zeros((C, feat_dim))
    means[:, 0] = mean_sep * np.cos(angles)
    if feat_dim > 1:
        means[:, 1] = mean_sep * np.sin(angles)
    features = means[labels] + sigma * rng.standard_normal((n, feat_dim))
    train, val, test = stratified_split(labels, 0.8 - val_frac, rng, val_frac=val_frac)
    return LabeledDataset(g, features, labels, train, val, test)

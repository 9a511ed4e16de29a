"""Cellular sheaves over graphs with fixed stalk dimension.

A :class:`Sheaf` stores, for every edge ``e = (u, v)`` with ``u < v``, the
two restriction maps ``F[u <| e]`` and ``F[v <| e]`` as ``d x d`` blocks.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import CycleBasis, Graph, GraphError, fundamental_cycles

ORTH_TOL = 1e-10
COND_LIMIT = 1e12


class Family(str, enum.Enum):
    SCALAR = "scalar"
    DIAGONAL = "diagonal"
    ORTHOGONAL = "orthogonal"
    GENERAL = "general"


class SheafError(ValueError):
    pass


class SingularMapError(SheafError):
    pass


def _check_family(M: np.ndarray, family: Family) -> None:
    d = M.shape[-1]
    if family is Family.SCALAR and d != 1:
        raise SheafError("scalar family requires d = 1")
    if family is Family.DIAGONAL:
        off = M * (1 - np.eye(d))
        if np.any(off != 0):
            raise SheafError("diagonal family map has non-zero off-diagonal entries")
    if family is Family.ORTHOGONAL:
        gram = np.swapaxes(M, -1, -2) @ M - np.eye(d)
        err = np.sqrt(np.sum(gram ** 2, axis=(-2, -1)))
        if np.any(err > ORTH_TOL):
            raise SheafError(f"orthogonal family map deviates from O(d) by {err.max():.2e}")


@dataclass(frozen=True)
class RestrictionMap:
    matrix: np.ndarray
    family: Family

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise SheafError("restriction map must be square")
        _check_family(M, Family(self.family))
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "family", Family(self.family))


@dataclass(frozen=True)
class Transport:
    matrix: np.ndarray
    path: tuple


class Sheaf:
    """Sheaf with d-dimensional stalks on every node and edge.

    Parameters
    ----------
    graph : Graph
    d : int
        Stalk dimension.
    maps_lo, maps_hi : array_like, shape (m, d, d)
        ``maps_lo[e]`` is the map of the smaller endpoint of edge ``e``,
        ``maps_hi[e]`` the map of the larger one.
    family : Family
    """

    def __init__(self, graph: Graph, d: int, maps_lo, maps_hi, family=Family.GENERAL):
        if d < 1:
            raise SheafError("stalk dimension must be positive")
        lo = np.asarray(maps_lo, dtype=np.float64).reshape(graph.m, d, d)
        hi = np.asarray(maps_hi, dtype=np.float64).reshape(graph.m, d, d)
        family = Family(family)
        if graph.m:
            _check_family(lo, family)
            _check_family(hi, family)
        lo.setflags(write=False)
        hi.setflags(write=False)
        self.graph = graph
        self.d = int(d)
        self.maps_lo = lo
        self.maps_hi = hi
        self.family = family

    @property
    def n(self) -> int:
        return self.graph.n

    def restriction(self, node: int, edge: int) -> np.ndarray:
        u, v = self.graph.edges[edge]
        if node == u:
            return self.maps_lo[edge]
        if node == v:
            return self.maps_hi[edge]
        raise SheafError(f"node {node} is not incident to edge {edge}")

    def restriction_map(self, node: int, edge: int) -> RestrictionMap:
        return RestrictionMap(self.restriction(node, edge), self.family)

    def is_bundle(self, tol: float = ORTH_TOL) -> bool:
        """True if every restriction map is orthogonal within ``tol``."""
        if self.graph.m == 0:
            return True
        eye = np.eye(self.d)
        for maps in (self.maps_lo, self.maps_hi):
            gram = np.swapaxes(maps, -1, -2) @ maps - eye
            if np.sqrt(np.sum(gram ** 2, axis=(-2, -1))).max() > tol:
                return False
        return True

    def is_symmetric(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.maps_lo - self.maps_hi) <= tol))

    def with_maps(self, maps_lo, maps_hi, family=None) -> "Sheaf":
        return Sheaf(self.graph, self.d, maps_lo, maps_hi, family or self.family)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "family": self.family.value,
            "n": self.graph.n,
            "maps": [
                {"edge": [u, v], "Fu": self.maps_lo[i].tolist(), "Fv": self.maps_hi[i].tolist()}
                for i, (u, v) in enumerate(self.graph.edges)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict, graph: Graph | None = None) -> "Sheaf":
        d = int(obj["d"])
        entries = obj["maps"]
        if graph is None:
            n = obj.get("n")
            if n is None:
                n = 1 + max((max(e["edge"]) for e in entries), default=-1)
            graph = Graph(n, [e["edge"] for e in entries])
        lo = np.zeros((graph.m, d, d))
        hi = np.zeros((graph.m, d, d))
        for e in entries:
            u, v = e["edge"]
            i = graph.edge_id(u, v)
            Fu, Fv = np.asarray(e["Fu"], float), np.asarray(e["Fv"], float)
            if u < v:
                lo[i], hi[i] = Fu, Fv
            else:
                lo[i], hi[i] = Fv, Fu
        return cls(graph, d, lo, hi, obj.get("family", "general"))

    @classmethod
    def from_json(cls, text: str, graph: Graph | None = None) -> "Sheaf":
        return cls.from_dict(json.loads(text), graph)

    def __repr__(self):
        return f"Sheaf(n={self.n}, m={self.graph.m}, d={self.d}, family={self.family.value})"


# --------------------------------------------------------------------------
# constructors


def trivial_sheaf(g: Graph, d: int = 1) -> Sheaf:
    eye = np.broadcast_to(np.eye(d), (g.m, d, d))
    family = Family.ORTHOGONAL if d > 1 else Family.SCALAR
    return Sheaf(g, d, eye, eye, family)


def scalar_sheaf(g: Graph, lo, hi) -> Sheaf:
    """d = 1 sheaf from per-edge scalar maps."""
    return Sheaf(g, 1, np.asarray(lo, float).reshape(-1, 1, 1),
                 np.asarray(hi, float).reshape(-1, 1, 1), Family.SCALAR)


def householder_orthogonal(vs) -> np.ndarray:
    """Product ``H(v_1) H(v_2) ... H(v_k)`` of Householder reflections.

    ``H(v) = I - 2 v v^T / |v|^2``. The result is orthogonal with
    determinant ``(-1)^k``.
    """
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    k, d = vs.shape
    if not 1 <= k <= d:
        raise SheafError(f"need 1 <= k <= d reflections, got k={k}, d={d}")
    M = np.eye(d)
    for v in vs:
        nrm2 = float(v @ v)
        if nrm2 == 0.0:
            raise SheafError("zero Householder vector")
        M = M - 2.0 * np.outer(M @ v, v) / nrm2
    return M


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Householder product of d Gaussian reflections (determinant (-1)^d)."""
    return householder_orthogonal(rng.standard_normal((d, d)))


def random_bundle(g: Graph, d: int, seed=0) -> Sheaf:
    """Random O(d) bundle; each map an independent product of d reflections."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if d == 1:
        # a single reflection in R^1 is always -1, so draw the sign directly
        lo = rng.choice([-1.0, 1.0], (g.m, 1, 1))
        hi = rng.choice([-1.0, 1.0], (g.m, 1, 1))
    else:
        lo = np.stack([random_orthogonal(d, rng) for _ in range(g.m)]) if g.m else np.zeros((0, d, d))
        hi = np.stack([random_orthogonal(d, rng) for _ in range(g.m)]) if g.m else np.zeros((0, d, d))
    return Sheaf(g, d, lo, hi, Family.ORTHOGONAL)


def random_sheaf(g: Graph, d: int, family, seed=0, symmetric: bool = False,
                 min_abs: float = 0.1) -> Sheaf:
    """Random sheaf of the requested family, for test corpora.

    Scalar and diagonal entries are drawn with magnitude in ``[min_abs, 2]``
    and random sign, so maps are invertible. General maps are Gaussian.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    family = Family(family)
    m = g.m

    def draw():
        if family is Family.ORTHOGONAL:
            return random_bundle(g, d, rng).maps_lo
        if family in (Family.SCALAR, Family.DIAGONAL):
            vals = rng.uniform(min_abs, 2.0, (m, d)) * rng.choice([-1.0, 1.0], (m, d))
            return np.einsum("ej,jk->ejk", vals, np.eye(d))
        return rng.standard_normal((m, d, d))

    lo = draw()
    hi = lo.copy() if symmetric else draw()
    return Sheaf(g, d, lo, hi, family)


# --------------------------------------------------------------------------
# transport


def _edge_step(s: Sheaf, a: int, b: int) -> np.ndarray:
    """Transport across one edge from node a to node b."""
    e = s.graph.edge_id(a, b)
    Fa = s.restriction(a, e)
    Fb = s.restriction(b, e)
    if s.family is Family.ORTHOGONAL:
        return Fb.T @ Fa
    if np.linalg.cond(Fb) > COND_LIMIT:
        raise SingularMapError(f"restriction map of node {b} on edge {e} is singular")
    return np.linalg.solve(Fb, Fa)


def transport(s: Sheaf, path: Sequence[int]) -> Transport:
    """Compose edge transports along ``path`` (from its first to last node).

    Each step ``a -> b`` across edge ``e`` contributes ``F[b <| e]^{-1}
    F[a <| e]``; for orthogonal maps the inverse is the transpose.
    """
    path = [int(p) for p in path]
    if not path:
        raise SheafError("empty path")
    P = np.eye(s.d)
    for a, b in zip(path[:-1], path[1:]):
        if not s.graph.has_edge(a, b):
            raise GraphError(f"path step {a} -> {b} is not an edge")
        P = _edge_step(s, a, b) @ P
    return Transport(P, tuple(path))


def _require_bundle(s: Sheaf) -> None:
    if not s.is_bundle():
        raise SheafError("operation requires an orthogonal (O(d) bundle) sheaf")


def path_dependence_radius(s: Sheaf, basis: CycleBasis | None = None) -> float:
    """``max ||P_gamma - I||_2`` over the cycles of ``basis``.

    With the default BFS fundamental basis this is a lower bound on the
    supremum over all path pairs; it is zero iff the transport is
    path-independent.
    """
    _require_bundle(s)
    return max_holonomy(s, basis)


def cycle_fixed_space(s: Sheaf, cycle: Sequence[int], tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis (as columns) of ``ker(P_gamma - I)``."""
    _require_bundle(s)
    if len(cycle) < 1 or cycle[0] != cycle[-1]:
        raise SheafError("cycle must start and end at the same node")
    P = transport(s, cycle).matrix
    _, sv, Vt = np.linalg.svd(P - np.eye(s.d))
    return Vt[sv <= tol].T


def simple_paths(g: Graph, source: int, max_paths: int = 200_000):
    """Yield every simple path starting at ``source`` (including ``[source]``)."""
    count = 0
    path = [source]
    on_path = {source}

    def extend():
        nonlocal count
        count += 1
        if count > max_paths:
            raise SheafError("simple-path enumeration exceeded the cap")
        yield list(path)
        for w in g.adjacency[path[-1]]:
            if w not in on_path:
                on_path.add(w)
                path.append(w)
                yield from extend()
                path.pop()
                on_path.discard(w)

    yield from extend()


def _max_pair_distance(M: np.ndarray) -> float:
    """``max ||M_a - M_b||_2`` over all pairs of orthogonal matrices in M."""
    k, d, _ = M.shape
    if d == 1:
        return float(M[:, 0, 0].max() - M[:, 0, 0].min())
    if d <= 3:
        det = np.sign(np.linalg.det(M))
        if det.min() != det.max():
            # M_a^T M_b is orthogonal with det -1, so it has eigenvalue -1
            return 2.0
        # M_a^T M_b is a single-angle rotation: both nonzero singular values
        # of M_a - M_b are equal, so the 2-norm is half the Frobenius norm
        flat = M.reshape(k, d * d)
        sq = np.einsum("ij,ij->i", flat, flat)
        best = 0.0
        for a in range(0, k, 256):
            fro2 = sq[a:a + 256, None] + sq[None, :] - 2.0 * flat[a:a + 256] @ flat.T
            best = max(best, float(fro2.max()))
        return float(np.sqrt(max(best, 0.0) / 2.0))
    r = 0.0
    for a in range(k):
        r = max(r, float(np.linalg.norm(M[a] - M, 2, axis=(-2, -1)).max()))
    return r


def exhaustive_radius(s: Sheaf, max_pairs: int = 5_000_000) -> float:
    """Path-dependence radius over all pairs of simple paths.

    For every ordered node pair (v, u) all simple paths v -> u are
    enumerated and ``max ||P_gamma - P_gamma'||_2`` is taken. Every
    fundamental cycle splits into two simple paths, so the result is never
    below :func:`path_dependence_radius`. Capped at n <= 8.
    """
    _require_bundle(s)
    if s.n > 8:
        raise SheafError("exhaustive enumeration is capped at n <= 8")
    g = s.graph
    steps = {}
    for u, v in g.edges:
        steps[(u, v)] = _edge_step(s, u, v)
        steps[(v, u)] = _edge_step(s, v, u)
    r = 0.0
    budget = max_pairs
    for src in range(g.n):
        ends: dict[int, list] = {}
        for path in simple_paths(g, src):
            if len(path) < 2 or path[-1] < src:
                continue
            P = np.eye(s.d)
            for a, b in zip(path[:-1], path[1:]):
                P = steps[(a, b)] @ P
            ends.setdefault(path[-1], []).append(P)
        for mats in ends.values():
            k = len(mats)
            if k < 2:
                continue
            if s.d > 3:
                # only the per-pair SVD path is expensive
                budget -= k * k
            if budget < 0:
                raise SheafError("path-pair enumeration exceeded the cap")
            r = max(r, _max_pair_distance(np.stack(mats)))
            if r >= 2.0:
                # orthogonal transports are at most 2 apart
                return r
    return r


def simple_cycles(g: Graph) -> list[list[int]]:
    """Every simple cycle (length >= 3) once, based at its smallest node."""
    out = []

    def extend(start, path, on_path):
        for w in g.adjacency[path[-1]]:
            if w == start and len(path) >= 3:
                if path[1] < path[-1]:
                    out.append(path + [start])
            elif w > start and w not in on_path:
                on_path.add(w)
                path.append(w)
                extend(start, path, on_path)
                path.pop()
                on_path.discard(w)

    for start in range(g.n):
        extend(start, [start], {start})
    return out


def max_holonomy(s: Sheaf, basis: CycleBasis | None = None) -> float:
    """``max ||P_gamma - I||_2`` over basis cycles, for any invertible family."""
    if basis is None:
        basis = fundamental_cycles(s.graph)
    eye = np.eye(s.d)
    return max((float(np.linalg.norm(transport(s, c).matrix - eye, 2)) for c in basis), default=0.0)


def cycle_epsilon(s: Sheaf, cycles: list[list[int]] | None = None) -> float:
    """``min`` over simple cycles of the smallest singular value of ``P_gamma - I``.

    Returns 0 for an acyclic graph.
    """
    _require_bundle(s)
    if cycles is None:
        if s.n > 8:
            raise SheafError("cycle enumeration is capped at n <= 8")
        cycles = simple_cycles(s.graph)
    eye = np.eye(s.d)
    eps = None
    for c in cycles:
        sv = np.linalg.svd(transport(s, c).matrix - eye, compute_uv=False)
        eps = sv[-1] if eps is None else min(eps, sv[-1])
    return 0.0 if eps is None else float(eps)


def tree_transports(s: Sheaf, root: int) -> np.ndarray:
    """Transport from ``root`` to every node along a BFS tree, shape (n, d, d)."""
    g = s.graph
    P = np.full((g.n, s.d, s.d), np.nan)
    P[root] = np.eye(s.d)
    queue = deque([root])
    seen = {root}
    while queue:
        u = queue.popleft()
        for w in g.adjacency[u]:
            if w not in seen:
                seen.add(w)
                P[w] = _edge_step(s, u, w) @ P[u]
                queue.append(w)
    if len(seen) != g.n:
        raise GraphError("graph is disconnected")
    return P

"""Hand-built sheaves with known diffusion limits.

These are the constructive counterparts of the separation results: each
function returns a sheaf whose harmonic space places the classes in a
prescribed geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .diffusion import linear_probe, node_features
from .graph import Graph, GraphError
from .laplacian import NormKind, assemble, normalize
from .sheaf import Family, Sheaf, SheafError, rotation2
from .spectral import CheckReport, harmonic_space, project_harmonic


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class ClassAssignment:
    labels: np.ndarray
    C: int

    def __post_init__(self):
        y = np.asarray(self.labels, dtype=np.int64)
        if y.size and (y.min() < 0 or y.max() >= self.C):
            raise OracleError("labels out of range")
        if np.unique(y).size != self.C:
            raise OracleError("every class must be non-empty")
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_labels(cls, labels) -> "ClassAssignment":
        y = np.asarray(labels, dtype=np.int64)
        return cls(y, int(y.max()) + 1)


# The unit complex numbers and unit quaternions as real matrices.
R2_SET = (
    np.eye(2),
    np.array([[0.0, -1.0], [1.0, 0.0]]),
)
R4_SET = (
    np.eye(4),
    np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float),
    np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float),
    np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float),
)


def rotation_set(d: int) -> list[np.ndarray]:
    """Signed basis ``R_1, ..., R_k, -R_1, ..., -R_k`` for d in {2, 4}."""
    if d == 2:
        base = R2_SET
    elif d == 4:
        base = R4_SET
    else:
        raise OracleError("orthogonal class sheaves exist only for d in {2, 4}")
    return [R.copy() for R in base] + [-R for R in base]


def _as_assignment(cls) -> ClassAssignment:
    return cls if isinstance(cls, ClassAssignment) else ClassAssignment.from_labels(cls)


def _require_connected(g: Graph) -> None:
    if not g.is_connected():
        raise GraphError("construction needs a connected graph")


def potential_sheaf(g: Graph, node_maps: np.ndarray, family=Family.ORTHOGONAL) -> Sheaf:
    """Sheaf with ``F[v <| e] = O_v^T`` for every edge at v.

    Transport from u to v is ``O_v O_u^T``, so it is path-independent.
    """
    O = np.asarray(node_maps, dtype=np.float64)
    ea = g.edge_array
    Ot = np.swapaxes(O, 1, 2)
    if g.m:
        lo, hi = Ot[ea[:, 0]], Ot[ea[:, 1]]
    else:
        lo = hi = np.zeros((0,) + O.shape[1:])
    return Sheaf(g, O.shape[1], lo, hi, family)


def homophily_sym_sheaf(g: Graph, cls, alpha: float = 10.0, a_class: int = 0) -> Sheaf:
    """Symmetric scalar sheaf weighting edges inside class A by ``alpha``."""
    ca = _as_assignment(cls)
    if ca.C != 2:
        raise OracleError("homophily construction needs two classes")
    if not alpha > 1:
        raise OracleError("alpha must exceed 1")
    _require_connected(g)
    inA = ca.labels == a_class
    for v in np.flatnonzero(inA):
        if not any(inA[u] for u in g.adjacency[v]):
            raise OracleError(f"node {int(v)} of class A has no neighbour in A")
    ea = g.edge_array
    w = np.where(inA[ea[:, 0]] & inA[ea[:, 1]], np.sqrt(alpha), 1.0)
    return Sheaf(g, 1, w, w, Family.SCALAR)


def signed_two_class_sheaf(g: Graph, cls, alpha_e=None, a_class: int = 0) -> Sheaf:
    """Scalar sheaf with ``F[v <| e] = -alpha_e`` on class A and ``+alpha_e`` on B.

    Inter-class transports are -1 and intra-class transports +1.
    """
    ca = _as_assignment(cls)
    if ca.C != 2:
        raise OracleError("signed construction needs two classes")
    _require_connected(g)
    alpha = np.ones(g.m) if alpha_e is None else np.asarray(alpha_e, dtype=np.float64)
    if alpha.shape != (g.m,) or np.any(alpha <= 0):
        raise OracleError("alpha_e must be one positive weight per edge")
    sign = np.where(ca.labels == a_class, -1.0, 1.0)
    ea = g.edge_array
    return Sheaf(g, 1, sign[ea[:, 0]] * alpha, sign[ea[:, 1]] * alpha, Family.SCALAR)


def diagonal_multiclass_sheaf(g: Graph, cls, d: int | None = None) -> Sheaf:
    """Diagonal sheaf whose channel i is the class-i-versus-rest signed sheaf."""
    ca = _as_assignment(cls)
    d = ca.C if d is None else d
    if d < ca.C:
        raise OracleError("diagonal construction needs d >= C")
    _require_connected(g)
    ea = g.edge_array
    lo = np.zeros((g.m, d, d))
    hi = np.zeros((g.m, d, d))
    idx = np.arange(d)
    for i in range(d):
        if i < ca.C:
            sign = np.where(ca.labels == i, -1.0, 1.0)
            lo[:, i, i] = sign[ea[:, 0]]
            hi[:, i, i] = sign[ea[:, 1]]
        else:
            lo[:, i, i] = hi[:, i, i] = 1.0
    assert np.all(lo[:, idx, idx] != 0)
    return Sheaf(g, d, lo, hi, Family.DIAGONAL)


def orth_bundle_sheaf(g: Graph, cls, d: int = 2) -> Sheaf:
    """O(d) bundle placing class c at ``O_c`` from the signed rotation set.

    Classes are assigned ``R_1, R_2, ..., -R_1, -R_2, ...`` in order, so
    class 0 carries the identity.
    """
    ca = _as_assignment(cls)
    mats = rotation_set(d)
    if ca.C > len(mats):
        raise OracleError(f"at most {len(mats)} classes for d={d}")
    _require_connected(g)
    return potential_sheaf(g, np.stack([mats[c] for c in ca.labels]))


def regular_rotation_sheaf(g: Graph, cls) -> Sheaf:
    """O(2) bundle placing class i at rotation ``i * 2 pi / C`` (regular graphs)."""
    ca = _as_assignment(cls)
    _require_connected(g)
    if not g.is_regular():
        raise GraphError("regular_rotation_sheaf needs a regular graph")
    theta = 2 * np.pi / ca.C
    return potential_sheaf(g, np.stack([rotation2(c * theta) for c in ca.labels]))


# --------------------------------------------------------------------------
# energy witness


@dataclass(frozen=True)
class EnergyWitness:
    sheaf: Sheaf
    W1: np.ndarray
    x: np.ndarray
    edge: tuple


def witness_from_pair(g: Graph, F_lo: np.ndarray, F_hi: np.ndarray, eps: float) -> EnergyWitness:
    """Energy-increase witness from the maps of one edge, identity elsewhere.

    With ``B = F_lo^T F_hi - I``, a unit ``g`` in ker B gives the harmonic
    signal ``x_v = sqrt(d_v) g``; ``W1 = c w g^T`` with ``w`` a unit vector of
    ``(ker B)^perp`` and ``c = eps (1 - 1e-6)`` moves it off the kernel.
    """
    _require_connected(g)
    if g.m == 0:
        raise OracleError("witness needs at least one edge")
    F_lo = np.asarray(F_lo, dtype=np.float64)
    F_hi = np.asarray(F_hi, dtype=np.float64)
    d = F_lo.shape[0]
    for F in (F_lo, F_hi):
        if np.linalg.norm(F.T @ F - np.eye(d)) > 1e-10:
            raise OracleError("witness maps must be orthogonal")
    if d < 2:
        raise OracleError("witness needs d >= 2")
    B = F_lo.T @ F_hi - np.eye(d)
    if np.linalg.norm(B) <= 1e-12:
        raise OracleError("B = 0: the edge maps agree, no energy can be created")
    _, sv, Vt = np.linalg.svd(B)
    kernel = Vt[sv <= 1e-10]
    if kernel.shape[0] == 0:
        raise OracleError("B has trivial kernel: no harmonic signal survives the edge")
    gvec = kernel[0]
    w = Vt[0]
    lo = np.broadcast_to(np.eye(d), (g.m, d, d)).copy()
    hi = lo.copy()
    lo[0], hi[0] = F_lo, F_hi
    s = Sheaf(g, d, lo, hi, Family.ORTHOGONAL)
    D = assemble(s).diag
    lam, Q = np.linalg.eigh(D)
    Dhalf = (Q * np.sqrt(np.clip(lam, 0, None))[:, None, :]) @ np.swapaxes(Q, 1, 2)
    x = (Dhalf @ gvec).reshape(-1, 1)
    W1 = eps * (1.0 - 1e-6) * np.outer(w, gvec)
    return EnergyWitness(s, W1, x, g.edges[0])


def energy_increase_witness(g: Graph, d: int = 2, eps: float = 1e-3) -> EnergyWitness:
    """Non-symmetric bundle, small W1 and harmonic x with E((I kron W1) x) > 0.

    The first edge carries ``F_lo = I`` and ``F_hi = I - 2 e_1 e_1^T``; every
    other map is the identity.
    """
    if d < 2:
        raise OracleError("witness needs d >= 2")
    reflection = np.eye(d)
    reflection[0, 0] = -1.0
    return witness_from_pair(g, np.eye(d), reflection, eps)


# --------------------------------------------------------------------------
# impossibility probe


def convex_hull_violation(points: np.ndarray, labels) -> bool:
    """True if some point of one class lies in the convex hull of the other classes.

    A feasibility LP per (class, point). For C >= 3 classes this rules out
    one-versus-rest linear separation of that class.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    y = np.asarray(labels)
    for c in np.unique(y):
        others = P[y != c]
        k = others.shape[0]
        A_eq = np.vstack([others.T, np.ones((1, k))])
        for p in P[y == c]:
            b_eq = np.concatenate([p, [1.0]])
            res = linprog(np.zeros(k), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
            if res.status == 0:
                return True
    return False


def impossibility_probe(s: Sheaf, X: np.ndarray, labels, train=None, test=None) -> CheckReport:
    """Probe accuracy of the harmonic projection of X for a d = 1 sheaf.

    ``holds`` is True when the classes are *not* linearly separated, i.e.
    probe training accuracy is below 1.
    """
    if s.d != 1:
        raise SheafError("impossibility probe needs d = 1")
    y = np.asarray(labels, dtype=np.int64)
    H = harmonic_space(normalize(assemble(s), NormKind.SYM))
    Z = project_harmonic(H, X)
    res = linear_probe(node_features(Z, s.n), y, train, test)
    prior = float(np.bincount(y).max() / y.size)
    hull = convex_hull_violation(node_features(Z, s.n), y) if y.max() >= 2 else None
    return CheckReport(
        prop="impossibility",
        inputs={"n": s.n, "C": int(y.max()) + 1, "h": H.dim},
        lhs=res.train_acc, rhs=1.0, holds=bool(res.train_acc < 1.0), tolerance=0.0,
        extra={"train_acc": res.train_acc, "test_acc": res.test_acc, "prior": prior,
               "hull_violation": hull},
    )

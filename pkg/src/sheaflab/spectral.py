"""Eigendecompositions, harmonic spaces, Dirichlet energy and spectral checks."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import diameter
from .laplacian import BlockMatrix, LaplacianError, NormKind, assemble, inv_sqrt_psd, normalize
from .sheaf import (Sheaf, SheafError, cycle_epsilon, exhaustive_radius, max_holonomy,
                    path_dependence_radius, tree_transports)

KERNEL_TOL = 1e-7
PATH_INDEP_TOL = 1e-6


class SpectralError(ValueError):
    pass


class EnergyMismatchError(AssertionError):
    pass


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class HarmonicSpace:
    basis: np.ndarray
    tol: float = KERNEL_TOL

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass
class CheckReport:
    prop: str
    inputs: dict
    lhs: float
    rhs: float
    holds: bool
    tolerance: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        extra = out.pop("extra")
        out.update(extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=float)


# --------------------------------------------------------------------------
# eigensolvers


def jacobi_eigh(M: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi eigenvalue iteration for a symmetric matrix.

    Each rotation zeroes one off-diagonal pair; sweeps repeat until the
    off-diagonal Frobenius mass is below ``tol * ||M||_F``.
    """
    A = np.array(M, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A ** 2) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise SpectralError("Jacobi iteration did not converge")
    lam = np.diag(A)
    order = np.argsort(lam, kind="stable")
    return lam[order], V[:, order]


def eigh(M, method: str = "lapack") -> EigenDecomposition:
    """Full symmetric eigendecomposition, eigenvalues ascending.

    ``method`` is ``"lapack"`` (numpy) or ``"jacobi"`` (in-repo solver).
    """
    if isinstance(M, BlockMatrix):
        M = M.to_dense()
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise SpectralError("eigh needs a square matrix")
    if M.shape[0] > 4096:
        raise SpectralError("dense eigendecomposition capped at 4096")
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10:
        raise SpectralError("eigh needs a symmetric matrix")
    M = 0.5 * (M + M.T)
    if method == "lapack":
        lam, V = np.linalg.eigh(M)
    elif method == "jacobi":
        lam, V = jacobi_eigh(M)
    else:
        raise ValueError(f"unknown method {method!r}")
    return EigenDecomposition(lam, V)


def harmonic_space(delta: BlockMatrix, tol: float = KERNEL_TOL) -> HarmonicSpace:
    ed = eigh(delta)
    return HarmonicSpace(ed.eigenvectors[:, ed.eigenvalues <= tol], tol)


def project_harmonic(H: HarmonicSpace, X: np.ndarray) -> np.ndarray:
    B = H.basis
    return B @ (B.T @ np.asarray(X, dtype=np.float64))


def lambda_star(eigenvalues, tol: float = KERNEL_TOL) -> float:
    """``max (lambda - 1)^2`` over the non-zero eigenvalues (0 if none)."""
    lam = np.asarray(eigenvalues)
    lam = lam[lam > tol]
    return float(np.max((lam - 1.0) ** 2)) if lam.size else 0.0


def spectral_gap(s: Sheaf) -> float:
    """Smallest eigenvalue of the Sym-normalized Laplacian."""
    return float(eigh(normalize(assemble(s), NormKind.SYM)).eigenvalues[0])


# --------------------------------------------------------------------------
# energy


def edge_energy(s: Sheaf, X: np.ndarray, clamp: float = 1e-8) -> float:
    """Edge-sum form of the normalized Dirichlet energy.

    Sums ``||F_v D_v^{-1/2} x_v - F_u D_u^{-1/2} x_u||^2`` once per edge.
    """
    g, d = s.graph, s.d
    X = np.asarray(X, dtype=np.float64).reshape(g.n, d, -1)
    if g.m == 0:
        return 0.0
    S = inv_sqrt_psd(assemble(s).diag, clamp)
    Y = S @ X
    ea = g.edge_array
    diff = s.maps_lo @ Y[ea[:, 0]] - s.maps_hi @ Y[ea[:, 1]]
    return float(np.sum(diff ** 2))


def dirichlet_energy(s: Sheaf, delta: BlockMatrix, X: np.ndarray, rtol: float = 1e-9) -> float:
    """``trace(X^T Delta X)``, cross-checked against the edge-sum form."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    quad = float(np.sum(X * delta.matmat(X)))
    edge = edge_energy(s, X)
    if abs(quad - edge) > rtol * max(1.0, abs(quad), abs(edge)):
        raise EnergyMismatchError(f"quadratic form {quad!r} and edge sum {edge!r} disagree")
    return quad


# --------------------------------------------------------------------------
# proposition checkers


def _require_connected_bundle(s: Sheaf) -> None:
    if not s.graph.is_connected():
        raise SpectralError("check needs a connected graph")
    if not s.is_bundle():
        raise SheafError("check needs an orthogonal bundle")


def check_gap_upper(s: Sheaf, exhaustive: bool | None = None, tol: float = 1e-8) -> CheckReport:
    """Gap upper bound ``lambda_0 <= r^2 / 2``.

    With ``exhaustive`` (default for n <= 8) r is computed over all pairs of
    simple paths, otherwise over the fundamental cycles.
    """
    _require_connected_bundle(s)
    if exhaustive is None:
        exhaustive = s.n <= 8
    lam0 = spectral_gap(s)
    r_basis = path_dependence_radius(s)
    r = exhaustive_radius(s) if exhaustive else r_basis
    rhs = r * r / 2.0
    return CheckReport(
        prop="gap_upper",
        inputs={"n": s.n, "m": s.graph.m, "d": s.d, "exhaustive": bool(exhaustive)},
        lhs=lam0, rhs=rhs, holds=bool(lam0 <= rhs + tol), tolerance=tol,
        extra={"lambda0": lam0, "r_hat": r, "r_basis": r_basis},
    )


def check_gap_lower(s: Sheaf, tol: float = 1e-10) -> CheckReport:
    """Gap lower bound ``lambda_0 >= eps^2 / (2 diam n d_max)``.

    ``eps`` is the minimum over simple cycles of the smallest singular value
    of ``P_gamma - I``. Also reports ``bound_safe``, the same bound with
    ``2 diam`` replaced by ``2 diam + 1``, which covers odd cycles.
    """
    _require_connected_bundle(s)
    if s.n > 8:
        raise SpectralError("cycle enumeration is capped at n <= 8")
    lam0 = spectral_gap(s)
    eps = cycle_epsilon(s)
    diam = diameter(s.graph)
    dmax = int(s.graph.degrees.max())
    bound = eps * eps / (2.0 * diam * s.n * dmax) if diam else 0.0
    safe = eps * eps / ((2.0 * diam + 1.0) * s.n * dmax) if diam else 0.0
    return CheckReport(
        prop="gap_lower",
        inputs={"n": s.n, "m": s.graph.m, "d": s.d, "diam": diam, "d_max": dmax},
        lhs=lam0, rhs=bound, holds=bool(lam0 >= bound - tol), tolerance=tol,
        extra={"lambda0": lam0, "eps_hat": eps, "bound": bound, "bound_safe": safe,
               "holds_safe": bool(lam0 >= safe - tol)},
    )


def check_harmonic_dim(s: Sheaf, tol: float = KERNEL_TOL) -> CheckReport:
    """``dim H^0 <= d``, with equality iff transport is path-independent."""
    _require_connected_bundle(s)
    h = harmonic_space(normalize(assemble(s), NormKind.SYM), tol).dim
    r = path_dependence_radius(s)
    indep = r <= PATH_INDEP_TOL
    holds = h <= s.d and ((h == s.d) == indep)
    return CheckReport(
        prop="harmonic_dim",
        inputs={"n": s.n, "m": s.graph.m, "d": s.d},
        lhs=float(h), rhs=float(s.d), holds=bool(holds), tolerance=tol,
        extra={"h": h, "d": s.d, "r_hat": r, "path_independent": bool(indep)},
    )


def bundle_harmonic_closed_form(s: Sheaf, v_star: int = 0) -> HarmonicSpace:
    """Harmonic basis of the Sym-normalized Laplacian built from transports.

    Column i at node v is ``D_v^{1/2} P_{v* -> v} e_i``, normalized. This
    covers bundles and their edge-weighted variants.
    """
    if not s.graph.is_connected():
        raise SpectralError("closed form needs a connected graph")
    if max_holonomy(s) > PATH_INDEP_TOL:
        raise SheafError("closed form needs a path-independent sheaf")
    P = tree_transports(s, v_star)
    D = assemble(s).diag
    lam, Q = np.linalg.eigh(D)
    Dhalf = (Q * np.sqrt(np.clip(lam, 0.0, None))[:, None, :]) @ np.swapaxes(Q, 1, 2)
    cols = (Dhalf @ P).reshape(s.n * s.d, s.d)
    q, _ = np.linalg.qr(cols)
    return HarmonicSpace(q)


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles (radians) between the column spans of A and B."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    sv = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.arccos(np.clip(sv, -1.0, 1.0))


__all__ = [
    "CheckReport", "EigenDecomposition", "EnergyMismatchError", "HarmonicSpace", "LaplacianError",
    "SpectralError", "bundle_harmonic_closed_form", "check_gap_lower", "check_gap_upper",
    "check_harmonic_dim", "dirichlet_energy", "edge_energy", "eigh", "harmonic_space",
    "jacobi_eigh", "lambda_star", "principal_angles", "project_harmonic", "spectral_gap",
]

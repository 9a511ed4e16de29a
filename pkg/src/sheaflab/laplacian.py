"""Sheaf Laplacians as symmetric block-sparse operators."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp

from .graph import Graph
from .sheaf import Sheaf

DENSE_LIMIT = 4096
SYM_TOL = 1e-10


class LaplacianError(ValueError):
    pass


class NormKind(str, enum.Enum):
    NONE = "none"
    SYM = "sym"
    AUGSYM = "augsym"


@dataclass(frozen=True)
class NormalizationKind:
    kind: NormKind = NormKind.SYM
    pinv_clamp: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", NormKind(self.kind))
        if not self.pinv_clamp > 0:
            raise LaplacianError("pinv_clamp must be positive")


class BlockMatrix:
    """Symmetric n x n block matrix with d x d blocks.

    Only the diagonal blocks and the upper-triangle blocks ``(u, v)``, one
    per graph edge ``u < v``, are stored. The block ``(v, u)`` is the
    transpose of ``(u, v)``.
    """

    def __init__(self, graph: Graph, d: int, diag: np.ndarray, off: np.ndarray | None):
        self.graph = graph
        self.n = graph.n
        self.d = int(d)
        self.diag = np.asarray(diag, dtype=np.float64).reshape(self.n, d, d)
        self.off = None if off is None else np.asarray(off, dtype=np.float64).reshape(graph.m, d, d)
        self.diag.setflags(write=False)
        if self.off is not None:
            self.off.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        nd = self.n * self.d
        return nd, nd

    @property
    def blocks(self) -> dict:
        out = {(i, i): self.diag[i] for i in range(self.n)}
        if self.off is not None:
            for k, (u, v) in enumerate(self.graph.edges):
                out[(u, v)] = self.off[k]
        return out

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        n, d = self.n, self.d
        base = np.arange(d)
        rows, cols, vals = [], [], []

        def put(bi, bj, blocks):
            r = (bi[:, None, None] * d + base[None, :, None]) + 0 * base[None, None, :]
            c = (bj[:, None, None] * d + base[None, None, :]) + 0 * base[None, :, None]
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(blocks.ravel())

        idx = np.arange(n)
        put(idx, idx, self.diag)
        if self.off is not None and self.graph.m:
            ea = self.graph.edge_array
            put(ea[:, 0], ea[:, 1], self.off)
            put(ea[:, 1], ea[:, 0], np.swapaxes(self.off, 1, 2))
        M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=self.shape).tocsr()
        M.sum_duplicates()
        return M

    def to_sparse(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        if self.n * self.d > DENSE_LIMIT:
            raise LaplacianError(f"dense conversion capped at nd <= {DENSE_LIMIT}")
        return self._csr.toarray()

    def matmat(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.n * self.d:
            raise LaplacianError(f"shape mismatch: operator is {self.shape}, input has {X.shape[0]} rows")
        return self._csr @ X

    def __matmul__(self, X):
        return self.matmat(X)

    def write_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(path), sp.coo_matrix(self._csr), symmetry="symmetric")


def assemble(s: Sheaf) -> BlockMatrix:
    """Unnormalized sheaf Laplacian ``L_F``."""
    g, d = s.graph, s.d
    diag = np.zeros((g.n, d, d))
    if g.m:
        Fu, Fv = s.maps_lo, s.maps_hi
        ea = g.edge_array
        np.add.at(diag, ea[:, 0], np.swapaxes(Fu, 1, 2) @ Fu)
        np.add.at(diag, ea[:, 1], np.swapaxes(Fv, 1, 2) @ Fv)
        off = -np.swapaxes(Fu, 1, 2) @ Fv
    else:
        off = np.zeros((0, d, d))
    return BlockMatrix(g, d, diag, off)


def degree_blocks(L: BlockMatrix) -> BlockMatrix:
    return BlockMatrix(L.graph, L.d, L.diag.copy(), None)


def inv_sqrt_psd(B: np.ndarray, clamp: float = 1e-8) -> np.ndarray:
    """Pseudo-inverse square root of a symmetric PSD matrix.

    Works on a single matrix or a stack of them. Eigenvalues at or below
    ``clamp`` are dropped.
    """
    B = np.asarray(B, dtype=np.float64)
    if np.max(np.abs(B - np.swapaxes(B, -1, -2)), initial=0.0) > SYM_TOL:
        raise LaplacianError("inv_sqrt_psd needs a symmetric matrix")
    lam, Q = np.linalg.eigh(B)
    keep = lam > clamp
    s = np.where(keep, 1.0 / np.sqrt(np.where(keep, lam, 1.0)), 0.0)
    return (Q * s[..., None, :]) @ np.swapaxes(Q, -1, -2)


def normalize(L: BlockMatrix, kind: NormalizationKind | str = NormKind.SYM) -> BlockMatrix:
    """``D^{-1/2} L D^{-1/2}`` (Sym) or ``(D + I)^{-1/2} L (D + I)^{-1/2}`` (AugSym)."""
    if not isinstance(kind, NormalizationKind):
        kind = NormalizationKind(NormKind(kind))
    if kind.kind is NormKind.NONE:
        return L
    D = L.diag
    if kind.kind is NormKind.AUGSYM:
        D = D + np.eye(L.d)
    else:
        top = np.linalg.eigvalsh(D)[:, -1] if L.n else np.zeros(0)
        bad = np.flatnonzero(top <= kind.pinv_clamp)
        if bad.size:
            raise LaplacianError(
                f"degree block of node {int(bad[0])} is numerically zero; use AugSym normalization")
    S = inv_sqrt_psd(D, kind.pinv_clamp)
    diag = S @ L.diag @ S
    off = None
    if L.off is not None:
        ea = L.graph.edge_array
        off = S[ea[:, 0]] @ L.off @ S[ea[:, 1]] if L.graph.m else L.off
    return BlockMatrix(L.graph, L.d, diag, off)


def sheaf_laplacian(s: Sheaf, kind: NormalizationKind | str = NormKind.SYM) -> BlockMatrix:
    return normalize(assemble(s), kind)

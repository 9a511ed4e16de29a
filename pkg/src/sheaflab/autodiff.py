"""A small reverse-mode autodiff engine over numpy arrays.

Every :class:`Tensor` keeps references to its parents and a closure that
pushes its gradient to them. :func:`backward` walks the graph in reverse
topological order. Only the operations needed by the sheaf models are
provided.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

EIG_MERGE_TOL = 1e-8


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")
    # make numpy defer to our reflected operators (ndarray - Tensor)
    __array_ufunc__ = None

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


def param(value, name=None) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def const(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _node(value, parents, fn) -> Tensor:
    return Tensor(value, tuple(parents), fn)


# --------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = const(a), const(b)
    return _node(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = const(a), const(b)
    return _node(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = const(a), const(b)
    return _node(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Tensor:
    a, b = const(a), const(b)
    out = a.value / b.value
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.value, a.shape),
                            _unbroadcast(-g * out / b.value, b.shape)))


def neg(a) -> Tensor:
    return _node(-a.value, (a,), lambda g: (-g,))


def tanh(a) -> Tensor:
    out = np.tanh(a.value)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    mask = a.value > 0
    return _node(np.where(mask, a.value, slope * a.value), (a,),
                 lambda g: (np.where(mask, g, slope * g),))


def elu(a) -> Tensor:
    mask = a.value > 0
    ex = np.exp(np.minimum(a.value, 0.0))
    return _node(np.where(mask, a.value, ex - 1.0), (a,), lambda g: (np.where(mask, g, g * ex),))


def activation(name: str, a: Tensor, slope: float = 0.01) -> Tensor:
    if name in ("id", "identity", None):
        return a
    if name == "relu":
        return relu(a)
    if name in ("leaky_relu", "leakyrelu"):
        return leaky_relu(a, slope)
    if name == "elu":
        return elu(a)
    if name == "tanh":
        return tanh(a)
    raise ValueError(f"unknown activation {name!r}")


# --------------------------------------------------------------------------
# shape and indexing


def reshape(a, shape) -> Tensor:
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a, i, j) -> Tensor:
    return _node(np.swapaxes(a.value, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def _is_fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def getitem(a, idx) -> Tensor:
    if isinstance(idx, np.ndarray) and idx.ndim == 1 and idx.dtype.kind in "iu":
        return take(a, idx)
    fancy = _is_fancy(idx)

    def back(g):
        out = np.zeros_like(a.value)
        if fancy:
            np.add.at(out, idx, g)
        else:
            out[idx] = g
        return (out,)

    return _node(a.value[idx], (a,), back)


def segment_matrix(idx, n: int) -> sp.csr_matrix:
    """Sparse (n, k) matrix summing rows ``k`` into rows ``idx[k]``."""
    idx = np.asarray(idx, dtype=np.int64)
    k = idx.size
    return sp.csr_matrix((np.ones(k), (idx, np.arange(k))), shape=(n, k))


def _segment_sum(values: np.ndarray, M: sp.csr_matrix) -> np.ndarray:
    k = values.shape[0]
    return np.asarray(M @ values.reshape(k, -1)).reshape((M.shape[0],) + values.shape[1:])


def take(a, idx, matrix: sp.csr_matrix | None = None) -> Tensor:
    """Rows ``a[idx]`` for a 1-d integer index array (repeats allowed).

    ``matrix`` may pass a precomputed ``segment_matrix(idx, len(a))``.
    """
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]

    def back(g):
        M = segment_matrix(idx, n) if matrix is None else matrix
        return (_segment_sum(g, M),)

    return _node(a.value[idx], (a,), back)


def _bincount_sum(values: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    flat = values.reshape(idx.size, -1)
    out = np.empty((n, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.bincount(idx, weights=flat[:, j], minlength=n)
    return out.reshape((n,) + values.shape[1:])


def scatter_add(a, idx, n: int, matrix: sp.csr_matrix | None = None) -> Tensor:
    """``out[idx[k]] += a[k]`` into a zero array with ``n`` rows."""
    idx = np.asarray(idx, dtype=np.int64)
    if matrix is not None:
        out = _segment_sum(a.value, matrix)
    elif a.value[:1].size <= 16:
        # narrow rows: a few bincounts beat building a sparse matrix
        out = _bincount_sum(a.value, idx, n)
    else:
        out = _segment_sum(a.value, segment_matrix(idx, n))
    return _node(out, (a,), lambda g: (g[idx],))


class SparsePattern:
    """Fixed sparsity pattern of an (N, N) matrix with ``nnz`` entries.

    ``rows[k], cols[k]`` locate value ``k``; ``perm`` reorders values into
    CSR storage order so new values need no re-sorting. Entries must be
    distinct.
    """

    def __init__(self, rows, cols, N: int):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.N = int(N)
        # CSR by a stable sort on rows; columns need not be sorted within a row
        self.perm = np.argsort(self.rows, kind="stable")
        self.indices = self.cols[self.perm]
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(self.rows, minlength=self.N))])

    def matrix(self, values: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((values[self.perm], self.indices, self.indptr), shape=(self.N, self.N))


def sparse_matmul(values, pattern: SparsePattern, X) -> Tensor:
    """``M @ X`` where M has ``pattern`` and differentiable entries ``values``."""
    values, X = const(values), const(X)
    M = pattern.matrix(values.value)
    Xv = X.value

    def back(g):
        gv = np.einsum("kf,kf->k", g[pattern.rows], Xv[pattern.cols])
        return gv, np.asarray(M.T @ g)

    return _node(np.asarray(M @ Xv), (values, X), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [const(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _node(np.concatenate([t.value for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def embed(a, shape, idx) -> Tensor:
    """Zero array of ``shape`` with ``a`` written at ``idx``."""
    out = np.zeros(shape)
    out[idx] = a.value
    return _node(out, (a,), lambda g: (g[idx],))


# --------------------------------------------------------------------------
# reductions and linear algebra


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), back)


def matmul(a, b) -> Tensor:
    a, b = const(a), const(b)
    av, bv = a.value, b.value

    def back(g):
        if av.ndim == 1 or bv.ndim == 1:
            raise NotImplementedError("matmul backward needs >= 2-d operands")
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _node(av @ bv, (a, b), back)


def inv_sqrt(a, clamp: float = 1e-8) -> Tensor:
    """Elementwise ``x^{-1/2}`` for ``x > clamp`` and 0 otherwise."""
    x = a.value
    ok = x > clamp
    out = np.where(ok, 1.0 / np.sqrt(np.where(ok, x, 1.0)), 0.0)
    return _node(out, (a,), lambda g: (np.where(ok, -0.5 * g * out ** 3, 0.0),))


def sym_inv_sqrt(a, clamp: float = 1e-8) -> Tensor:
    """Batched pseudo-inverse square root of symmetric PSD matrices.

    Backward uses the divided-difference (Daleckii-Krein) form. When two
    eigenvalues are closer than ``EIG_MERGE_TOL`` the divided difference is
    replaced by the derivative at their midpoint, which is its limit.
    """
    A = a.value
    lam, Q = np.linalg.eigh(A)
    keep = lam > clamp

    def f(x):
        ok = x > clamp
        return np.where(ok, 1.0 / np.sqrt(np.where(ok, x, 1.0)), 0.0)

    def fprime(x):
        ok = x > clamp
        safe = np.where(ok, x, 1.0)
        return np.where(ok, -0.5 * safe ** -1.5, 0.0)

    fl = np.where(keep, f(lam), 0.0)
    out = (Q * fl[..., None, :]) @ np.swapaxes(Q, -1, -2)

    def back(g):
        li = lam[..., :, None]
        lj = lam[..., None, :]
        diff = li - lj
        close = np.abs(diff) <= EIG_MERGE_TOL * np.maximum(1.0, np.maximum(np.abs(li), np.abs(lj)))
        fi = fl[..., :, None]
        fj = fl[..., None, :]
        K = np.where(close, fprime(0.5 * (li + lj)), (fi - fj) / np.where(close, 1.0, diff))
        Qt = np.swapaxes(Q, -1, -2)
        G = Qt @ g @ Q
        return (Q @ (K * G) @ Qt,)

    return _node(out, (a,), back)


def log_softmax(a, axis: int = -1) -> Tensor:
    x = a.value
    m = x.max(axis=axis, keepdims=True)
    lse = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    out = x - lse
    p = np.exp(out)
    return _node(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels``."""
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_softmax(logits)
    picked = getitem(lp, (np.arange(labels.size), labels))
    return neg(tsum(picked)) * (1.0 / labels.size)


# --------------------------------------------------------------------------
# driver


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d t`` into ``t.grad`` for every ancestor ``t``."""
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node.parents, node.backward_fn(g)):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg

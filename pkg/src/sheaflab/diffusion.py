"""Sheaf diffusion, SCN and NSD layers, energy checks and the linear probe."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .laplacian import BlockMatrix, NormKind, assemble, normalize
from .sheaf import Sheaf
from .spectral import CheckReport, dirichlet_energy, eigh, lambda_star

SNAPSHOT_MAGIC = b"SHDF"


class DiffusionError(RuntimeError):
    pass


class FamilyPreconditionError(ValueError):
    pass


# --------------------------------------------------------------------------
# activations


def activation(name: str, x: np.ndarray, slope: float = 0.01) -> np.ndarray:
    if name in ("id", "identity", None):
        return x
    if name == "relu":
        return np.maximum(x, 0.0)
    if name in ("leaky_relu", "leakyrelu"):
        return np.where(x > 0, x, slope * x)
    if name == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if name == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {name!r}")


def apply_stalk_map(W1: np.ndarray, X: np.ndarray, d: int) -> np.ndarray:
    """``(I_n kron W1) X`` for X of shape (n d, f)."""
    f = X.shape[1]
    Xb = X.reshape(-1, d, f)
    return np.matmul(W1, Xb).reshape(-1, f)


# --------------------------------------------------------------------------
# diffusion


@dataclass(frozen=True)
class DiffusionConfig:
    scheme: str = "euler"
    dt: float = 1.0
    t_max: float = 1.0
    record_every: int = 1

    def __post_init__(self):
        if self.scheme not in ("euler", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme == "euler" and self.dt > 1.0:
            raise ValueError("Euler needs dt <= 1 for a normalized Laplacian")
        if self.t_max < 0:
            raise ValueError("t_max must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    energies: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _quad_energy(delta: BlockMatrix, X: np.ndarray) -> float:
    return float(np.sum(X * delta.matmat(X)))


def diffuse(delta: BlockMatrix, X0: np.ndarray, cfg: DiffusionConfig,
            slack: float = 1e-10) -> Trajectory:
    """Integrate ``dX/dt = -Delta X`` from t = 0 to ``cfg.t_max``.

    The last step is shortened so that the final snapshot lands on t_max.
    Raises :class:`DiffusionError` if the Dirichlet energy grows.
    """
    X = np.array(X0, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != delta.shape[0]:
        raise ValueError(f"X0 has {X.shape[0]} rows, operator has {delta.shape[0]}")
    steps = int(math.ceil(cfg.t_max / cfg.dt - 1e-12)) if cfg.t_max > 0 else 0
    traj = Trajectory()
    E = _quad_energy(delta, X)
    traj.times.append(0.0)
    traj.states.append(X.copy())
    traj.energies.append(E)
    t = 0.0
    for k in range(steps):
        h = min(cfg.dt, cfg.t_max - t)
        if cfg.scheme == "euler":
            X = X - h * delta.matmat(X)
        else:
            k1 = -delta.matmat(X)
            k2 = -delta.matmat(X + 0.5 * h * k1)
            k3 = -delta.matmat(X + 0.5 * h * k2)
            k4 = -delta.matmat(X + h * k3)
            X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = cfg.t_max if k == steps - 1 else t + h
        E_new = _quad_energy(delta, X)
        if E_new > E + slack * max(1.0, traj.energies[0]):
            raise DiffusionError(f"energy increased at t={t:.4g} ({E:.3e} -> {E_new:.3e}); dt too large")
        E = E_new
        if (k + 1) % cfg.record_every == 0 or k == steps - 1:
            traj.times.append(t)
            traj.states.append(X.copy())
            traj.energies.append(E)
    return traj


def steady_state_error(delta: BlockMatrix, X0: np.ndarray, H, cfg: DiffusionConfig) -> float:
    from .spectral import project_harmonic

    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim == 1:
        X0 = X0[:, None]
    final = diffuse(delta, X0, cfg).final
    return float(np.linalg.norm(final - project_harmonic(H, X0)) / max(1.0, np.linalg.norm(X0)))


# --------------------------------------------------------------------------
# layers


@dataclass
class SCNParams:
    W1: np.ndarray
    W2: np.ndarray
    sigma: str = "relu"
    slope: float = 0.01


@dataclass
class NSDLayerParams:
    W1: np.ndarray
    W2: np.ndarray
    eps: np.ndarray
    sigma: str = "elu"
    slope: float = 0.01

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=np.float64)
        if np.any(np.abs(self.eps) > 1.0):
            raise ValueError("eps must lie in [-1, 1]")


def scn_forward(s: Sheaf, p: SCNParams, X: np.ndarray, delta: BlockMatrix | None = None) -> np.ndarray:
    """``sigma((I - Delta)(I kron W1) X W2)`` with the Sym-normalized Laplacian."""
    W1, W2 = np.atleast_2d(p.W1), np.atleast_2d(p.W2)
    X = np.asarray(X, dtype=np.float64)
    if W1.shape != (s.d, s.d) or X.shape[0] != s.n * s.d or X.shape[1] != W2.shape[0]:
        raise ValueError("shape mismatch in scn_forward")
    if delta is None:
        delta = normalize(assemble(s), NormKind.SYM)
    Z = apply_stalk_map(W1, X, s.d) @ W2
    return activation(p.sigma, Z - delta.matmat(Z), p.slope)


def nsd_layer(layer: NSDLayerParams, s_t: Sheaf, X: np.ndarray,
              norm: NormKind | str = NormKind.AUGSYM, delta: BlockMatrix | None = None) -> np.ndarray:
    """``(1 + eps) * X - sigma(Delta (I kron W1) X W2)`` with eps broadcast over stalks."""
    d = s_t.d
    W1, W2 = np.atleast_2d(layer.W1), np.atleast_2d(layer.W2)
    X = np.asarray(X, dtype=np.float64)
    if W1.shape != (d, d) or X.shape[0] != s_t.n * d or W2.shape != (X.shape[1], X.shape[1]):
        raise ValueError("shape mismatch in nsd_layer")
    if layer.eps.shape not in ((d,), ()):
        raise ValueError("eps must have one entry per stalk dimension")
    if delta is None:
        delta = normalize(assemble(s_t), norm)
    Z = apply_stalk_map(W1, X, d) @ W2
    scale = np.tile(1.0 + np.broadcast_to(layer.eps, (d,)), s_t.n)[:, None]
    return scale * X - activation(layer.sigma, delta.matmat(Z), layer.slope)


# --------------------------------------------------------------------------
# energy theorems


def spectral_norm(A: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    G = A.T @ A
    if not np.any(G):
        return 0.0
    v = np.ones(G.shape[0]) + np.linspace(0.0, 1e-3, G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector was in the null space; restart on a basis vector
            v = np.eye(G.shape[0])[int(np.argmax(np.diag(G)))]
            continue
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return math.sqrt(max(lam, 0.0))


def sheaf_class(s: Sheaf) -> str | None:
    """``"h1_plus"``, ``"orth_sym"`` or None, by the energy-theorem preconditions."""
    if s.d == 1 and s.graph.m and np.all(s.maps_lo[:, 0, 0] * s.maps_hi[:, 0, 0] > 0):
        return "h1_plus"
    if s.is_bundle() and s.is_symmetric():
        return "orth_sym"
    return None


def check_energy_decrease(s: Sheaf, p: SCNParams, X: np.ndarray, rtol: float = 1e-9) -> CheckReport:
    """Energy contraction ``E(Y) <= lambda* |W1|^2 |W2^T|^2 E(X)`` for an SCN layer."""
    kind = sheaf_class(s)
    if kind is None:
        raise FamilyPreconditionError("sheaf is neither in H1+ nor an orthogonal symmetric bundle")
    if p.sigma not in ("relu", "leaky_relu", "leakyrelu"):
        raise FamilyPreconditionError("the energy bound needs a (Leaky)ReLU activation")
    delta = normalize(assemble(s), NormKind.SYM)
    lam_star = lambda_star(eigh(delta).eigenvalues)
    Y = scn_forward(s, p, X, delta)
    EX = dirichlet_energy(s, delta, X)
    EY = dirichlet_energy(s, delta, Y)
    n1, n2 = spectral_norm(p.W1), spectral_norm(np.atleast_2d(p.W2).T)
    rhs = lam_star * n1 ** 2 * n2 ** 2 * EX
    holds = EY <= rhs * (1 + rtol) + 1e-12
    return CheckReport(
        prop="energy_decrease",
        inputs={"n": s.n, "d": s.d, "family": kind, "sigma": p.sigma},
        lhs=EY, rhs=rhs, holds=bool(holds), tolerance=rtol,
        extra={"energy_in": EX, "energy_out": EY, "lambda_star": lam_star,
               "w1_norm": n1, "w2t_norm": n2},
    )


# --------------------------------------------------------------------------
# linear probe


@dataclass(frozen=True)
class ProbeResult:
    train_acc: float
    test_acc: float
    weights: np.ndarray = field(repr=False, default=None)


def node_features(X: np.ndarray, n: int) -> np.ndarray:
    """Reshape an (n d, f) cochain matrix into n x (d f) node features."""
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(n, -1)


def linear_probe(features: np.ndarray, labels, train=None, test=None,
                 iters: int = 500, lr: float = 0.1) -> ProbeResult:
    """Multinomial logistic regression trained by full-batch gradient descent.

    Features are standardized with the training-split mean and standard
    deviation. With no split given every node is used for training and
    testing.
    """
    Xf = np.asarray(features, dtype=np.float64)
    if Xf.ndim == 1:
        Xf = Xf[:, None]
    y = np.asarray(labels, dtype=np.int64)
    n = Xf.shape[0]
    train = np.arange(n) if train is None else np.asarray(train, dtype=np.int64)
    test = train if test is None else np.asarray(test, dtype=np.int64)
    if train.size == 0:
        raise ValueError("empty training split")
    classes = np.unique(y[train])
    if classes.size < 2:
        raise ValueError("training split holds a single class")
    C = int(y.max()) + 1
    mu = Xf[train].mean(axis=0)
    sd = Xf[train].std(axis=0)
    sd = np.where(sd > 1e-12 * max(1.0, float(np.abs(mu).max(initial=0.0))), sd, 1.0)
    Z = np.hstack([(Xf - mu) / sd, np.ones((n, 1))])
    W = np.zeros((Z.shape[1], C))
    Ztr = Z[train]
    Y = np.eye(C)[y[train]]
    for _ in range(iters):
        logits = Ztr @ W
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        W -= lr * Ztr.T @ (P - Y) / train.size
    pred = np.argmax(Z @ W, axis=1)
    return ProbeResult(float(np.mean(pred[train] == y[train])),
                       float(np.mean(pred[test] == y[test])) if test.size else float("nan"), W)


# --------------------------------------------------------------------------
# trajectory output


def write_trajectory_csv(path, times, energies, train_acc=None, test_acc=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dirichlet_energy", "train_acc", "test_acc"])
        for i, (t, e) in enumerate(zip(times, energies)):
            tr = "" if train_acc is None else repr(float(train_acc[i]))
            te = "" if test_acc is None else repr(float(test_acc[i]))
            w.writerow([repr(float(t)), repr(float(e)), tr, te])


def read_trajectory_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (float(v) if v != "" else None) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def write_snapshots(path, states, n: int, d: int) -> None:
    """Binary dump: 16-byte header (``SHDF``, n, d, f as uint32) then f64 LE blocks."""
    states = [np.asarray(S, dtype="<f8") for S in states]
    f = states[0].shape[1] if states else 0
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC + struct.pack("<III", n, d, f))
        for S in states:
            if S.shape != (n * d, f):
                raise ValueError("snapshot shape mismatch")
            fh.write(S.tobytes(order="C"))


def read_snapshots(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != SNAPSHOT_MAGIC:
        raise ValueError("not a snapshot file")
    n, d, f = struct.unpack("<III", raw[4:16])
    block = n * d * f * 8
    body = raw[16:]
    if block == 0 or len(body) % block:
        raise ValueError("truncated snapshot file")
    return np.frombuffer(body, dtype="<f8").reshape(-1, n * d, f).copy()

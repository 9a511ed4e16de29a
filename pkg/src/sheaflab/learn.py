"""Learned sheaves and the neural sheaf diffusion (NSD) model.

The model is ``encoder -> T diffusion layers -> linear readout``. Each layer
rebuilds a sheaf from the current features with the learner
``Phi(x_v, x_u) = tanh(V [x_v || x_u])`` (or uses one sheaf learned from the
encoded input), normalizes its Laplacian and applies

    X <- (1 + eps) X - dt * sigma(Delta (I kron W1) X W2).

Gradients come from :mod:`sheaflab.autodiff`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .graph import Graph, LabeledDataset
from .sheaf import Family, RestrictionMap, Sheaf

SHEAF_GROUP = "sheaf"
REGULAR_GROUP = "regular"


class TrainingDivergedError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


# --------------------------------------------------------------------------
# sheaf learner


@dataclass
class SheafLearnerParams:
    """Parameters of ``Phi``: a (q, 2 d f) matrix V plus the family layout."""

    V: np.ndarray
    family: str = "diagonal"
    d: int = 1
    householder_k: int | None = None
    symmetric: bool = False
    hybrid: bool = False

    def __post_init__(self):
        self.family = Family(self.family).value
        self.V = np.asarray(self.V, dtype=np.float64)
        q = learner_output_dim(self.family, self.d, self.householder_k, self.hybrid)
        if self.V.ndim != 2 or self.V.shape[0] != q:
            raise ValueError(f"V must have {q} rows for family {self.family} with d={self.d}")


def learned_dim(d: int, hybrid: bool) -> int:
    if hybrid and d < 3:
        raise ValueError("hybrid maps need d >= 3")
    return d - 2 if hybrid else d


def learner_output_dim(family: str, d: int, householder_k: int | None = None,
                       hybrid: bool = False) -> int:
    dl = learned_dim(d, hybrid)
    family = Family(family)
    if family in (Family.DIAGONAL, Family.SCALAR):
        return dl
    if family is Family.GENERAL:
        return dl * dl
    k = dl if householder_k is None else householder_k
    if not 1 <= k <= dl:
        raise ValueError("need 1 <= householder_k <= d")
    return k * dl


def constrain_symmetric(p: SheafLearnerParams) -> SheafLearnerParams:
    """Learner variant fed ``[s || s]`` with ``s = (x_v + x_u) / 2`` at both ends."""
    return replace(p, symmetric=True)


def _maps_from_outputs(out: ad.Tensor, family: str, d: int, householder_k, hybrid: bool,
                       n_lo: int) -> ad.Tensor:
    """Turn Phi outputs (rows = incidences) into (rows, d, d) maps.

    Rows ``[:n_lo]`` are low-endpoint maps, the rest high-endpoint maps; the
    split only matters for the fixed hybrid block.
    """
    rows = out.shape[0]
    dl = learned_dim(d, hybrid)
    family = Family(family)
    act = ad.tanh(out)
    if family in (Family.DIAGONAL, Family.SCALAR):
        F = ad.reshape(act, (rows, dl, 1)) * np.eye(dl)[None]
    elif family is Family.GENERAL:
        F = ad.reshape(act, (rows, dl, dl))
    else:
        k = dl if householder_k is None else householder_k
        vs = ad.reshape(act, (rows, k, dl)) + np.eye(dl)[0]
        F = None
        for j in range(k):
            v = vs[:, j, :]
            nrm = ad.tsum(v * v, axis=-1, keepdims=True)
            outer = ad.reshape(v, (rows, dl, 1)) * ad.reshape(v, (rows, 1, dl))
            H = np.eye(dl)[None] - 2.0 * outer / ad.reshape(nrm, (rows, 1, 1))
            F = H if F is None else F @ H
    if not hybrid:
        return F
    full = ad.embed(F, (rows, d, d), (slice(None), slice(0, dl), slice(0, dl)))
    fixed = np.zeros((rows, d, d))
    fixed[:, dl, dl] = 1.0
    fixed[:, dl + 1, dl + 1] = 1.0
    fixed[n_lo:, dl + 1, dl + 1] = -1.0
    return full + fixed


def diagonal_fast_path(family: str, hybrid: bool) -> bool:
    """Diagonal maps are kept as (m, d) vectors unless the hybrid block is used."""
    return Family(family) in (Family.DIAGONAL, Family.SCALAR) and not hybrid


def learner_maps(V: ad.Tensor, H: ad.Tensor, edges: np.ndarray, family: str, d: int,
                 householder_k=None, symmetric: bool = False, hybrid: bool = False,
                 as_vectors: bool = False):
    """Differentiable restriction maps for every edge incidence.

    ``H`` has shape (n, d f). Returns ``(F_lo, F_hi)`` of shape (m, d, d), or
    (m, d) diagonals when ``as_vectors`` is set for a diagonal family.

    ``V [x_v || x_u]`` splits as ``V_l x_v + V_r x_u``, so both halves are
    applied once per node and then gathered per edge.
    """
    m = edges.shape[0]
    u, v = edges[:, 0], edges[:, 1]
    df = H.shape[1]
    Vl, Vr = V[:, :df], V[:, df:]
    if symmetric:
        A = H @ (Vl + Vr).T
        half = (ad.take(A, u) + ad.take(A, v)) * 0.5
        out = ad.concat([half, half], axis=0)
    else:
        A = H @ Vl.T
        B = H @ Vr.T
        out = ad.concat([ad.take(A, u) + ad.take(B, v), ad.take(A, v) + ad.take(B, u)], axis=0)
    if as_vectors:
        if not diagonal_fast_path(family, hybrid):
            raise ValueError("vector maps exist only for non-hybrid diagonal families")
        act = ad.tanh(out)
        return act[:m], act[m:]
    F = _maps_from_outputs(out, family, d, householder_k, hybrid, m)
    return F[:m], F[m:]


def phi_restriction(p: SheafLearnerParams, xv, xu, high_end: bool = False) -> RestrictionMap:
    """``Phi(x_v, x_u)`` for one incidence; inputs are (d, f) stalk blocks."""
    xv = np.asarray(xv, dtype=np.float64).reshape(1, -1)
    xu = np.asarray(xu, dtype=np.float64).reshape(1, -1)
    if p.symmetric:
        s = 0.5 * (xv + xu)
        z = np.hstack([s, s])
    else:
        z = np.hstack([xv, xu])
    out = ad.const(z @ p.V.T)
    F = _maps_from_outputs(out, p.family, p.d, p.householder_k, p.hybrid, 0 if high_end else 1)
    fam = Family.ORTHOGONAL if p.family == "orthogonal" else (
        Family.DIAGONAL if p.family in ("diagonal", "scalar") and not p.hybrid else Family.GENERAL)
    return RestrictionMap(F.value[0], fam)


def _sheaf_family(family: str, hybrid: bool, d: int) -> Family:
    family = Family(family)
    if family is Family.ORTHOGONAL:
        return Family.ORTHOGONAL
    if family in (Family.DIAGONAL, Family.SCALAR):
        if d == 1:
            return Family.SCALAR
        return Family.DIAGONAL
    return Family.GENERAL


def build_learned_sheaf(p: SheafLearnerParams, g: Graph, X: np.ndarray) -> Sheaf:
    """Sheaf with one learned map per incidence from features X (n d x f or n x d f)."""
    H = ad.const(np.asarray(X, dtype=np.float64).reshape(g.n, -1))
    lo, hi = learner_maps(ad.const(p.V), H, g.edge_array.reshape(-1, 2), p.family, p.d,
                          p.householder_k, p.symmetric, p.hybrid)
    return Sheaf(g, p.d, lo.value, hi.value, _sheaf_family(p.family, p.hybrid, p.d))


# --------------------------------------------------------------------------
# differentiable Laplacian


def laplacian_pattern(edges: np.ndarray, n: int, d: int, diagonal: bool) -> ad.SparsePattern:
    """Sparsity of the sheaf Laplacian on ``n`` stalks of dimension ``d``.

    Value order: upper edge blocks, lower edge blocks, then node blocks.
    With ``diagonal`` only the diagonals of the blocks are stored.
    """
    u, v = edges[:, 0], edges[:, 1]
    if diagonal:
        k = np.arange(d)
        r_up = (u[:, None] * d + k).ravel()
        c_up = (v[:, None] * d + k).ravel()
        r_dg = np.arange(n * d)
        c_dg = r_dg
    else:
        i, j = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        r_up = (u[:, None, None] * d + i).ravel()
        c_up = (v[:, None, None] * d + j).ravel()
        r_dg = (np.arange(n)[:, None, None] * d + i).ravel()
        c_dg = (np.arange(n)[:, None, None] * d + j).ravel()
    rows = np.concatenate([r_up, c_up, r_dg])
    cols = np.concatenate([c_up, r_up, c_dg])
    return ad.SparsePattern(rows, cols, n * d)


def laplacian_operator(F_lo: ad.Tensor, F_hi: ad.Tensor, edges: np.ndarray, n: int,
                       norm: str = "augsym", clamp: float = 1e-8,
                       pattern: ad.SparsePattern | None = None):
    """Return a function applying the normalized sheaf Laplacian to (n, d, f) tensors.

    Maps of shape (m, d, d) are general; maps of shape (m, d) are diagonals.
    The normalized entries are assembled once (differentiably) into a fixed
    sparsity pattern, so each application is one sparse product costing
    O(m d f) for diagonal maps and O(m d^2 f) otherwise.
    """
    u, v = edges[:, 0], edges[:, 1]
    diagonal = F_lo.ndim == 2
    d = F_lo.shape[-1]
    if pattern is None:
        pattern = laplacian_pattern(edges, n, d, diagonal)
    Mu = Mv = None  # take() builds its backward matrices on demand
    if diagonal:
        D = ad.scatter_add(F_lo * F_lo, u, n, Mu) + ad.scatter_add(F_hi * F_hi, v, n, Mv)
        if norm == "none":
            S = ad.const(np.ones((n, d)))
        else:
            S = ad.inv_sqrt(D + 1.0 if norm == "augsym" else D, clamp)
        up = -(ad.take(S, u, Mu) * F_lo * F_hi * ad.take(S, v, Mv))
        values = ad.concat([ad.reshape(up, (-1,)), ad.reshape(up, (-1,)),
                            ad.reshape(S * S * D, (-1,))], axis=0)
    else:
        D = ad.scatter_add(F_lo.T @ F_lo, u, n, Mu) + ad.scatter_add(F_hi.T @ F_hi, v, n, Mv)
        if norm == "none":
            S = ad.const(np.broadcast_to(np.eye(d), (n, d, d)).copy())
        else:
            S = ad.sym_inv_sqrt(D + np.eye(d)[None] if norm == "augsym" else D, clamp)
        up = -(ad.take(S, u, Mu) @ (F_lo.T @ F_hi) @ ad.take(S, v, Mv))
        values = ad.concat([ad.reshape(up, (-1,)), ad.reshape(up, (-1,)),
                            ad.reshape(S @ D @ S, (-1,))], axis=0)

    def apply(X: ad.Tensor) -> ad.Tensor:
        shape = X.shape
        out = ad.sparse_matmul(values, pattern, ad.reshape(X, (n * d, -1)))
        return ad.reshape(out, shape)

    return apply


# --------------------------------------------------------------------------
# model


@dataclass
class NSDConfig:
    input_dim: int
    n_classes: int
    d: int = 1
    hidden: int = 8
    layers: int = 2
    family: str = "diagonal"
    sigma: str = "elu"
    encoder: str = "affine"
    sheaf_mode: str = "per_layer"
    symmetric: bool = False
    hybrid: bool = False
    householder_k: int | None = None
    learn_w1: bool = True
    learn_w2: bool = True
    learn_eps: bool = True
    norm: str = "augsym"
    dt: float = 1.0
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.family = Family(self.family).value
        if self.sheaf_mode not in ("per_layer", "fixed"):
            raise ValueError("sheaf_mode must be 'per_layer' or 'fixed'")
        if self.encoder not in ("affine", "identity"):
            raise ValueError("encoder must be 'affine' or 'identity'")
        if self.encoder == "identity" and self.input_dim != self.d * self.hidden:
            raise ValueError("identity encoder needs input_dim == d * hidden")
        if self.symmetric and self.d != 1:
            raise ValueError("the symmetric learner is defined for d = 1")
        if self.norm not in ("augsym", "sym", "none"):
            raise ValueError("norm must be augsym, sym or none")
        if self.layers < 0 or self.d < 1 or self.hidden < 1:
            raise ValueError("layers >= 0, d >= 1 and hidden >= 1 required")
        learner_output_dim(self.family, self.d, self.householder_k, self.hybrid)


def _glorot(rng, shape):
    lim = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-lim, lim, shape)


class NSDModel:
    """Parameters and forward pass of the NSD model.

    ``params`` maps names to arrays. Names starting with ``sheaf`` belong to
    the sheaf-learner group, everything else to the regular group.
    """

    def __init__(self, config: NSDConfig, params: dict | None = None):
        self.config = config
        self.params = self._init_params() if params is None else {
            k: np.array(v, dtype=np.float64) for k, v in params.items()}

    # -- parameters ----------------------------------------------------

    def _init_params(self) -> dict:
        c = self.config
        rng = np.random.default_rng(c.seed)
        df = c.d * c.hidden
        p = {}
        if c.encoder == "affine":
            p["enc.W"] = _glorot(rng, (c.input_dim, df))
            p["enc.b"] = np.zeros(df)
        q = learner_output_dim(c.family, c.d, c.householder_k, c.hybrid)
        n_learners = 1 if c.sheaf_mode == "fixed" else c.layers
        for i in range(n_learners):
            p[f"sheaf{i}.V"] = c.init_scale * rng.standard_normal((q, 2 * df)) / math.sqrt(2 * df)
        for i in range(c.layers):
            if c.learn_w1:
                p[f"layer{i}.W1"] = np.eye(c.d)
            if c.learn_w2:
                p[f"layer{i}.W2"] = np.eye(c.hidden)
            if c.learn_eps:
                p[f"layer{i}.eps"] = np.zeros(c.d)
        p["out.W"] = _glorot(rng, (df, c.n_classes))
        p["out.b"] = np.zeros(c.n_classes)
        return p

    def param_group(self, name: str) -> str:
        return SHEAF_GROUP if name.startswith("sheaf") else REGULAR_GROUP

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def learner(self, layer: int = 0) -> SheafLearnerParams:
        c = self.config
        key = "sheaf0.V" if c.sheaf_mode == "fixed" else f"sheaf{layer}.V"
        return SheafLearnerParams(self.params[key], c.family, c.d, c.householder_k, c.symmetric,
                                  c.hybrid)

    def copy(self) -> "NSDModel":
        return NSDModel(self.config, {k: v.copy() for k, v in self.params.items()})

    # -- forward -------------------------------------------------------

    def _forward(self, data: LabeledDataset, P: dict, keep_sheaves: bool = False):
        c = self.config
        g = data.graph
        n = g.n
        edges = g.edge_array.reshape(-1, 2)
        X0 = np.asarray(data.features, dtype=np.float64)
        if X0.shape != (n, c.input_dim):
            raise ValueError(f"features have shape {X0.shape}, model expects ({n}, {c.input_dim})")
        if c.encoder == "affine":
            H = ad.const(X0) @ P["enc.W"] + P["enc.b"]
        else:
            H = ad.const(X0)
        Hb = ad.reshape(H, (n, c.d, c.hidden))
        sheaves = []
        op = None
        vec = diagonal_fast_path(c.family, c.hybrid)
        pattern = laplacian_pattern(edges, n, c.d, vec) if g.m and c.layers else None
        for i in range(c.layers):
            if op is None or c.sheaf_mode == "per_layer":
                V = P["sheaf0.V"] if c.sheaf_mode == "fixed" else P[f"sheaf{i}.V"]
                if g.m:
                    F_lo, F_hi = learner_maps(V, ad.reshape(Hb, (n, c.d * c.hidden)), edges,
                                              c.family, c.d, c.householder_k, c.symmetric,
                                              c.hybrid, as_vectors=vec)
                    op = laplacian_operator(F_lo, F_hi, edges, n, c.norm, pattern=pattern)
                    if keep_sheaves:
                        lo, hi = F_lo.value, F_hi.value
                        if vec:
                            lo = lo[:, :, None] * np.eye(c.d)
                            hi = hi[:, :, None] * np.eye(c.d)
                        sheaves.append((lo, hi))
                else:
                    op = lambda X: X * 0.0  # noqa: E731
            Z = Hb
            if c.learn_w1:
                Z = P[f"layer{i}.W1"] @ Z
            if c.learn_w2:
                Z = Z @ P[f"layer{i}.W2"]
            upd = ad.activation(c.sigma, op(Z))
            if c.dt != 1.0:
                upd = upd * c.dt
            if c.learn_eps:
                Hb = Hb * (1.0 + ad.reshape(P[f"layer{i}.eps"], (c.d, 1))) - upd
            else:
                Hb = Hb - upd
        logits = ad.reshape(Hb, (n, c.d * c.hidden)) @ P["out.W"] + P["out.b"]
        return logits, Hb, sheaves

    def forward(self, data: LabeledDataset) -> np.ndarray:
        """Logits, shape (n, C)."""
        P = {k: ad.const(v) for k, v in self.params.items()}
        return self._forward(data, P)[0].value

    def final_features(self, data: LabeledDataset) -> np.ndarray:
        P = {k: ad.const(v) for k, v in self.params.items()}
        return self._forward(data, P)[1].value

    def learned_sheaves(self, data: LabeledDataset) -> list[Sheaf]:
        """Sheaves used by each layer (one entry for a fixed sheaf)."""
        P = {k: ad.const(v) for k, v in self.params.items()}
        _, _, sheaves = self._forward(data, P, keep_sheaves=True)
        fam = _sheaf_family(self.config.family, self.config.hybrid, self.config.d)
        return [Sheaf(data.graph, self.config.d, lo, hi, fam) for lo, hi in sheaves]

    def loss(self, data: LabeledDataset, idx=None) -> float:
        idx = data.train if idx is None else np.asarray(idx)
        logits = ad.const(self.forward(data)[idx])
        return float(ad.cross_entropy(logits, data.labels[idx]).value)

    def loss_and_grad(self, data: LabeledDataset, idx=None):
        """Cross-entropy over ``idx`` (default train split) and its gradient."""
        idx = data.train if idx is None else np.asarray(idx)
        P = {k: ad.param(v, k) for k, v in self.params.items()}
        logits, _, _ = self._forward(data, P)
        loss = ad.cross_entropy(logits[idx], data.labels[idx])
        ad.backward(loss)
        grads = {}
        for k, t in P.items():
            g = np.zeros_like(t.value) if t.grad is None else t.grad
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {k}")
            grads[k] = g
        return float(loss.value), grads, logits.value

    def grad(self, data: LabeledDataset, idx=None) -> dict:
        return self.loss_and_grad(data, idx)[1]


def finite_difference_check(model: NSDModel, data: LabeledDataset, h: float = 1e-5,
                            idx=None) -> dict:
    """Max relative error per parameter block between autodiff and central differences."""
    _, grads, _ = model.loss_and_grad(data, idx)
    out = {}
    for name, value in model.params.items():
        fd = np.zeros_like(value)
        flat = value.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            lp = model.loss(data, idx)
            flat[j] = old - h
            lm = model.loss(data, idx)
            flat[j] = old
            fd.reshape(-1)[j] = (lp - lm) / (2 * h)
        denom = max(np.linalg.norm(fd), np.linalg.norm(grads[name]), 1e-8)
        out[name] = float(np.linalg.norm(fd - grads[name]) / denom)
    return out


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    lr: float = 0.01
    epochs: int = 200
    weight_decay: float = 5e-4
    sheaf_weight_decay: float = 5e-4
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class TrainResult:
    model: NSDModel
    history: list
    best_epoch: int
    metrics: dict = field(default_factory=dict)


def accuracy(logits: np.ndarray, labels: np.ndarray, idx) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: dict | None = None):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay or {}
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in params:
            g = grads[k] + self.wd.get(k, 0.0) * params[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train(model: NSDModel, data: LabeledDataset, cfg: TrainConfig) -> TrainResult:
    """Full-batch Adam with early stopping on validation accuracy.

    Returns a copy of the model at the best-validation epoch (the latest one
    on ties). With an empty validation split the final epoch is returned.
    """
    model = model.copy()
    wd = {k: (cfg.sheaf_weight_decay if model.param_group(k) == SHEAF_GROUP else cfg.weight_decay)
          for k in model.params}
    opt = Adam(model.params, cfg.lr, (cfg.beta1, cfg.beta2), cfg.adam_eps, wd)
    history = []
    use_val = data.val.size > 0
    best = (-1.0, 0, None, None)
    for epoch in range(cfg.epochs):
        loss, grads, logits = model.loss_and_grad(data)
        row = {
            "epoch": epoch,
            "loss": loss,
            "train_acc": accuracy(logits, data.labels, data.train),
            "val_acc": accuracy(logits, data.labels, data.val),
            "test_acc": accuracy(logits, data.labels, data.test),
        }
        history.append(row)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", history)
        # ties go to the later epoch: tiny validation splits saturate early
        if not use_val or row["val_acc"] >= best[0]:
            best = (row["val_acc"] if use_val else 0.0, epoch,
                    {k: v.copy() for k, v in model.params.items()}, row)
        if use_val and epoch - best[1] >= cfg.patience:
            break
        if epoch < cfg.epochs - 1:
            opt.step(model.params, grads)
            for k in model.params:
                if k.endswith(".eps"):
                    np.clip(model.params[k], -1.0, 1.0, out=model.params[k])
    _, best_epoch, best_params, best_row = best
    best_model = NSDModel(model.config, best_params)
    return TrainResult(best_model, history, best_epoch, dict(best_row))


# --------------------------------------------------------------------------
# persistence


def save_checkpoint(path, model: NSDModel, epoch: int = 0, metrics: dict | None = None) -> None:
    obj = {
        "config": asdict(model.config),
        "params": {k: v.tolist() for k, v in model.params.items()},
        "epoch": int(epoch),
        "metrics": metrics or {},
    }
    Path(path).write_text(json.dumps(obj, default=float))


def load_checkpoint(path) -> tuple[NSDModel, dict]:
    obj = json.loads(Path(path).read_text())
    model = NSDModel(NSDConfig(**obj["config"]), {k: np.asarray(v) for k, v in obj["params"].items()})
    return model, obj


def write_history_csv(path, history: list) -> None:
    cols = ["epoch", "loss", "train_acc", "val_acc", "test_acc"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])

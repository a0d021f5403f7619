"""Learners: logistic regression, a small feed-forward network, GroupDRO, AdamW.

Models live in two forms: small typed containers (LogisticModel, MlpModel) for the
single-example operations, and flat parameter vectors for the training loops. The
*Spec classes bridge the two: they know how to initialize, batch-evaluate, and
batch-differentiate a model given its flat parameters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .randmat import SeededRng

_PARAMS_MAGIC = int.from_bytes(b"PFPM", "little")
_PARAMS_VERSION = 1

# ---------------------------------------------------------------- logistic


@dataclass
class LogisticModel:
    weights: np.ndarray  # (d,)
    bias: float


def _sigmoid(z):
    # numerically stable both tails
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_predict(model: LogisticModel, x: np.ndarray) -> float:
    """P(y=1|x) = sigmoid(w.x + b)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, weights {model.weights.shape}")
    z = float(model.weights @ x + model.bias)
    return float(_sigmoid(np.array([z]))[0])


def logistic_per_sample_grad(model: LogisticModel, x: np.ndarray, y: int) -> np.ndarray:
    """Gradient of the log-loss at one example: (p - y) * [x; 1], length d+1."""
    p = logistic_predict(model, x)
    g = np.empty(model.weights.size + 1)
    g[:-1] = (p - y) * np.asarray(x, dtype=np.float64)
    g[-1] = p - y
    return g


# ---------------------------------------------------------------- MLP


@dataclass
class MlpModel:
    layer_dims: tuple  # (d_in, h1, ..., d_out); hidden ReLU, logistic output
    weights: list  # [(fan_in, fan_out) arrays]
    biases: list  # [(fan_out,) arrays]


def mlp_init(layer_dims: Sequence[int], rng: SeededRng) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, seeded."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"bad layer dims {dims}")
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.gen.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(rng.gen.uniform(-bound, bound, size=fan_out))
    return MlpModel(dims, ws, bs)


def mlp_n_params(layer_dims: Sequence[int]) -> int:
    dims = tuple(layer_dims)
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def mlp_pack(model: MlpModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def mlp_unpack(layer_dims: Sequence[int], flat: np.ndarray) -> MlpModel:
    dims = tuple(int(d) for d in layer_dims)
    if flat.size != mlp_n_params(dims):
        raise ValueError(f"flat vector has {flat.size} entries, architecture needs {mlp_n_params(dims)}")
    ws, bs, ofs = [], [], 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        ws.append(flat[ofs : ofs + fan_in * fan_out].reshape(fan_in, fan_out))
        ofs += fan_in * fan_out
        bs.append(flat[ofs : ofs + fan_out])
        ofs += fan_out
    return MlpModel(dims, ws, bs)


def _mlp_forward_full(model: MlpModel, X: np.ndarray):
    """Forward pass on a batch, keeping pre-activations for backprop.

    Returns (p, zs, acts): p (n,) output probabilities, zs pre-activations per
    layer, acts the inputs to each layer (acts[0] = X).
    """
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != model.layer_dims[0]:
        raise ValueError(f"input shape {a.shape} does not match input dim {model.layer_dims[0]}")
    zs, acts = [], [a]
    n_layers = len(model.weights)
    for li, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        zs.append(z)
        a = np.maximum(z, 0.0) if li < n_layers - 1 else z  # hidden ReLU
        acts.append(a)
    if zs[-1].shape[1] != 1:
        raise ValueError("probability forward pass needs a width-1 output layer")
    return _sigmoid(zs[-1].ravel()), zs, acts


def mlp_forward(model: MlpModel, x: np.ndarray) -> float:
    """Scalar probability for one input vector."""
    p, _, _ = _mlp_forward_full(model, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return float(p[0])


def mlp_forward_batch(model: MlpModel, X: np.ndarray) -> np.ndarray:
    p, _, _ = _mlp_forward_full(model, X)
    return p


def mlp_embed(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Penultimate-layer activations (the representation the scalar head reads)."""
    a = np.asarray(X, dtype=np.float64)
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
    return a


def _output_delta(p, y, loss):
    # dL/dz at the output pre-activation, for L averaged per sample
    if loss == "mse":
        return 2.0 * (p - y) * p * (1.0 - p)
    if loss == "logloss":
        return p - y
    raise ValueError(f"unknown loss {loss!r}")


def mlp_grads_batch(model: MlpModel, X: np.ndarray, y: np.ndarray, loss: str = "mse") -> np.ndarray:
    """Per-sample gradients, one flat row per example: shape (n, n_params)."""
    y = np.asarray(y, dtype=np.float64).ravel()
    p, zs, acts = _mlp_forward_full(model, X)
    n = p.size
    delta = _output_delta(p, y, loss).reshape(n, 1)  # at output layer
    parts = [None] * (2 * len(model.weights))
    for li in range(len(model.weights) - 1, -1, -1):
        a_in = acts[li]  # (n, fan_in)
        gw = a_in[:, :, None] * delta[:, None, :]  # (n, fan_in, fan_out)
        parts[2 * li] = gw.reshape(n, -1)
        parts[2 * li + 1] = delta
        if li > 0:
            delta = (delta @ model.weights[li].T) * (zs[li - 1] > 0.0)
    return np.concatenate(parts, axis=1)


def mlp_per_sample_grad(model: MlpModel, x: np.ndarray, y, loss: str = "mse") -> np.ndarray:
    """Backpropagated gradient of the chosen loss at one example, flat layout."""
    return mlp_grads_batch(model, np.asarray(x, dtype=np.float64).reshape(1, -1), np.array([y]), loss)[0]


def per_sample_loss_values(p: np.ndarray, y: np.ndarray, loss: str) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if loss == "mse":
        return (p - y) ** 2
    if loss == "logloss":
        pc = np.clip(p, 1e-12, 1.0 - 1e-12)
        return -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    raise ValueError(f"unknown loss {loss!r}")


# ---------------------------------------------------------------- AdamW


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


def adamw_init(n_params: int, weight_decay: float = 0.01) -> AdamWState:
    return AdamWState(m=np.zeros(n_params), v=np.zeros(n_params), weight_decay=weight_decay)


def adamw_step(params: np.ndarray, grads: np.ndarray, state: AdamWState, lr: float) -> np.ndarray:
    """One AdamW update (decoupled weight decay). Mutates state, returns new params."""
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("parameter/gradient/state dimension mismatch")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1 ** state.t)
    vhat = state.v / (1.0 - state.beta2 ** state.t)
    return params - lr * (mhat / (np.sqrt(vhat) + state.eps) + state.weight_decay * params)


# ---------------------------------------------------------------- GroupDRO


@dataclass
class GroupDroState:
    q: np.ndarray  # probability vector over all registered groups
    eta: float = 0.1


def groupdro_init(n_groups: int, eta: float = 0.1) -> GroupDroState:
    if n_groups < 1:
        raise ValueError("need at least one group")
    if eta <= 0:
        raise ValueError("eta must be positive")
    return GroupDroState(q=np.full(n_groups, 1.0 / n_groups), eta=eta)


def groupdro_update(state: GroupDroState, group_losses: dict) -> tuple[GroupDroState, float]:
    """Exponentiated-gradient reweighting toward the worst group.

    q'_g proportional to q_g * exp(eta * loss_g) for groups present in the batch
    (absent groups keep their multiplier at 1), renormalized. Returns the new
    state and the robust loss sum_g q'_g * loss_g over present groups, which is
    what gets differentiated (q' held constant).
    """
    if not group_losses:
        raise ValueError("no group present in batch")
    mult = np.ones_like(state.q)
    for g, loss in group_losses.items():
        gi = int(g)
        if gi < 0 or gi >= state.q.size:
            raise ValueError(f"group id {g} outside registry of size {state.q.size}")
        if not np.isfinite(loss):
            raise ValueError(f"non-finite loss for group {g}")
        mult[gi] = np.exp(state.eta * float(loss))
    q_new = state.q * mult
    q_new /= q_new.sum()
    robust = float(sum(q_new[int(g)] * float(l) for g, l in group_losses.items()))
    return GroupDroState(q=q_new, eta=state.eta), robust


# ---------------------------------------------------------------- training specs


@dataclass
class LogisticSpec:
    """Flat-parameter view of logistic regression: params = [w (d), b]."""

    dim: int
    loss: str = "logloss"

    @property
    def n_params(self) -> int:
        return self.dim + 1

    def init_params(self, rng: SeededRng) -> np.ndarray:
        # convex objective: start at zero like every standard solver (the rng
        # argument is kept for interface uniformity with MlpSpec)
        del rng
        return np.zeros(self.n_params)

    def predict_proba(self, params, X):
        X = np.asarray(X, dtype=np.float64)
        return _sigmoid(X @ params[:-1] + params[-1])

    def per_sample_grads(self, params, X, y):
        p = self.predict_proba(params, X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if self.loss == "logloss":
            delta = p - y
        elif self.loss == "mse":
            delta = 2.0 * (p - y) * p * (1.0 - p)
        else:
            raise ValueError(f"unknown loss {self.loss!r}")
        G = np.empty((X.shape[0], self.n_params))
        G[:, :-1] = X * delta[:, None]
        G[:, -1] = delta
        return G

    def per_sample_loss(self, params, X, y):
        return per_sample_loss_values(self.predict_proba(params, X), y, self.loss)

    def mean_loss(self, params, X, y) -> float:
        return float(np.mean(self.per_sample_loss(params, X, y)))


@dataclass
class MlpSpec:
    """Flat-parameter view of the feed-forward network (hidden ReLU, logistic output)."""

    layer_dims: tuple
    loss: str = "logloss"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if self.layer_dims[-1] != 1:
            raise ValueError("training spec expects a scalar output head")

    @property
    def n_params(self) -> int:
        return mlp_n_params(self.layer_dims)

    def init_params(self, rng: SeededRng) -> np.ndarray:
        return mlp_pack(mlp_init(self.layer_dims, rng))

    def predict_proba(self, params, X):
        return mlp_forward_batch(mlp_unpack(self.layer_dims, params), X)

    def per_sample_grads(self, params, X, y):
        return mlp_grads_batch(mlp_unpack(self.layer_dims, params), X, y, self.loss)

    def per_sample_loss(self, params, X, y):
        return per_sample_loss_values(self.predict_proba(params, X), y, self.loss)

    def mean_loss(self, params, X, y) -> float:
        return float(np.mean(self.per_sample_loss(params, X, y)))


# ---------------------------------------------------------------- serialization


def save_params(path, params: np.ndarray) -> None:
    """Flat float64 little-endian dump with a 16-byte header (magic, version, count)."""
    flat = np.ascontiguousarray(np.asarray(params, dtype=np.float64).ravel())
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIQ", _PARAMS_MAGIC, _PARAMS_VERSION, flat.size))
        fh.write(flat.astype("<f8").tobytes())


def load_params(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"{path}: truncated header")
        magic, version, count = struct.unpack("<IIQ", header)
        if magic != _PARAMS_MAGIC:
            raise ValueError(f"{path}: bad magic {magic:#x}")
        if version != _PARAMS_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read()
    if len(payload) != 8 * count:
        raise ValueError(f"{path}: expected {8 * count} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64)

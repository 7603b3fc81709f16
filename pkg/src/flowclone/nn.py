"""Differentiable building blocks with hand-written backward passes.

Everything runs in float64.  Forward functions return ``(output, cache)``;
the matching backward takes the cache and an upstream gradient, adds
parameter gradients into the ``ParamStore`` and returns the input gradient.
Weights follow the ``(out, in)`` layout and act on row vectors:
``y = x @ W.T + b``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import EmptyGraph, ShapeMismatch


def dense(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``x @ W.T`` with a per-row accumulation order that ignores the row count.

    BLAS picks different kernels for one row and for many, so the same row can
    round differently depending on what else is in the batch.  einsum's plain
    loop keeps forward outputs identical however graphs are grouped.
    """
    return np.einsum("...k,dk->...d", x, W)


class ParamStore:
    """Named parameters with same-shape gradient slots and Adam moments."""

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params.values())

    def state_dict(self) -> dict:
        return {
            "step": self.step,
            "params": {n: self.params[n].tolist() for n in self.names()},
            "adam_m": {n: self.m[n].tolist() for n in self.names()},
            "adam_v": {n: self.v[n].tolist() for n in self.names()},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "ParamStore":
        store = cls()
        for name, value in state["params"].items():
            store.add(name, np.asarray(value, dtype=np.float64))
            if "adam_m" in state:
                store.m[name][...] = state["adam_m"][name]
                store.v[name][...] = state["adam_v"][name]
        store.step = int(state.get("step", 0))
        return store

    def copy(self) -> "ParamStore":
        return ParamStore.from_state_dict(self.state_dict())


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


def activate(act: Activation, x: np.ndarray) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(x, 0.0)
    if act is Activation.TANH:
        return np.tanh(x)
    if act is Activation.SIGMOID:
        return expit(x)
    return x


def activation_grad(act: Activation, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Backprop through ``act`` given its *output* ``y``."""
    if act is Activation.RELU:
        return dy * (y > 0)
    if act is Activation.TANH:
        return dy * (1.0 - y * y)
    if act is Activation.SIGMOID:
        return dy * y * (1.0 - y)
    return dy


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


# -- dense / MLP -------------------------------------------------------------

@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    out_dim: int
    hidden: tuple[int, ...] = ()
    activation: Activation = Activation.RELU
    out_activation: Activation = Activation.IDENTITY

    def __post_init__(self) -> None:
        if min((self.in_dim, self.out_dim) + tuple(self.hidden)) < 1:
            raise ValueError("MLP dimensions must be >= 1")

    @property
    def dims(self) -> list[int]:
        return [self.in_dim, *self.hidden, self.out_dim]


def mlp_init(store: ParamStore, prefix: str, spec: MlpSpec, rng: np.random.Generator) -> None:
    dims = spec.dims
    for k in range(len(dims) - 1):
        store.add(f"{prefix}.W{k}", glorot(rng, dims[k + 1], dims[k]))
        store.add(f"{prefix}.b{k}", np.zeros(dims[k + 1]))


def mlp_forward(store: ParamStore, prefix: str, spec: MlpSpec, x: np.ndarray):
    if x.shape[-1] != spec.in_dim:
        raise ShapeMismatch(f"{prefix}: expected input dim {spec.in_dim}, got {x.shape[-1]}")
    n_layers = len(spec.dims) - 1
    inputs, outputs = [], []
    h = x
    for k in range(n_layers):
        act = spec.out_activation if k == n_layers - 1 else spec.activation
        inputs.append(h)
        h = activate(act, dense(h, store[f"{prefix}.W{k}"]) + store[f"{prefix}.b{k}"])
        outputs.append(h)
    return h, (inputs, outputs)


def mlp_backward(store: ParamStore, prefix: str, spec: MlpSpec, cache, dy: np.ndarray) -> np.ndarray:
    inputs, outputs = cache
    n_layers = len(inputs)
    for k in reversed(range(n_layers)):
        act = spec.out_activation if k == n_layers - 1 else spec.activation
        dpre = activation_grad(act, outputs[k], dy)
        x = inputs[k]
        W = store[f"{prefix}.W{k}"]
        store.grads[f"{prefix}.W{k}"] += dpre.reshape(-1, dpre.shape[-1]).T @ x.reshape(-1, x.shape[-1])
        store.grads[f"{prefix}.b{k}"] += dpre.reshape(-1, dpre.shape[-1]).sum(axis=0)
        dy = dpre @ W
    return dy


# -- GRU ---------------------------------------------------------------------

@dataclass(frozen=True)
class GruSpec:
    in_dim: int
    state_dim: int

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.state_dim < 1:
            raise ValueError("GRU dimensions must be >= 1")


def gru_init(store: ParamStore, prefix: str, spec: GruSpec, rng: np.random.Generator) -> None:
    d = spec.state_dim
    # gate blocks stacked as [update z; reset r; candidate]
    store.add(f"{prefix}.W", np.vstack([glorot(rng, d, spec.in_dim) for _ in range(3)]))
    store.add(f"{prefix}.U", np.vstack([glorot(rng, d, d) for _ in range(3)]))
    store.add(f"{prefix}.b", np.zeros(3 * d))


def gru_forward(store: ParamStore, prefix: str, h: np.ndarray, x: np.ndarray):
    W, U, b = store[f"{prefix}.W"], store[f"{prefix}.U"], store[f"{prefix}.b"]
    d = U.shape[1]
    if h.shape[-1] != d or x.shape[-1] != W.shape[1] or h.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"{prefix}: state {h.shape} / input {x.shape} do not match GRU {W.shape[1]}->{d}")
    xw = dense(x, W) + b
    hu = dense(h, U[: 2 * d])
    z = expit(xw[:, :d] + hu[:, :d])
    r = expit(xw[:, d : 2 * d] + hu[:, d:])
    rh = r * h
    c = np.tanh(xw[:, 2 * d :] + dense(rh, U[2 * d :]))
    h_new = (1.0 - z) * h + z * c
    return h_new, (h, x, z, r, rh, c)


def gru_backward(store: ParamStore, prefix: str, cache, dh_new: np.ndarray):
    """Return ``(dh, dx)``."""
    h, x, z, r, rh, c = cache
    W, U = store[f"{prefix}.W"], store[f"{prefix}.U"]
    d = U.shape[1]
    dz = dh_new * (c - h)
    dc = dh_new * z
    dh = dh_new * (1.0 - z)
    dac = dc * (1.0 - c * c)
    drh = dac @ U[2 * d :]
    dr = drh * h
    dh += drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    da = np.hstack([daz, dar, dac])
    store.grads[f"{prefix}.W"] += da.T @ x
    store.grads[f"{prefix}.b"] += da.sum(axis=0)
    gU = store.grads[f"{prefix}.U"]
    gU[: 2 * d] += da[:, : 2 * d].T @ h
    gU[2 * d :] += dac.T @ rh
    dx = da @ W
    dh += da[:, : 2 * d] @ U[: 2 * d]
    return dh, dx


# -- softmax / readout / loss ------------------------------------------------

def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def readout_init(store: ParamStore, prefix: str, d: int, rng: np.random.Generator) -> None:
    for part in ("gate", "proj", "out"):
        store.add(f"{prefix}.{part}.W", glorot(rng, d, d))
        store.add(f"{prefix}.{part}.b", np.zeros(d))


def segment_matrix(segment: np.ndarray, num_segments: int) -> sparse.csr_matrix:
    """Sparse ``num_segments x len(segment)`` 0/1 matrix; rows sum their segment.

    Rows hold column indices in ascending order, so each segment is summed
    in ascending node order.
    """
    n = len(segment)
    return sparse.csr_matrix(
        (np.ones(n), (np.asarray(segment), np.arange(n))), shape=(num_segments, n)
    )


def gated_readout_forward(store: ParamStore, prefix: str, H: np.ndarray, seg: sparse.csr_matrix):
    """Gated sum readout: ``out( sum_i sigmoid(gate(h_i)) * proj(h_i) )`` per segment."""
    g = expit(dense(H, store[f"{prefix}.gate.W"]) + store[f"{prefix}.gate.b"])
    p = dense(H, store[f"{prefix}.proj.W"]) + store[f"{prefix}.proj.b"]
    pooled = np.asarray(seg @ (g * p))
    out = dense(pooled, store[f"{prefix}.out.W"]) + store[f"{prefix}.out.b"]
    return out, (H, seg, g, p, pooled)


def gated_readout_backward(store: ParamStore, prefix: str, cache, dout: np.ndarray) -> np.ndarray:
    H, seg, g, p, pooled = cache
    grads = store.grads
    grads[f"{prefix}.out.W"] += dout.T @ pooled
    grads[f"{prefix}.out.b"] += dout.sum(axis=0)
    dq = np.asarray(seg.T @ (dout @ store[f"{prefix}.out.W"]))
    dgpre = dq * p * g * (1.0 - g)
    dp = dq * g
    grads[f"{prefix}.gate.W"] += dgpre.T @ H
    grads[f"{prefix}.gate.b"] += dgpre.sum(axis=0)
    grads[f"{prefix}.proj.W"] += dp.T @ H
    grads[f"{prefix}.proj.b"] += dp.sum(axis=0)
    return dgpre @ store[f"{prefix}.gate.W"] + dp @ store[f"{prefix}.proj.W"]


def gated_readout(store: ParamStore, prefix: str, H: np.ndarray) -> np.ndarray:
    """Readout of a single graph's node states (rows of ``H``)."""
    if H.shape[0] == 0:
        raise EmptyGraph("readout over a graph with no nodes")
    out, _ = gated_readout_forward(store, prefix, H, segment_matrix(np.zeros(H.shape[0], dtype=int), 1))
    return out[0]


def mse_loss(pred, label):
    """Squared error ``(y - s)^2`` and its derivative ``2 (s - y)``."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(label, dtype=np.float64)
    return diff * diff, 2.0 * diff


# -- optimizer ---------------------------------------------------------------

def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name in store.names():
        g = store.grads[name]
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        store.params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    store.zero_grad()


# -- gradient checking -------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]] | None
    checked: int
    tol: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def grad_check(
    closure: Callable[[], float],
    store: ParamStore,
    eps: float = 1e-4,
    tol: float = 1e-4,
    samples: int = 12,
    names: list[str] | None = None,
    seed: int = 0,
    floor: float = 1e-7,
) -> GradCheckReport:
    """Compare analytic gradients with central differences on sampled entries.

    ``closure`` computes the scalar loss and accumulates analytic gradients
    into ``store.grads``.  Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.default_rng(seed)
    store.zero_grad()
    closure()
    analytic = {n: g.copy() for n, g in store.grads.items()}
    worst, max_err, checked = None, 0.0, 0
    per_name: dict[str, float] = {}
    for name in names or store.names():
        p = store.params[name]
        flat = p.reshape(-1)
        k = min(samples, flat.size)
        picks = rng.choice(flat.size, size=k, replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = closure()
            flat[idx] = orig - eps
            lm = closure()
            flat[idx] = orig
            num = (lp - lm) / (2.0 * eps)
            a = analytic[name].reshape(-1)[idx]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            per_name[name] = max(per_name.get(name, 0.0), err)
            if worst is None or err > max_err:
                max_err = err
                worst = (name, np.unravel_index(idx, p.shape))
            checked += 1
    store.zero_grad()
    return GradCheckReport(max_err, worst, checked, tol, per_name)

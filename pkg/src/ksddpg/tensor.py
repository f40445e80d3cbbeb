"""Minimal dense-network numeric core.

Matrices are plain 2-D ``float64`` numpy arrays; a row vector is ``1 x n``
and a minibatch is ``S x n``. Every forward call returns an explicit cache
that the matching backward call consumes exactly once.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, UsageError, VersionError

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")
CHECKPOINT_MAGIC = b"KSDDPG-CKPT-1\n"


def as_matrix(x) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array; 1-D input becomes a row vector."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got array with shape {a.shape}")
    return a


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so large |x| never overflows exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "sigmoid":
        return sigmoid(pre)
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "identity":
        return pre
    raise ConfigError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


def activation_grad(grad_out: np.ndarray, pre: np.ndarray, out: np.ndarray, activation: str) -> np.ndarray:
    """Gradient w.r.t. the pre-activation given the upstream gradient."""
    if activation == "relu":
        return grad_out * (pre > 0.0)
    if activation == "sigmoid":
        return grad_out * out * (1.0 - out)
    if activation == "tanh":
        return grad_out * (1.0 - out * out)
    if activation == "identity":
        return grad_out
    raise ConfigError(f"unknown activation {activation!r}")


@dataclass
class DenseParams:
    """One affine map ``x @ weight + bias``."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = as_matrix(self.weight)
        self.bias = as_matrix(self.bias)
        if self.bias.shape[0] != 1 or self.weight.shape[1] != self.bias.shape[1]:
            raise DimensionError(
                f"bias {self.bias.shape} does not match weight {self.weight.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def glorot(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseParams":
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, size=(n_in, n_out)), np.zeros((1, n_out)))

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "DenseParams":
        return cls(np.zeros((n_in, n_out)), np.zeros((1, n_out)))


@dataclass
class DenseCache:
    x: np.ndarray
    pre: np.ndarray
    out: np.ndarray
    activation: str
    weight: np.ndarray
    consumed: bool = False


def dense_forward(x, p: DenseParams, activation: str = "identity") -> tuple[np.ndarray, DenseCache]:
    """Return ``activation(x @ W + b)`` and the cache for :func:`dense_backward`."""
    x = as_matrix(x)
    if x.shape[1] != p.weight.shape[0]:
        raise DimensionError(
            f"input {x.shape} cannot multiply weight {p.weight.shape}"
        )
    pre = x @ p.weight + p.bias
    out = activate(pre, activation)
    return out, DenseCache(x, pre, out, activation, p.weight)


def dense_backward(grad_out, cache: DenseCache | None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chain-rule gradients ``(grad_x, grad_w, grad_b)`` for one cached forward call.

    A cache can be consumed once; reusing it raises :class:`UsageError`.
    """
    if not isinstance(cache, DenseCache):
        raise UsageError("dense_backward needs the cache returned by dense_forward")
    if cache.consumed:
        raise UsageError("stale cache: this forward pass was already back-propagated")
    grad_out = as_matrix(grad_out)
    if grad_out.shape != cache.out.shape:
        raise DimensionError(f"grad_out {grad_out.shape} does not match output {cache.out.shape}")
    cache.consumed = True
    g_pre = activation_grad(grad_out, cache.pre, cache.out, cache.activation)
    grad_w = cache.x.T @ g_pre
    grad_b = g_pre.sum(axis=0, keepdims=True)
    grad_x = g_pre @ cache.weight.T
    return grad_x, grad_w, grad_b


class Mlp:
    """A stack of dense layers; parameters are exposed by name for optimizers and checkpoints."""

    def __init__(self, sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator):
        if len(activations) != len(sizes) - 1:
            raise ConfigError("need one activation per layer")
        self.sizes = list(sizes)
        self.activations = list(activations)
        self.layers = [DenseParams.glorot(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def forward(self, x) -> tuple[np.ndarray, list[DenseCache]]:
        caches = []
        h = as_matrix(x)
        for layer, act in zip(self.layers, self.activations):
            h, c = dense_forward(h, layer, act)
            caches.append(c)
        return h, caches

    def backward(self, grad_out, caches: list[DenseCache]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        grads: dict[str, np.ndarray] = {}
        g = grad_out
        for idx in range(len(self.layers) - 1, -1, -1):
            g, gw, gb = dense_backward(g, caches[idx])
            grads[f"l{idx}.W"] = gw
            grads[f"l{idx}.b"] = gb
        return g, grads

    def backward_input(self, grad_out, caches: list[DenseCache]) -> np.ndarray:
        """Gradient w.r.t. the network input only (skips weight gradients)."""
        g = as_matrix(grad_out)
        for idx in range(len(self.layers) - 1, -1, -1):
            c = caches[idx]
            if c.consumed:
                raise UsageError("stale cache: this forward pass was already back-propagated")
            c.consumed = True
            g = activation_grad(g, c.pre, c.out, c.activation) @ c.weight.T
        return g

    def named(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for idx, layer in enumerate(self.layers):
            out[f"{prefix}l{idx}.W"] = layer.weight
            out[f"{prefix}l{idx}.b"] = layer.bias
        return out


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def like(cls, param: np.ndarray, lr: float = 1e-3, **kw) -> "AdamState":
        if lr < 0:
            raise ConfigError("learning rate must be non-negative")
        return cls(np.zeros_like(param), np.zeros_like(param), lr=lr, **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """In-place bias-corrected Adam update of ``params``; returns ``params``."""
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise DimensionError(f"params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient; parameters left untouched")
    state.step_count += 1
    t = state.step_count
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params


class Adam:
    """Adam over a dict of named parameter arrays (updated in place)."""

    def __init__(self, params: Mapping[str, np.ndarray], lr: float, **kw):
        self.params = dict(params)
        self.states = {k: AdamState.like(v, lr=lr, **kw) for k, v in self.params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        # all-or-nothing: check every gradient before touching any parameter
        for name in self.params:
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}; parameters left untouched")
        for name, p in self.params.items():
            adam_step(p, grads[name], self.states[name])

    def named_state(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for k, s in self.states.items():
            out[f"{prefix}{k}.m"] = s.m
            out[f"{prefix}{k}.v"] = s.v
        return out


def soft_update(target: np.ndarray, source: np.ndarray, tau: float) -> np.ndarray:
    """``target <- tau * source + (1 - tau) * target`` in place."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    if target.shape != source.shape:
        raise DimensionError(f"target {target.shape} vs source {source.shape}")
    target *= 1.0 - tau
    target += tau * source
    return target


def soft_update_all(target: Mapping[str, np.ndarray], source: Mapping[str, np.ndarray], tau: float) -> None:
    for name, t in target.items():
        soft_update(t, source[name], tau)


def copy_into(target: Mapping[str, np.ndarray], source: Mapping[str, np.ndarray]) -> None:
    for name, t in target.items():
        t[...] = source[name]


# -- checkpoint files ----------------------------------------------------------

def save_matrices(path, tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named matrices to ``path``.

    Layout: magic line, little-endian u64 header length, JSON header with
    per-tensor ``name/rows/cols/offset``, then raw little-endian float64 data.
    """
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        m = as_matrix(arr)
        entries.append({"name": name, "rows": m.shape[0], "cols": m.shape[1], "offset": offset})
        blob = np.ascontiguousarray(m, dtype="<f8").tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_matrices(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise VersionError(f"{path}: not a KSDDPG-CKPT-1 checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    out = {}
    for e in header["tensors"]:
        n = e["rows"] * e["cols"]
        start = pos + e["offset"]
        out[e["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=start).reshape(
            e["rows"], e["cols"]).astype(np.float64)
    return out, header["meta"]


__all__ = [
    "ACTIVATIONS", "Adam", "AdamState", "DenseCache", "DenseParams", "Mlp",
    "activate", "adam_step", "as_matrix", "copy_into", "dense_backward",
    "dense_forward", "load_matrices", "save_matrices", "sigmoid", "soft_update",
    "soft_update_all",
]

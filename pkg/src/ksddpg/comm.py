"""Shared knowledge container and the gated read/write operations agents use on it.

Each agent owns its own gate weights. One step of the protocol for agent i:

    M  = relu(o W_oM + b_M)                                  (embed)
    z  = sig(M W_Mz + k W_kz + b_z)                          (obtain: keep gate)
    l  = sig(M W_Ml + k W_kl + b_l)                          (obtain: reset gate)
    r~ = tanh(M W_Mk + l * (k W_kk) + b_k)
    r  = z * k + (1 - z) * r~
    q, p, k^ analogous with the update weights
    k' = q * k + (1 - q) * k^                                (written back to the container)

Both gated operations share one kernel (:func:`gated_mix`); they differ only
in which weights they read.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from .errors import DimensionError, UsageError
from .tensor import DenseCache, DenseParams, as_matrix, dense_backward, dense_forward, sigmoid

# (keep gate, reset gate, candidate) parameter names for each operation
OBTAIN_NAMES = (("W_Mz", "W_kz", "b_z"), ("W_Ml", "W_kl", "b_l"), ("W_Mk", "W_kk", "b_k"))
UPDATE_NAMES = (("W_Mq", "W_kq", "b_q"), ("W_Mp", "W_kp", "b_p"), ("W_Mkh", "W_kkh", "b_kh"))


@dataclass
class KnowledgeContainer:
    """The shared vector ``k`` (1 x K); agents read and write it strictly in turn."""

    capacity: int
    k: np.ndarray | None = None

    def __post_init__(self):
        if self.k is None:
            self.k = np.zeros((1, self.capacity))
        self.access_log: list[tuple[str, int]] = []

    def reset(self) -> None:
        self.k = np.zeros((1, self.capacity))
        self.access_log.clear()

    def read(self, agent: int) -> np.ndarray:
        self.access_log.append(("read", agent))
        return self.k.copy()

    def write(self, agent: int, k_new: np.ndarray) -> None:
        k_new = as_matrix(k_new)
        if k_new.shape != (1, self.capacity):
            raise DimensionError(f"container holds 1x{self.capacity}, got {k_new.shape}")
        if not np.all(np.isfinite(k_new)):
            raise ValueError("refusing to store non-finite knowledge")
        self.access_log.append(("write", agent))
        self.k = k_new.copy()


@dataclass
class CommParams:
    """Per-agent embedding and gate weights. M-side matrices are m x K, k-side K x K."""

    embed: DenseParams
    W_Mz: np.ndarray
    W_kz: np.ndarray
    b_z: np.ndarray
    W_Ml: np.ndarray
    W_kl: np.ndarray
    b_l: np.ndarray
    W_Mk: np.ndarray
    W_kk: np.ndarray
    b_k: np.ndarray
    W_Mq: np.ndarray
    W_kq: np.ndarray
    b_q: np.ndarray
    W_Mp: np.ndarray
    W_kp: np.ndarray
    b_p: np.ndarray
    W_Mkh: np.ndarray
    W_kkh: np.ndarray
    b_kh: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.embed.n_in

    @property
    def embed_dim(self) -> int:
        return self.embed.n_out

    @property
    def capacity(self) -> int:
        return self.b_z.shape[1]

    @classmethod
    def init(cls, obs_dim: int, embed_dim: int, capacity: int, rng: np.random.Generator) -> "CommParams":
        def glorot(a, b):
            lim = np.sqrt(6.0 / (a + b))
            return rng.uniform(-lim, lim, size=(a, b))

        kw = {}
        for triple in OBTAIN_NAMES + UPDATE_NAMES:
            wm, wk, b = triple
            kw[wm] = glorot(embed_dim, capacity)
            kw[wk] = glorot(capacity, capacity)
            kw[b] = np.zeros((1, capacity))
        return cls(embed=DenseParams.glorot(obs_dim, embed_dim, rng), **kw)

    @classmethod
    def zeros(cls, obs_dim: int, embed_dim: int, capacity: int) -> "CommParams":
        kw = {}
        for wm, wk, b in OBTAIN_NAMES + UPDATE_NAMES:
            kw[wm] = np.zeros((embed_dim, capacity))
            kw[wk] = np.zeros((capacity, capacity))
            kw[b] = np.zeros((1, capacity))
        return cls(embed=DenseParams.zeros(obs_dim, embed_dim), **kw)

    def named(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {f"{prefix}W_oM": self.embed.weight, f"{prefix}b_M": self.embed.bias}
        for f in fields(self):
            if f.name != "embed":
                out[prefix + f.name] = getattr(self, f.name)
        return out


@dataclass
class GateCache:
    M: np.ndarray
    k: np.ndarray
    keep: np.ndarray      # z or q
    reset: np.ndarray     # l or p
    kc: np.ndarray        # k @ W_kk (before the reset gate)
    cand: np.ndarray      # r~ or k^
    names: tuple
    weights: dict
    consumed: bool = False


def gated_mix(M, k, weights: Mapping[str, np.ndarray], names) -> tuple[np.ndarray, GateCache]:
    """Shared forward kernel of the obtain and update operations."""
    M = as_matrix(M)
    k = as_matrix(k)
    (wmu, wku, bu), (wmr, wkr, br), (wmc, wkc, bc) = names
    if M.shape[1] != weights[wmu].shape[0] or k.shape[1] != weights[wku].shape[0]:
        raise DimensionError(
            f"M {M.shape} / k {k.shape} do not fit gate weights "
            f"{weights[wmu].shape} / {weights[wku].shape}"
        )
    if M.shape[0] != k.shape[0]:
        raise DimensionError(f"batch mismatch: M {M.shape} vs k {k.shape}")
    keep = sigmoid(M @ weights[wmu] + k @ weights[wku] + weights[bu])
    reset = sigmoid(M @ weights[wmr] + k @ weights[wkr] + weights[br])
    kc = k @ weights[wkc]
    cand = np.tanh(M @ weights[wmc] + reset * kc + weights[bc])
    out = keep * k + (1.0 - keep) * cand
    w = {n: weights[n] for triple in names for n in triple}
    return out, GateCache(M, k, keep, reset, kc, cand, names, w)


def gated_mix_backward(grad_out, cache: GateCache) -> dict[str, np.ndarray]:
    """Exact gradients of a :func:`gated_mix` call, keyed by weight name plus ``M`` and ``k``."""
    if not isinstance(cache, GateCache):
        raise UsageError("comm_backward needs the cache from obtain_knowledge/update_knowledge")
    if cache.consumed:
        raise UsageError("stale cache: this gated pass was already back-propagated")
    g = as_matrix(grad_out)
    if g.shape != cache.k.shape:
        raise DimensionError(f"gradient {g.shape} does not match output {cache.k.shape}")
    cache.consumed = True
    (wmu, wku, bu), (wmr, wkr, br), (wmc, wkc, bc) = cache.names
    W = cache.weights
    M, k, u, rg, cand = cache.M, cache.k, cache.keep, cache.reset, cache.cand

    d_au = g * (k - cand) * u * (1.0 - u)
    d_ac = g * (1.0 - u) * (1.0 - cand * cand)
    d_ar = d_ac * cache.kc * rg * (1.0 - rg)
    d_kc = d_ac * rg

    grads = {
        wmu: M.T @ d_au, wku: k.T @ d_au, bu: d_au.sum(axis=0, keepdims=True),
        wmr: M.T @ d_ar, wkr: k.T @ d_ar, br: d_ar.sum(axis=0, keepdims=True),
        wmc: M.T @ d_ac, wkc: k.T @ d_kc, bc: d_ac.sum(axis=0, keepdims=True),
    }
    grads["M"] = d_au @ W[wmu].T + d_ar @ W[wmr].T + d_ac @ W[wmc].T
    grads["k"] = g * u + d_au @ W[wku].T + d_ar @ W[wkr].T + d_kc @ W[wkc].T
    return grads


def _weights(params: CommParams) -> dict[str, np.ndarray]:
    return {f.name: getattr(params, f.name) for f in fields(params) if f.name != "embed"}


def embed(o, params: CommParams) -> tuple[np.ndarray, DenseCache]:
    """Map a private observation to its latent encoding (ReLU layer)."""
    o = as_matrix(o)
    if not np.all(np.isfinite(o)):
        raise ValueError("observation contains non-finite entries")
    return dense_forward(o, params.embed, "relu")


def embed_backward(grad_M, cache: DenseCache) -> dict[str, np.ndarray]:
    g_o, g_w, g_b = dense_backward(grad_M, cache)
    return {"W_oM": g_w, "b_M": g_b, "o": g_o}


def obtain_knowledge(M_enc, k, params: CommParams) -> tuple[np.ndarray, GateCache]:
    """Agent-specific reading ``r`` of the container content ``k``."""
    return gated_mix(M_enc, k, _weights(params), OBTAIN_NAMES)


def update_knowledge(M_enc, k, params: CommParams) -> tuple[np.ndarray, GateCache]:
    """Candidate replacement for the container content; the caller stores it."""
    return gated_mix(M_enc, k, _weights(params), UPDATE_NAMES)


def comm_backward(grad, cache: GateCache) -> dict[str, np.ndarray]:
    return gated_mix_backward(grad, cache)


def recurrent_cell(M, k, W_Mk, W_kk, b_k) -> np.ndarray:
    """Plain tanh recurrent cell ``tanh(M W_Mk + k W_kk + b_k)``."""
    return np.tanh(as_matrix(M) @ W_Mk + as_matrix(k) @ W_kk + b_k)


class KnowledgeTrace:
    """Per-tick, per-agent gate norms and container snapshot, written as CSV."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.rows: list[list] = []

    def record(self, t: int, agent: int, obtain: GateCache, update: GateCache, k_after: np.ndarray) -> None:
        self.rows.append(
            [t, agent,
             float(np.linalg.norm(obtain.keep)), float(np.linalg.norm(obtain.reset)),
             float(np.linalg.norm(update.keep)), float(np.linalg.norm(update.reset))]
            + [float(v) for v in as_matrix(k_after)[0]]
        )

    def header(self) -> list[str]:
        return ["t", "agent", "z_norm", "l_norm", "q_norm", "p_norm"] + [
            f"k{j}" for j in range(self.capacity)]

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            w.writerows(self.rows)

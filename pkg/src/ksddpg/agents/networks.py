"""Actor and critic networks with explicit forward caches and exact backward passes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..comm import (CommParams, GateCache, comm_backward, embed, embed_backward, obtain_knowledge,
                    update_knowledge)
from ..tensor import DenseCache, Mlp, as_matrix


@dataclass
class KSActorCache:
    embed: DenseCache
    obtain: GateCache
    update: GateCache
    head: list


class KSActor:
    """Embed, obtain and update on the container, then a one-hidden-layer action head.

    The head reads ``[M, r, k_new]`` (width ``m + 2K``) and emits one logit per phase.
    """

    comm_enabled = True

    def __init__(self, obs_dim: int, n_actions: int, embed_dim: int, capacity: int,
                 hidden: int, rng: np.random.Generator):
        self.obs_dim, self.n_actions = obs_dim, n_actions
        self.embed_dim, self.capacity = embed_dim, capacity
        self.comm = CommParams.init(obs_dim, embed_dim, capacity, rng)
        self.head = Mlp([embed_dim + 2 * capacity, hidden, n_actions], ["relu", "identity"], rng)

    def params(self) -> dict[str, np.ndarray]:
        out = self.comm.named("comm.")
        out.update(self.head.named("head."))
        return out

    def forward(self, o, k) -> tuple[np.ndarray, KSActorCache, np.ndarray]:
        """Returns ``(logits, cache, k_new)`` for rows of observations and knowledge."""
        M, ce = embed(o, self.comm)
        k = as_matrix(k)
        if k.shape[0] != M.shape[0]:
            k = np.broadcast_to(k, (M.shape[0], k.shape[1]))
        r, co = obtain_knowledge(M, k, self.comm)
        k_new, cu = update_knowledge(M, k, self.comm)
        logits, ch = self.head.forward(np.concatenate([M, r, k_new], axis=1))
        return logits, KSActorCache(ce, co, cu, ch), k_new

    def backward(self, grad_logits, cache: KSActorCache, with_inputs: bool = False) -> dict[str, np.ndarray]:
        m, K = self.embed_dim, self.capacity
        gh, head_grads = self.head.backward(grad_logits, cache.head)
        g_obt = comm_backward(gh[:, m:m + K], cache.obtain)
        g_upd = comm_backward(gh[:, m + K:], cache.update)
        g_emb = embed_backward(gh[:, :m] + g_obt.pop("M") + g_upd.pop("M"), cache.embed)
        grads = {"comm.W_oM": g_emb["W_oM"], "comm.b_M": g_emb["b_M"]}
        g_k = g_obt.pop("k") + g_upd.pop("k")
        for name, g in g_obt.items():
            grads["comm." + name] = g
        for name, g in g_upd.items():
            grads["comm." + name] = g
        for name, g in head_grads.items():
            grads["head." + name] = g
        if with_inputs:
            grads["input.o"] = g_emb["o"]
            grads["input.k"] = g_k
        return grads


class PlainActor:
    """Observation embedding then the same action head, without any container."""

    comm_enabled = False

    def __init__(self, obs_dim: int, n_actions: int, embed_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.obs_dim, self.n_actions = obs_dim, n_actions
        self.net = Mlp([obs_dim, embed_dim, hidden, n_actions], ["relu", "relu", "identity"], rng)

    def params(self) -> dict[str, np.ndarray]:
        return self.net.named("net.")

    def forward(self, o, k=None):
        logits, caches = self.net.forward(o)
        return logits, caches, None

    def backward(self, grad_logits, cache, with_inputs: bool = False) -> dict[str, np.ndarray]:
        g_in, grads = self.net.backward(grad_logits, cache)
        out = {"net." + k: v for k, v in grads.items()}
        if with_inputs:
            out["input.o"] = g_in
        return out


class Critic:
    """Q(x, a): ReLU hidden layers then a scalar output."""

    def __init__(self, in_dim: int, hidden, rng: np.random.Generator):
        sizes = [in_dim, *hidden, 1]
        self.net = Mlp(sizes, ["relu"] * len(hidden) + ["identity"], rng)
        self.in_dim = in_dim

    def params(self) -> dict[str, np.ndarray]:
        return self.net.named("q.")

    def forward(self, inp):
        return self.net.forward(inp)

    def backward(self, grad_q, caches):
        g_in, grads = self.net.backward(grad_q, caches)
        return g_in, {"q." + k: v for k, v in grads.items()}

    def input_grad(self, grad_q, caches) -> np.ndarray:
        return self.net.backward_input(grad_q, caches)


class QNet:
    """DQN head: one Q-value per phase action."""

    def __init__(self, obs_dim: int, n_actions: int, hidden, rng: np.random.Generator):
        sizes = [obs_dim, *hidden, n_actions]
        self.net = Mlp(sizes, ["relu"] * len(hidden) + ["identity"], rng)
        self.obs_dim, self.n_actions = obs_dim, n_actions

    def params(self) -> dict[str, np.ndarray]:
        return self.net.named("q.")

    def forward(self, o):
        return self.net.forward(o)

    def backward(self, grad_q, caches):
        g_in, grads = self.net.backward(grad_q, caches)
        return g_in, {"q." + k: v for k, v in grads.items()}

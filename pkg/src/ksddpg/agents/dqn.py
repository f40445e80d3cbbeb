"""Independent deep Q-learning agents over the discrete phase actions."""
from __future__ import annotations

import copy

import numpy as np

from ..errors import UsageError
from ..tensor import Adam, soft_update_all
from .buffer import ReplayBuffer
from .common import Hyper, masked_argmax
from .ddpg import StepStats
from .networks import QNet


def dqn_targets(r, q_next_target, mask_next, gamma: float, done) -> np.ndarray:
    """``r + gamma * max_{legal a'} Qbar(s', a')``; no bootstrap where ``done``."""
    best = np.where(np.asarray(mask_next, dtype=bool), q_next_target, -np.inf).max(axis=1, keepdims=True)
    return np.asarray(r, dtype=np.float64).reshape(-1, 1) + gamma * (
        1.0 - np.asarray(done, dtype=np.float64).reshape(-1, 1)) * best


def epsilon_greedy(q_values, mask, epsilon: float, rng: np.random.Generator) -> int:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise UsageError("no legal action available")
    if rng.random() < epsilon:
        legal = np.flatnonzero(mask)
        return int(legal[rng.integers(len(legal))])
    return masked_argmax(q_values, mask)


class DQNSystem:
    """One Q-network per agent, trained on its own slice of the shared transitions."""

    def __init__(self, obs_sizes, n_actions, hyper: Hyper, rng: np.random.Generator):
        self.h = hyper
        self.obs_sizes = [int(n) for n in obs_sizes]
        self.n_actions = [int(p) for p in n_actions]
        self.N = len(self.obs_sizes)
        self.obs_off = np.concatenate([[0], np.cumsum(self.obs_sizes)]).astype(int)
        self.act_off = np.concatenate([[0], np.cumsum(self.n_actions)]).astype(int)
        hidden = (hyper.embed_dim, hyper.actor_hidden)
        self.qnets = [QNet(n, p, hidden, rng) for n, p in zip(self.obs_sizes, self.n_actions)]
        self.targets = copy.deepcopy(self.qnets)
        self.opt = [Adam(q.params(), hyper.critic_lr) for q in self.qnets]
        self.buffer = ReplayBuffer(hyper.buffer_size)
        self.container = None
        self.comm = False

    def reset_episode(self) -> None:
        pass

    def obs_slice(self, i):
        return slice(int(self.obs_off[i]), int(self.obs_off[i + 1]))

    def act_slice(self, i):
        return slice(int(self.act_off[i]), int(self.act_off[i + 1]))

    def act(self, obs, masks, explore: bool, rng=None, sigma=0.0, epsilon=0.0, trace=None, t=0):
        idx, vecs = [], []
        for i in range(self.N):
            q, _ = self.qnets[i].forward(obs[i])
            j = epsilon_greedy(q[0], masks[i], epsilon if explore else 0.0, rng)
            vec = np.zeros(self.n_actions[i])
            vec[j] = 1.0
            idx.append(j)
            vecs.append(vec)
        return idx, vecs, []

    def q_grads(self, i: int, batch: dict[str, np.ndarray]):
        """Mean squared TD error of Q-network ``i`` on the taken actions, and its gradients."""
        h = self.h
        S = batch["x"].shape[0]
        o = batch["x"][:, self.obs_slice(i)]
        o_next = batch["x_next"][:, self.obs_slice(i)]
        a = batch["a_idx"][:, i].astype(int)
        q_next, _ = self.targets[i].forward(o_next)
        y = dqn_targets(batch["r"][:, i], q_next, batch["mask_next"][:, self.act_slice(i)] > 0.5,
                        h.gamma, batch["done"])
        q, caches = self.qnets[i].forward(o)
        diff = q[np.arange(S), a][:, None] - y
        g = np.zeros_like(q)
        g[np.arange(S), a] = 2.0 * diff[:, 0] / S
        _, grads = self.qnets[i].backward(g, caches)
        return float(np.mean(diff * diff)), grads

    def _update_agent(self, i: int, batch: dict[str, np.ndarray]) -> float:
        loss, grads = self.q_grads(i, batch)
        self.opt[i].step(grads)
        return loss

    def train_step(self, rng: np.random.Generator):
        if len(self.buffer) < self.h.batch_size:
            return None
        batches = [self.buffer.sample(self.h.batch_size, rng) for _ in range(self.N)]
        losses = [self._update_agent(i, b) for i, b in enumerate(batches)]
        for q, tq in zip(self.qnets, self.targets):
            soft_update_all(tq.params(), q.params(), self.h.tau)
        return [StepStats(l, 0.0) for l in losses]

    def state_tensors(self, i: int) -> dict[str, np.ndarray]:
        out = {"q." + k: v for k, v in self.qnets[i].params().items()}
        out.update({"target_q." + k: v for k, v in self.targets[i].params().items()})
        return out

    def load_tensors(self, i: int, tensors) -> None:
        for name, arr in self.state_tensors(i).items():
            src = np.asarray(tensors[name])
            if src.shape != arr.shape:
                raise ValueError(f"{name}: checkpoint shape {src.shape} vs model {arr.shape}")
            arr[...] = src


def dqn_train_step(system: DQNSystem, rng):
    return system.train_step(rng)

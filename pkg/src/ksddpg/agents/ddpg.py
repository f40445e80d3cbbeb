"""Deterministic-policy actor-critic agents: KS-DDPG, MADDPG and independent DDPG.

All three share one implementation:

* ``comm=True``  gives each actor the knowledge-sharing layer over a shared container;
* ``centralized=True`` gives each critic the global state and every agent's action,
  otherwise the critic sees only the agent's own observation and action.

Discrete phase actions: actors emit logits, the executed action is the masked
argmax, and critics consume the masked softmax of the logits. Policy gradients
flow through the exact softmax Jacobian.
"""
from __future__ import annotations

import copy
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..comm import KnowledgeContainer, KnowledgeTrace
from ..errors import UsageError
from ..tensor import Adam, as_matrix, soft_update_all
from .buffer import ReplayBuffer
from .common import Hyper, explore_action, flatten_grads, masked_argmax, masked_softmax, masked_softmax_backward
from .networks import Critic, KSActor, PlainActor


@dataclass
class StepStats:
    critic_loss: float
    actor_grad_norm: float


def critic_target(r, q_next, gamma: float, done) -> np.ndarray:
    """``y = r + gamma * Q'(x', a')``, with no bootstrap where ``done``."""
    r = np.asarray(r, dtype=np.float64)
    done = np.asarray(done, dtype=np.float64)
    return r + gamma * (1.0 - done) * np.asarray(q_next, dtype=np.float64)


def critic_loss(y, q) -> float:
    y = np.asarray(y, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if y.size == 0:
        raise UsageError("empty minibatch")
    if y.shape != q.shape:
        raise UsageError(f"targets {y.shape} vs predictions {q.shape}")
    d = y - q
    return float(np.mean(d * d))


def select_action(o, container: KnowledgeContainer | None, actor, mask, explore: bool,
                  rng: np.random.Generator | None = None, sigma: float = 0.0, epsilon: float = 0.0,
                  agent: int = 0, trace: KnowledgeTrace | None = None, t: int = 0):
    """One agent's action at a decision point.

    Returns ``(action index, relaxed action vector, pre-update knowledge)``. With
    a container, the updated knowledge is written back before returning.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise UsageError("no legal action available")
    k_bar = None
    if container is not None:
        k_bar = container.read(agent)
        logits, cache, k_new = actor.forward(o, k_bar)
        container.write(agent, k_new)
        if trace is not None:
            trace.record(t, agent, cache.obtain, cache.update, k_new)
        k_bar = k_bar[0]
    else:
        logits, _, _ = actor.forward(o)
    logits = logits[0]
    if explore:
        j, vec = explore_action(logits, mask, sigma, epsilon, rng)
    else:
        j, vec = masked_argmax(logits, mask), masked_softmax(logits, mask)
    return j, vec, k_bar


def _thread_count(h: Hyper) -> int:
    env = os.environ.get("KSDDPG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, h.threads)


class ActorCriticSystem:
    """N actors, N critics, their targets and optimizers, and one shared replay buffer."""

    def __init__(self, obs_sizes, n_actions, hyper: Hyper, rng: np.random.Generator,
                 comm: bool = True, centralized: bool = True):
        self.h = hyper
        self.obs_sizes = [int(n) for n in obs_sizes]
        self.n_actions = [int(p) for p in n_actions]
        self.N = len(self.obs_sizes)
        self.comm = comm
        self.centralized = centralized
        self.obs_off = np.concatenate([[0], np.cumsum(self.obs_sizes)]).astype(int)
        self.act_off = np.concatenate([[0], np.cumsum(self.n_actions)]).astype(int)
        self.x_dim = int(self.obs_off[-1])
        self.a_dim = int(self.act_off[-1])
        h = hyper
        if comm:
            self.actors = [KSActor(n, p, h.embed_dim, h.capacity, h.actor_hidden, rng)
                           for n, p in zip(self.obs_sizes, self.n_actions)]
            self.container = KnowledgeContainer(h.capacity)
        else:
            self.actors = [PlainActor(n, p, h.embed_dim, h.actor_hidden, rng)
                           for n, p in zip(self.obs_sizes, self.n_actions)]
            self.container = None
        if centralized:
            self.critics = [Critic(self.x_dim + self.a_dim, h.critic_hidden, rng) for _ in range(self.N)]
        else:
            self.critics = [Critic(n + p, h.critic_hidden, rng)
                            for n, p in zip(self.obs_sizes, self.n_actions)]
        self.target_actors = copy.deepcopy(self.actors)
        self.target_critics = copy.deepcopy(self.critics)
        self.actor_opt = [Adam(a.params(), h.actor_lr) for a in self.actors]
        self.critic_opt = [Adam(c.params(), h.critic_lr) for c in self.critics]
        self.buffer = ReplayBuffer(h.buffer_size)
        self.threads = _thread_count(h)

    # -- slicing helpers --------------------------------------------------------

    def obs_slice(self, i: int) -> slice:
        return slice(int(self.obs_off[i]), int(self.obs_off[i + 1]))

    def act_slice(self, i: int) -> slice:
        return slice(int(self.act_off[i]), int(self.act_off[i + 1]))

    def phi_slice(self, i: int) -> slice:
        K = self.h.capacity
        return slice(i * K, (i + 1) * K)

    def critic_input(self, i: int, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.centralized:
            return np.concatenate([x, a], axis=1)
        return np.concatenate([x[:, self.obs_slice(i)], a[:, self.act_slice(i)]], axis=1)

    def action_grad_slice(self, i: int) -> slice:
        if self.centralized:
            s = self.act_slice(i)
            return slice(self.x_dim + s.start, self.x_dim + s.stop)
        return slice(self.obs_sizes[i], self.obs_sizes[i] + self.n_actions[i])

    # -- acting -----------------------------------------------------------------

    def reset_episode(self) -> None:
        if self.container is not None:
            self.container.reset()

    def act(self, obs, masks, explore: bool, rng=None, sigma=0.0, epsilon=0.0,
            trace: KnowledgeTrace | None = None, t: int = 0):
        """Every agent acts in ascending order (so the container is visited in order)."""
        idx, vecs, phis = [], [], []
        for i in range(self.N):
            j, vec, k_bar = select_action(obs[i], self.container, self.actors[i], masks[i], explore,
                                          rng, sigma, epsilon, agent=i, trace=trace, t=t)
            idx.append(j)
            vecs.append(vec)
            if k_bar is not None:
                phis.append(k_bar)
        return idx, vecs, phis

    def target_actions(self, x_next: np.ndarray, phi_next: np.ndarray, mask_next: np.ndarray) -> np.ndarray:
        parts = []
        for j in range(self.N):
            o = x_next[:, self.obs_slice(j)]
            k = phi_next[:, self.phi_slice(j)] if self.comm else None
            logits, _, _ = self.target_actors[j].forward(o, k)
            parts.append(masked_softmax(logits, mask_next[:, self.act_slice(j)] > 0.5))
        return np.concatenate(parts, axis=1)

    # -- learning ---------------------------------------------------------------

    def critic_grads(self, i: int, batch: dict[str, np.ndarray], a_next: np.ndarray):
        """Mean squared TD error of critic ``i`` and its parameter gradients."""
        h = self.h
        critic = self.critics[i]
        q_next, _ = self.target_critics[i].forward(self.critic_input(i, batch["x_next"], a_next))
        y = critic_target(batch["r"][:, i:i + 1], q_next, h.gamma, batch["done"])
        q, caches = critic.forward(self.critic_input(i, batch["x"], batch["a_vec"]))
        _, grads = critic.backward(2.0 * (q - y) / q.shape[0], caches)
        return critic_loss(y, q), grads

    def actor_grads(self, i: int, batch: dict[str, np.ndarray]):
        """Policy loss ``-mean Q_i(x, a)`` with agent ``i``'s action replaced by its
        current relaxed output, and the gradients of that loss w.r.t. actor ``i``."""
        x, a = batch["x"], batch["a_vec"]
        S = x.shape[0]
        critic, actor = self.critics[i], self.actors[i]
        o = x[:, self.obs_slice(i)]
        k = batch["phi"][:, self.phi_slice(i)] if self.comm else None
        logits, acache, _ = actor.forward(o, k)
        p = masked_softmax(logits, batch["mask"][:, self.act_slice(i)] > 0.5)
        a_pol = a.copy()
        a_pol[:, self.act_slice(i)] = p
        q, qc = critic.forward(self.critic_input(i, x, a_pol))
        g_in = critic.input_grad(np.full((S, 1), -1.0 / S), qc)
        g_logits = masked_softmax_backward(g_in[:, self.action_grad_slice(i)], p)
        return -float(q.mean()), actor.backward(g_logits, acache)

    def _update_agent(self, i: int, batch: dict[str, np.ndarray], a_next: np.ndarray) -> StepStats:
        loss, cgrads = self.critic_grads(i, batch, a_next)
        self.critic_opt[i].step(cgrads)
        _, agrads = self.actor_grads(i, batch)
        self.actor_opt[i].step(agrads)
        return StepStats(loss, flatten_grads(agrads))

    def train_step(self, rng: np.random.Generator) -> list[StepStats] | None:
        """One update of every agent from its own minibatch, then soft target updates.

        Returns None (and changes nothing) while the buffer holds fewer than a batch.
        """
        if len(self.buffer) < self.h.batch_size:
            return None
        # draw all minibatches first so threading never changes the random stream
        batches = [self.buffer.sample(self.h.batch_size, rng) for _ in range(self.N)]
        targets = [self.target_actions(b["x_next"], b["phi_next"], b["mask_next"]) for b in batches]
        if self.threads > 1 and self.N > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                stats = list(ex.map(lambda i: self._update_agent(i, batches[i], targets[i]), range(self.N)))
        else:
            stats = [self._update_agent(i, batches[i], targets[i]) for i in range(self.N)]
        self.soft_update_targets()
        return stats

    def soft_update_targets(self) -> None:
        for a, ta in zip(self.actors, self.target_actors):
            soft_update_all(ta.params(), a.params(), self.h.tau)
        for c, tc in zip(self.critics, self.target_critics):
            soft_update_all(tc.params(), c.params(), self.h.tau)

    # -- persistence --------------------------------------------------------------

    def state_tensors(self, i: int) -> dict[str, np.ndarray]:
        out = {}
        for pre, net in (("actor.", self.actors[i]), ("critic.", self.critics[i]),
                         ("target_actor.", self.target_actors[i]), ("target_critic.", self.target_critics[i])):
            for name, arr in net.params().items():
                out[pre + name] = arr
        return out

    def load_tensors(self, i: int, tensors: dict[str, np.ndarray]) -> None:
        for name, arr in self.state_tensors(i).items():
            src = as_matrix(tensors[name])
            if src.shape != arr.shape:
                raise ValueError(f"{name}: checkpoint shape {src.shape} vs model {arr.shape}")
            arr[...] = src


def ksddpg_train_step(system: ActorCriticSystem, rng) -> list[StepStats] | None:
    if not (system.comm and system.centralized):
        raise UsageError("ksddpg_train_step needs a system with comm=True, centralized=True")
    return system.train_step(rng)


def maddpg_train_step(system: ActorCriticSystem, rng) -> list[StepStats] | None:
    if system.comm or not system.centralized:
        raise UsageError("maddpg_train_step needs a system with comm=False, centralized=True")
    return system.train_step(rng)


def ddpg_train_step(system: ActorCriticSystem, rng) -> list[StepStats] | None:
    if system.comm or system.centralized:
        raise UsageError("ddpg_train_step needs a system with comm=False, centralized=False")
    return system.train_step(rng)

"""Pieces shared by the learning agents: masked softmax, exploration schedule, hyperparameters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, UsageError


@dataclass
class Hyper:
    gamma: float = 0.95
    batch_size: int = 1024
    buffer_size: int = 1_000_000
    tau: float = 0.01
    critic_lr: float = 1e-3
    actor_lr: float = 1e-4
    train_every: int = 100
    embed_dim: int = 512
    actor_hidden: int = 256
    critic_hidden: tuple = (1024, 512, 256)
    capacity: int = 64           # knowledge container width K
    sigma_start: float = 0.5
    sigma_end: float = 0.05
    eps_start: float = 0.2
    eps_end: float = 0.01
    anneal_fraction: float = 0.6
    threads: int = 1

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= buffer_size")
        if self.train_every < 1:
            raise ConfigError("train_every must be >= 1")
        self.critic_hidden = tuple(self.critic_hidden)


@dataclass
class ExplorationSchedule:
    """Linear decay of logit-noise sigma and epsilon over the first part of training."""

    episodes: int
    sigma_start: float = 0.5
    sigma_end: float = 0.05
    eps_start: float = 0.2
    eps_end: float = 0.01
    fraction: float = 0.6

    @classmethod
    def from_hyper(cls, episodes: int, h: Hyper) -> "ExplorationSchedule":
        return cls(episodes, h.sigma_start, h.sigma_end, h.eps_start, h.eps_end, h.anneal_fraction)

    def _progress(self, episode: int) -> float:
        horizon = max(1.0, self.fraction * self.episodes)
        return min(1.0, max(0.0, episode / horizon))

    def sigma(self, episode: int) -> float:
        p = self._progress(episode)
        return self.sigma_start + p * (self.sigma_end - self.sigma_start)

    def epsilon(self, episode: int) -> float:
        p = self._progress(episode)
        return self.eps_start + p * (self.eps_end - self.eps_start)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise softmax (temperature 1) with illegal entries forced to exactly 0."""
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise UsageError("every row needs at least one legal action")
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def masked_softmax_backward(grad_p: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of :func:`masked_softmax` (illegal entries get zero gradient)."""
    return p * (grad_p - (grad_p * p).sum(axis=-1, keepdims=True))


def masked_argmax(values: np.ndarray, mask: np.ndarray) -> np.ndarray | int:
    """Argmax over legal entries; ties go to the lowest index."""
    values = np.asarray(values, dtype=np.float64)
    z = np.where(np.asarray(mask, dtype=bool), values, -np.inf)
    out = z.argmax(axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def explore_action(logits: np.ndarray, mask: np.ndarray, sigma: float, epsilon: float,
                   rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Noisy behaviour action and the action vector recorded for the critic.

    With probability ``epsilon`` a uniformly random legal action is taken and
    recorded one-hot; otherwise Gaussian noise is added to the logits and the
    recorded vector is the masked softmax of the noisy logits.
    """
    mask = np.asarray(mask, dtype=bool)
    legal = np.flatnonzero(mask)
    if rng.random() < epsilon:
        j = int(legal[rng.integers(len(legal))])
        vec = np.zeros(len(mask))
        vec[j] = 1.0
        return j, vec
    noisy = logits + sigma * rng.standard_normal(logits.shape)
    return masked_argmax(noisy, mask), masked_softmax(noisy, mask)


def flatten_grads(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))

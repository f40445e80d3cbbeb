"""Ring-buffer experience replay with uniform minibatch sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, UsageError


@dataclass
class Transition:
    """One multi-agent transition; every field is a flat array (or scalar)."""

    x: np.ndarray        # concatenated observations, ascending agent order
    x_next: np.ndarray
    a_vec: np.ndarray    # concatenated relaxed action vectors
    a_idx: np.ndarray    # executed action index per agent
    phi: np.ndarray      # knowledge snapshot per agent, flattened (N*K); empty without a container
    phi_next: np.ndarray
    r: np.ndarray        # reward per agent
    done: float
    mask: np.ndarray     # concatenated legal-action masks at x
    mask_next: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: np.atleast_1d(np.asarray(v, dtype=np.float64)) for k, v in self.__dict__.items()}


class ReplayBuffer:
    """Fixed-capacity FIFO store. Storage grows geometrically up to ``capacity``."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("capacity must be positive")
        self.capacity = int(capacity)
        self.inserted = 0
        self.data: dict[str, np.ndarray] | None = None
        self._alloc = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def _ensure(self, row: dict[str, np.ndarray]) -> None:
        need = min(self.capacity, self.inserted + 1)
        if self.data is None:
            self._alloc = min(self.capacity, 1024)
            self.data = {k: np.zeros((self._alloc, v.size)) for k, v in row.items()}
            return
        if need > self._alloc:
            new = min(self.capacity, 2 * self._alloc)
            for k, arr in self.data.items():
                grown = np.zeros((new, arr.shape[1]))
                grown[: self._alloc] = arr
                self.data[k] = grown
            self._alloc = new

    def add(self, tr: Transition | dict) -> None:
        row = tr.as_dict() if isinstance(tr, Transition) else {
            k: np.atleast_1d(np.asarray(v, dtype=np.float64)) for k, v in tr.items()}
        self._ensure(row)
        if set(row) != set(self.data):
            raise DimensionError(f"transition fields {sorted(row)} differ from buffer {sorted(self.data)}")
        slot = self.inserted % self.capacity
        for k, v in row.items():
            if v.size != self.data[k].shape[1]:
                raise DimensionError(f"field {k}: width {v.size}, buffer holds {self.data[k].shape[1]}")
            self.data[k][slot] = v.ravel()
        self.inserted += 1

    def order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        n = len(self)
        start = self.inserted % self.capacity if self.inserted > self.capacity else 0
        return (start + np.arange(n)) % self.capacity

    def field(self, name: str) -> np.ndarray:
        """All stored rows of ``name`` in insertion order."""
        return self.data[name][self.order()]

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        n = len(self)
        if batch_size > n:
            raise UsageError(f"cannot sample {batch_size} from {n} stored transitions")
        return rng.choice(n, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = self.sample_indices(batch_size, rng)
        return {k: v[idx] for k, v in self.data.items()}

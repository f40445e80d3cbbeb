"""Simulator plus one signal controller per signalized node.

Tick ``t`` order: unanswered decision points fall back (see
:func:`~ksddpg.signals.settle`); controllers fix the signals from their state
at the start of ``t``; the simulator advances; controller timers advance and report
decision points. Policies answer decision points between ticks via
:meth:`TrafficEnv.apply`.

Action index ``j`` for an agent means Extend when ``j`` equals the current
phase and SwitchTo(j) otherwise, so every agent has one output per phase.
"""
from __future__ import annotations

import numpy as np

from .errors import UsageError
from .signals import (ControllerConfig, ControllerTrace, action_mask, apply_action, controller_tick,
                      index_to_action, new_controller, settle)
from .sim.core import MetricsFrame, Simulation, observe
from .sim.demand import DemandSpec
from .sim.network import RoadNetwork


class TrafficEnv:
    def __init__(self, net: RoadNetwork, demand: DemandSpec, cfg: ControllerConfig | None = None,
                 horizon: int = 3600, backend: str = "auto", volume: str = "total",
                 trace: bool = False):
        self.net = net
        self.demand = demand
        self.cfg = cfg or ControllerConfig()
        self.horizon = horizon
        self.backend = backend
        self.volume = volume
        self.trace_enabled = trace
        self.agent_ids = tuple(net.signalized)
        self.n_agents = len(self.agent_ids)
        self.left_only = {
            a: tuple(net.phase_is_left_only(ph) for ph in net.phases[a]) for a in self.agent_ids}
        self.n_actions = [len(net.phases[a]) for a in self.agent_ids]
        self.sim: Simulation | None = None

    def reset(self, rng: np.random.Generator | int) -> list[np.ndarray]:
        self.sim = Simulation(self.net, self.demand, rng, backend=self.backend)
        self.controllers = [new_controller(a, self.left_only[a], self.cfg) for a in self.agent_ids]
        self.deciding = np.zeros(self.n_agents, dtype=bool)
        self.t = 0
        self.frames: list[MetricsFrame] = []
        self.trace = ControllerTrace() if self.trace_enabled else None
        self.obs_sizes = [len(o) for o in self.observations()]
        return self.observations()

    @property
    def done(self) -> bool:
        return self.t >= self.horizon

    def observations(self) -> list[np.ndarray]:
        return [observe(self.sim, a, c.current_phase if c.mode == "green" else c.transition_target,
                        self.volume)
                for a, c in zip(self.agent_ids, self.controllers)]

    def masks(self) -> list[np.ndarray]:
        """Legal action masks; agents not at a decision point may only hold (current phase)."""
        out = []
        for i, c in enumerate(self.controllers):
            if self.deciding[i]:
                out.append(np.array(action_mask(c, self.cfg), dtype=bool))
            else:
                m = np.zeros(self.n_actions[i], dtype=bool)
                m[c.current_phase if c.mode == "green" else c.transition_target] = True
                out.append(m)
        return out

    def apply(self, actions: dict[int, int]) -> None:
        """Apply index actions for deciding agents (others are ignored)."""
        for i, j in actions.items():
            if not self.deciding[i]:
                continue
            c = self.controllers[i]
            apply_action(c, index_to_action(c, int(j)), self.cfg)
            self.deciding[i] = False

    def apply_actions(self, actions: dict[int, object]) -> None:
        """Apply :class:`~ksddpg.signals.Action` objects for deciding agents."""
        for i, act in actions.items():
            if not self.deciding[i]:
                raise UsageError(f"agent {i} is not at a decision point")
            apply_action(self.controllers[i], act, self.cfg)
            self.deciding[i] = False

    def tick(self) -> MetricsFrame:
        if self.done:
            raise UsageError("episode horizon reached")
        for c in self.controllers:
            settle(c, self.cfg)
        if self.trace is not None:
            for c in self.controllers:
                self.trace.record(self.t, c)
        frame = self.sim.step([c.signal() for c in self.controllers])
        self.frames.append(frame)
        for i, c in enumerate(self.controllers):
            _, dec = controller_tick(c, self.cfg)
            self.deciding[i] = dec
        self.t += 1
        return frame

    def lane_delay(self) -> np.ndarray:
        return self.sim.lane_delay()

    def cycles(self) -> dict[str, list[int]]:
        return {c.node_id: list(c.cycles) for c in self.controllers}

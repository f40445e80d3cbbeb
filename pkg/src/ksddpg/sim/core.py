"""Point-queue network simulation state, tick driver, metrics and observations.

Each link is a free-flow pipe feeding a FIFO queue. Per 1 s tick:

1. Poisson spawning; spawned vehicles wait at their origin until the first
   link has room.
2. Pipe vehicles whose free-flow time has elapsed join the queue.
3. Nodes discharge queues: signalized approaches at saturation flow through
   a fractional accumulator, stop-sign nodes one vehicle per approach in
   round-robin, boundary nodes without limit. A blocked head holds the queue.
4. Arrivals still queued at the end of the tick count one stop each; every
   queued vehicle accrues one second of delay.

Steps 2-4 run in a compiled kernel when available (see :data:`BACKEND`).
"""
from __future__ import annotations

import copy
import os
from collections import deque
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import ConfigError, UsageError
from . import _simcore_py
from .demand import DemandSpec, spawn_arrivals
from .network import RoadNetwork

WAITING, RUNNING, QUEUED, EXITED = 0, 1, 2, 3
_KIND_CODE = {"signalized": 0, "unsignalized": 1, "boundary": 2}


def _load_backend(name: str = "auto"):
    if name == "python" or (name == "auto" and os.environ.get("KSDDPG_PURE_PYTHON") == "1"):
        return _simcore_py
    try:
        from . import _simcore
    except ImportError:
        if name == "cython":
            raise
        return _simcore_py
    return _simcore


_DEFAULT_KERNEL = _load_backend()
BACKEND = _DEFAULT_KERNEL.BACKEND


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _simcore  # noqa: F401
        out.insert(0, "cython")
    except ImportError:
        pass
    return out


@dataclass
class Vehicle:
    id: int
    route: tuple[str, ...]
    spawn_time: int
    entry_time: int | None
    link_entry_time: int | None
    stop_count: int
    delay: int
    state: str
    exit_time: int | None


@dataclass
class MetricsFrame:
    """Snapshot taken at the end of tick ``time``; arrays are ordered like ``node_ids``."""

    time: int
    node_ids: tuple[str, ...]
    queue: np.ndarray        # queued vehicles on entrance links
    delay: np.ndarray        # mean queued time of vehicles served so far (s)
    lane_delay: np.ndarray   # accumulated delay per vehicle currently on entrance links (s)
    speed: np.ndarray        # mean speed on entrance links (ft/s)
    stops: np.ndarray        # stops this tick
    stops_total: np.ndarray  # cumulative stops
    network_speed: float
    network_stops: int
    spawned: int
    in_network: int
    exited: int
    waiting: int

    @property
    def mean_queue(self) -> float:
        return float(self.queue.mean()) if len(self.queue) else 0.0

    @property
    def mean_delay(self) -> float:
        return float(self.delay.mean()) if len(self.delay) else 0.0


class Simulation:
    """Mutable simulation instance. ``step`` advances one tick."""

    def __init__(self, net: RoadNetwork, demand: DemandSpec, rng: np.random.Generator | int = 0,
                 backend: str = "auto", vehicle_capacity: int = 1024):
        self.net = net
        self.demand = demand
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.kernel = _DEFAULT_KERNEL if backend == "auto" else _load_backend(backend)
        self.backend = self.kernel.BACKEND
        links, nodes = net.links, net.nodes
        L, N = len(links), len(nodes)

        self.link_tf = np.array([l.travel_ticks for l in links], dtype=np.int64)
        self.link_jam = np.array([l.jam_capacity for l in links], dtype=np.int64)
        self.link_rate = np.array([l.saturation_flow * l.lanes for l in links], dtype=np.float64)
        self.link_down = np.array([net.node_index[l.to_node] for l in links], dtype=np.int64)
        self.link_speed = np.array([l.free_flow_speed for l in links], dtype=np.float64)
        self.cap = int(self.link_jam.max()) + 1
        self.pipe = np.zeros((L, self.cap), dtype=np.int64)
        self.queue = np.zeros((L, self.cap), dtype=np.int64)
        for name in ("pipe_head", "pipe_len", "q_head", "q_len", "link_wait", "arrivals"):
            setattr(self, name, np.zeros(L, dtype=np.int64))
        self.link_acc = np.zeros(L, dtype=np.float64)

        self.node_kind = np.array([_KIND_CODE[n.kind] for n in nodes], dtype=np.int64)
        incoming = [[] for _ in range(N)]
        for li, l in enumerate(links):
            incoming[net.node_index[l.to_node]].append(li)
        self.in_ptr = np.zeros(N + 1, dtype=np.int64)
        self.in_ptr[1:] = np.cumsum([len(x) for x in incoming])
        self.in_links = np.array([li for x in incoming for li in x] or [0], dtype=np.int64)
        for name in ("node_rr", "node_stops", "node_tick_stops", "node_served", "node_served_delay"):
            setattr(self, name, np.zeros(N, dtype=np.int64))

        # movements at non-signalized nodes are always open
        self.green = np.zeros(max(1, len(net.movements)), dtype=np.uint8)
        for mi, m in enumerate(net.movements):
            if net.node_by_id[net.movement_node(m.id)].kind != "signalized":
                self.green[mi] = 1
        self.agent_ids = tuple(net.signalized)
        self.phase_movements = {
            nid: [np.array([net.movement_index[m] for m in ph.movements], dtype=np.int64)
                  for ph in net.phases[nid]]
            for nid in self.agent_ids
        }
        self.node_movements = {
            nid: np.unique(np.concatenate(self.phase_movements[nid])) for nid in self.agent_ids}

        self._build_routes()
        self._alloc_vehicles(vehicle_capacity)
        self.counters = np.zeros(1, dtype=np.int64)
        self.n_veh = 0
        self.t = 0
        self.waiting: dict[int, deque] = {}
        self._metric_setup()

    # -- setup -----------------------------------------------------------------

    def _build_routes(self) -> None:
        """Resolve every flow's shortest route once; unreachable pairs fail here."""
        net = self.net
        cache: dict[tuple[str, str], int] = {}
        by_pair = {(m.from_link, m.to_link): mi for mi, m in enumerate(net.movements)}
        links_flat, movs_flat = [], []
        self.flow_route = []
        for f in self.demand.flows:
            key = (f.origin, f.destination)
            if key not in cache:
                path = net.shortest_route(f.origin, f.destination)
                cache[key] = len(links_flat)
                ids = [net.link_index[p] for p in path]
                mov = [by_pair[(a, b)] for a, b in zip(path[:-1], path[1:])] + [-1]
                links_flat.extend(ids)
                movs_flat.extend(mov)
            self.flow_route.append(cache[key])
        self.route_links = np.array(links_flat or [0], dtype=np.int64)
        self.route_movs = np.array(movs_flat or [-1], dtype=np.int64)
        self.flow_route = np.array(self.flow_route, dtype=np.int64)

    def _alloc_vehicles(self, n: int) -> None:
        n = max(1, n)
        for name in ("v_start", "v_pos", "v_state", "v_ready", "v_qenter", "v_stops",
                     "v_delay", "v_exit", "v_enter", "v_spawn", "v_entry0"):
            setattr(self, name, np.zeros(n, dtype=np.int64))
        self.v_exit[:] = -1
        self.v_entry0[:] = -1

    def _grow_vehicles(self, need: int) -> None:
        cur = self.v_start.shape[0]
        if need <= cur:
            return
        new = max(need, 2 * cur)
        for name in ("v_start", "v_pos", "v_state", "v_ready", "v_qenter", "v_stops",
                     "v_delay", "v_exit", "v_enter", "v_spawn", "v_entry0"):
            old = getattr(self, name)
            arr = np.zeros(new, dtype=np.int64)
            if name in ("v_exit", "v_entry0"):
                arr[:] = -1
            arr[:cur] = old
            setattr(self, name, arr)

    def _metric_setup(self) -> None:
        net = self.net
        self.agent_index = np.array([net.node_index[a] for a in self.agent_ids], dtype=np.int64)
        self.entrance_links = {
            a: sorted(net.link_index[l] for l in net.incoming(a)) for a in self.agent_ids}
        # per-lane slots for observations
        self.obs_slots = {}
        for a, lids in self.entrance_links.items():
            slots = [li for li in lids for _ in range(net.links[li].lanes)]
            self.obs_slots[a] = np.array(slots, dtype=np.int64)

    # -- signals ---------------------------------------------------------------

    def set_signals(self, signal_states) -> None:
        """Set green movements; ``signal_states`` maps node id (or agent order) to a phase or None."""
        if isinstance(signal_states, Mapping):
            items = signal_states.items()
        else:
            items = zip(self.agent_ids, signal_states)
        for nid, phase in items:
            self.green[self.node_movements[nid]] = 0
            if phase is not None:
                self.green[self.phase_movements[nid][phase]] = 1

    # -- tick ------------------------------------------------------------------

    def _spawn(self, t: int) -> None:
        new = spawn_arrivals(self.demand, t, self.rng)
        if not new:
            return
        self._grow_vehicles(self.n_veh + len(new))
        for fi in new:
            v = self.n_veh
            self.n_veh += 1
            start = self.flow_route[fi]
            self.v_start[v] = start
            self.v_state[v] = WAITING
            self.v_spawn[v] = t
            first = int(self.route_links[start])
            self.waiting.setdefault(first, deque()).append(v)

    def _enter_origins(self, t: int) -> None:
        C = self.cap
        for l in sorted(self.waiting):
            dq = self.waiting[l]
            while dq and self.pipe_len[l] + self.q_len[l] < self.link_jam[l]:
                v = dq.popleft()
                self.v_state[v] = RUNNING
                self.v_pos[v] = 0
                self.v_enter[v] = t
                self.v_entry0[v] = t
                self.v_ready[v] = t + self.link_tf[l]
                self.pipe[l, (self.pipe_head[l] + self.pipe_len[l]) % C] = v
                self.pipe_len[l] += 1

    def step(self, signal_states=None) -> MetricsFrame:
        if signal_states is not None:
            self.set_signals(signal_states)
        t = self.t
        self._spawn(t)
        self._enter_origins(t)
        self.kernel.advance(t, self)
        self.t += 1
        return self.metrics(t)

    # -- read-outs -------------------------------------------------------------

    @property
    def exited(self) -> int:
        return int(self.counters[0])

    @property
    def n_waiting(self) -> int:
        return sum(len(d) for d in self.waiting.values())

    def metrics(self, t: int | None = None) -> MetricsFrame:
        N = len(self.net.nodes)
        down = self.link_down
        count = self.pipe_len + self.q_len
        q_node = np.bincount(down, weights=self.q_len, minlength=N)
        c_node = np.bincount(down, weights=count, minlength=N)
        w_node = np.bincount(down, weights=self.link_wait, minlength=N)
        s_node = np.bincount(down, weights=self.pipe_len * self.link_speed, minlength=N)
        idx = self.agent_index
        c = c_node[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            lane_delay = np.where(c > 0, w_node[idx] / np.maximum(c, 1), 0.0)
            speed = np.where(c > 0, s_node[idx] / np.maximum(c, 1), 0.0)
            served = self.node_served[idx]
            delay = np.where(served > 0, self.node_served_delay[idx] / np.maximum(served, 1), 0.0)
        total = count.sum()
        net_speed = float((self.pipe_len * self.link_speed).sum() / total) if total else 0.0
        exited = self.exited
        return MetricsFrame(
            time=self.t - 1 if t is None else t,
            node_ids=self.agent_ids,
            queue=q_node[idx],
            delay=delay,
            lane_delay=lane_delay,
            speed=speed,
            stops=self.node_tick_stops[idx].astype(np.float64),
            stops_total=self.node_stops[idx].astype(np.float64),
            network_speed=net_speed,
            network_stops=int(self.node_stops.sum()),
            spawned=self.n_veh,
            in_network=self.n_veh - exited,
            exited=exited,
            waiting=self.n_waiting,
        )

    def lane_delay(self) -> np.ndarray:
        """Per-agent accumulated delay per vehicle on entrance links (the reward quantity)."""
        N = len(self.net.nodes)
        count = self.pipe_len + self.q_len
        c = np.bincount(self.link_down, weights=count, minlength=N)[self.agent_index]
        w = np.bincount(self.link_down, weights=self.link_wait, minlength=N)[self.agent_index]
        return np.where(c > 0, w / np.maximum(c, 1), 0.0)

    def link_queue(self, link_id: str) -> list[int]:
        li = self.net.link_index[link_id]
        return [int(self.queue[li, (self.q_head[li] + j) % self.cap]) for j in range(self.q_len[li])]

    def link_pipe(self, link_id: str) -> list[tuple[int, int]]:
        """(vehicle id, time it reaches the queue) pairs in FIFO order."""
        li = self.net.link_index[link_id]
        out = []
        for j in range(self.pipe_len[li]):
            v = int(self.pipe[li, (self.pipe_head[li] + j) % self.cap])
            out.append((v, int(self.v_ready[v])))
        return out

    def vehicle(self, v: int) -> Vehicle:
        if not 0 <= v < self.n_veh:
            raise UsageError(f"no vehicle {v}")
        start = self.v_start[v]
        route = [start]
        while self.route_movs[route[-1]] >= 0:
            route.append(route[-1] + 1)
        names = {WAITING: "waiting", RUNNING: "running", QUEUED: "queued", EXITED: "exited"}
        return Vehicle(
            id=v,
            route=tuple(self.net.links[self.route_links[i]].id for i in route),
            spawn_time=int(self.v_spawn[v]),
            entry_time=None if self.v_entry0[v] < 0 else int(self.v_entry0[v]),
            link_entry_time=None if self.v_state[v] == WAITING else int(self.v_enter[v]),
            stop_count=int(self.v_stops[v]),
            delay=int(self.v_delay[v]),
            state=names[int(self.v_state[v])],
            exit_time=None if self.v_exit[v] < 0 else int(self.v_exit[v]),
        )

    def route_free_flow(self, v: int) -> int:
        i = self.v_start[v]
        total = self.link_tf[self.route_links[i]]
        while self.route_movs[i] >= 0:
            i += 1
            total += self.link_tf[self.route_links[i]]
        return int(total)

    def snapshot(self) -> "Simulation":
        """Independent deep copy (safe to hand to another thread)."""
        kernel = self.kernel
        self.kernel = None
        try:
            out = copy.deepcopy(self)
        finally:
            self.kernel = kernel
        out.kernel = kernel
        return out


def sim_step(state: Simulation, signal_states, t: int | None = None) -> tuple[Simulation, MetricsFrame]:
    """Advance ``state`` one tick in place; returns it with the tick's metrics."""
    if t is not None and t != state.t:
        raise UsageError(f"simulation is at tick {state.t}, asked to step tick {t}")
    frame = state.step(signal_states)
    return state, frame


def observe(state: Simulation, node: str, current_phase: int, volume: str = "total") -> np.ndarray:
    """Per-entrance-lane volume over jam capacity, then a one-hot current phase.

    ``volume="total"`` counts queued plus running vehicles; ``"queued"`` only the queue.
    """
    if node not in state.obs_slots:
        raise ConfigError(f"{node!r} is not a signalized node")
    slots = state.obs_slots[node]
    if volume == "total":
        counts = state.pipe_len[slots] + state.q_len[slots]
    elif volume == "queued":
        counts = state.q_len[slots]
    else:
        raise ConfigError(f"volume must be 'total' or 'queued', got {volume!r}")
    n_phases = len(state.phase_movements[node])
    onehot = np.zeros(n_phases)
    onehot[current_phase] = 1.0
    return np.concatenate([counts / state.link_jam[slots], onehot])


def observation_size(state: Simulation, node: str) -> int:
    return len(state.obs_slots[node]) + len(state.phase_movements[node])


def compute_reward(prev_delay_avg: float, cur_delay_avg: float) -> float:
    """Delay reduction between two successive decision points (positive is better)."""
    if prev_delay_avg < 0 or cur_delay_avg < 0:
        raise ValueError("delay averages must be non-negative")
    return float(prev_delay_avg - cur_delay_avg)

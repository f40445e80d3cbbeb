"""Model-driven baselines: Webster fixed-time plans and greedy MaxPressure."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..signals import ControllerConfig, FixedTimePlan

SATURATION_VPH = 1800.0


def webster_cycle(lost_time: float, Y: float, cycle_min: float = 50.0,
                  cycle_max: float = 120.0) -> tuple[float, bool]:
    """Optimal cycle ``(1.5 L + 5) / (1 - Y)`` clamped to the cycle bounds.

    Returns ``(cycle, saturated)``; ``Y >= 0.95`` is treated as saturated and
    gets the maximum cycle.
    """
    if Y < 0:
        raise ConfigError("flow ratio sum must be non-negative")
    if Y >= 0.95:
        return float(cycle_max), True
    c = (1.5 * lost_time + 5.0) / (1.0 - Y)
    return float(min(cycle_max, max(cycle_min, c))), False


def webster_greens(ratios, cycle: float, lost_time: float, min_greens, max_greens,
                   unit: int = 2) -> list[int]:
    """Split effective green in proportion to the critical ratios.

    Each green is snapped to ``min_green + unit * n`` (the decision grid), kept
    within ``[min, max]`` and adjusted so that greens plus lost time stay
    within the cycle where the minimum greens allow it.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    P = len(ratios)
    lo = np.asarray(min_greens, dtype=int)
    hi = np.asarray(max_greens, dtype=int)
    hi = lo + unit * ((hi - lo) // unit)
    G = cycle - lost_time
    share = ratios / ratios.sum() if ratios.sum() > 0 else np.full(P, 1.0 / P)
    raw = np.clip(share * G, lo, hi)
    g = lo + unit * np.floor((raw - lo) / unit + 1e-9).astype(int)
    # grow the phases furthest below their proportional share while it fits;
    # tied phases grow together so equal ratios keep equal greens
    while True:
        deficit = np.where(g + unit <= hi, share * G - g, -np.inf)
        best = deficit.max()
        if not np.isfinite(best):
            break
        tied = np.flatnonzero(deficit >= best - 1e-9)
        if g.sum() + unit * len(tied) > G + 1e-9:
            break
        g[tied] += unit
    # shrink the largest greens if minimum-green rounding overshot the cycle
    while g.sum() > G + 1e-9:
        room = np.where(g - unit >= lo, g - share * G, -np.inf)
        j = int(np.argmax(room))
        if not np.isfinite(room[j]):
            break
        g[j] -= unit
    return [int(v) for v in g]


@dataclass
class WebsterTiming:
    node: str
    ratios: list[float]
    Y: float
    lost_time: float
    cycle: float
    greens: list[int]
    saturated: bool

    @property
    def plan(self) -> FixedTimePlan:
        return FixedTimePlan(list(self.greens))


def design_link_flows(net, demand) -> dict[str, float]:
    """Hourly design volume per link: the peak over time of all routed flow rates."""
    routes = {}
    for f in demand.flows:
        key = (f.origin, f.destination)
        if key not in routes:
            routes[key] = net.shortest_route(*key)
    design: dict[str, float] = {}
    for t in sorted({f.start for f in demand.flows}):
        now: dict[str, float] = {}
        for f in demand.flows:
            if f.active(t):
                for lid in routes[(f.origin, f.destination)]:
                    now[lid] = now.get(lid, 0.0) + f.rate
        for lid, v in now.items():
            design[lid] = max(design.get(lid, 0.0), v)
    return design


def webster_plan(net, demand, cfg: ControllerConfig | None = None) -> dict[str, WebsterTiming]:
    """Fixed-time timing per signalized node from design flows."""
    cfg = cfg or ControllerConfig()
    link_flow = design_link_flows(net, demand)
    out = {}
    for node in net.signalized:
        phases = net.phases[node]
        ratios = []
        for ph in phases:
            links = {net.movement_by_id[m].from_link for m in ph.movements}
            ratios.append(max(link_flow.get(l, 0.0) / (SATURATION_VPH * net.link_by_id[l].lanes)
                              for l in links))
        Y = float(sum(ratios))
        L = float(cfg.clearance * len(phases))
        C, saturated = webster_cycle(L, Y, cfg.cycle_min, cfg.cycle_max)
        if saturated:
            warnings.warn(f"{node}: critical flow ratio sum {Y:.2f} >= 0.95, using maximum cycle",
                          RuntimeWarning, stacklevel=2)
        left = [net.phase_is_left_only(ph) for ph in phases]
        greens = webster_greens(ratios, C, L, [cfg.min_green(x) for x in left],
                                [cfg.max_green(x) for x in left], cfg.green_extension_unit)
        if sum(greens) + L > cfg.cycle_max:
            raise ConfigError(f"{node}: minimum greens do not fit the maximum cycle")
        out[node] = WebsterTiming(node, ratios, Y, L, C, greens, saturated)
    return out


# -- MaxPressure ---------------------------------------------------------------

def phase_pressures(phase_movements, up_queue, down_queue) -> np.ndarray:
    """Pressure per phase: sum over its movements of upstream minus downstream queue."""
    up = np.asarray(up_queue, dtype=np.float64)
    down = np.asarray(down_queue, dtype=np.float64)
    return np.array([float(np.sum(up[list(m)] - down[list(m)])) for m in phase_movements])


def max_pressure_select(phase_movements, up_queue, down_queue) -> int:
    """Phase with the largest pressure; ties go to the lowest index."""
    return int(np.argmax(phase_pressures(phase_movements, up_queue, down_queue)))


def movement_queues(sim) -> tuple[np.ndarray, np.ndarray]:
    """Per-movement upstream queue (vehicles waiting for that movement) and downstream link queue."""
    net = sim.net
    n_mov = len(net.movements)
    to_l = np.array([net.link_index[m.to_link] for m in net.movements], dtype=np.int64)
    C = sim.cap
    j = np.arange(C)
    live = j[None, :] < sim.q_len[:, None]
    slots = (sim.q_head[:, None] + j[None, :]) % C
    veh = np.take_along_axis(sim.queue, slots, axis=1)[live]
    mov = sim.route_movs[sim.v_start[veh] + sim.v_pos[veh]]
    up = np.bincount(mov[mov >= 0], minlength=n_mov).astype(np.float64)[:n_mov]
    down = sim.q_len[to_l].astype(np.float64)
    return up, down

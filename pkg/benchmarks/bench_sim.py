"""Simulator throughput: compiled kernel vs pure-Python fallback.

    python3 benchmarks/bench_sim.py --ticks 1800
"""
from __future__ import annotations

import argparse
import time

from ksddpg.sim import Simulation
from ksddpg.sim.demand import grid_demand
from ksddpg.sim.network import build_grid


def ticks_per_second(rows: int, cols: int, rate: float, ticks: int, backend: str, seed: int = 0) -> float:
    net = build_grid(rows, cols)
    sim = Simulation(net, grid_demand(net, rate), seed, backend=backend)
    n_phases = [len(sim.phase_movements[a]) for a in sim.agent_ids]
    start = time.perf_counter()
    for t in range(ticks):
        # 30 s per phase, cycling; enough to keep queues moving on every approach
        sim.step([(t // 30) % p for p in n_phases])
    return ticks / (time.perf_counter() - start)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ticks", type=int, default=1800)
    ap.add_argument("--rate", type=float, default=750.0, help="entry demand per approach (veh/h)")
    args = ap.parse_args(argv)
    print(f"{'grid':>8} {'python t/s':>12} {'cython t/s':>12} {'speedup':>8}")
    for rows, cols in ((2, 2), (4, 4), (10, 10)):
        py = ticks_per_second(rows, cols, args.rate, args.ticks, "python")
        cy = ticks_per_second(rows, cols, args.rate, args.ticks, "cython")
        print(f"{rows}x{cols:<6} {py:12.0f} {cy:12.0f} {cy / py:8.1f}")


if __name__ == "__main__":
    main()

from __future__ import annotations

import numpy as np
import pytest

from ksddpg.sim.demand import DemandSpec, Flow
from ksddpg.sim.network import Link, Movement, Node, Phase, RoadNetwork

FD_STEP = 1e-6


def central_diff(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Numerical gradient of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


class FixedArrivals:
    """Stand-in generator: ``poisson`` returns scripted counts, one per call."""

    def __init__(self, counts):
        self.counts = list(counts)

    def poisson(self, lam):
        return self.counts.pop(0) if self.counts else 0


def corridor(length_in: float = 200.0, length_out: float = 200.0, lanes: int = 1) -> RoadNetwork:
    """One signalized node S on a west-east corridor plus a south-north cross street."""
    nodes = [Node("W", "boundary", -1, 0), Node("S", "signalized", 0, 0), Node("E", "boundary", 1, 0),
             Node("Sth", "boundary", 0, -1), Node("Nth", "boundary", 0, 1)]
    links = [Link("W-S", "W", "S", length_in, lanes), Link("S-E", "S", "E", length_out, lanes),
             Link("Sth-S", "Sth", "S", length_in, lanes), Link("S-Nth", "S", "Nth", length_out, lanes)]
    movements = [Movement("W-S>S-E", "W-S", "S-E", "through"),
                 Movement("Sth-S>S-Nth", "Sth-S", "S-Nth", "through")]
    phases = {"S": [Phase(0, "S", ("W-S>S-E",)), Phase(1, "S", ("Sth-S>S-Nth",))]}
    return RoadNetwork(nodes, links, movements, phases).validate()


def one_flow(rate: float = 3600.0, start: float = 0.0, end: float = float("inf")) -> DemandSpec:
    return DemandSpec([Flow("W", "E", rate, start, end)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

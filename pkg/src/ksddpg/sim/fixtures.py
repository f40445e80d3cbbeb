"""Builders for the shipped network and demand files under ``sim/data``.

``hetero7`` is a small arterial network with seven signalized intersections
A-G of differing lane counts and phase sets, two stop-sign nodes U1/U2 and
boundary origins/destinations::

          BE_N      BF_N     BU1_N     BG_N
            |         |        |         |
    BE_W -- E ------- F ------ U1 ------ G -- BG_E
            |         |        ^         |
    BA_W -- A ------- B ------ C ------- D -- BD_E
            |         |        |         |
          BA_S      BB_S       |       BD_S
                  BU2_W ----- U2 ----- BU2_E
                               |
                             BU2_S

C is a T-intersection: its north leg is one-way (C -> U1) and it runs three
phases (northbound through; westbound left+through; eastbound through+right).
"""
from __future__ import annotations

from .demand import DemandSpec, piecewise_flows
from .network import (Link, Node, RoadNetwork, approach_phases, build_grid, data_path,
                      derive_movements, link_heading, turn_class)

SPACING = 1500.0
STUB = 1000.0

# approach lane totals per intersection (NB, SB, WB, EB)
APPROACH_LANES = {
    "A": {"N": 2, "S": 2, "W": 4, "E": 4},
    "B": {"N": 2, "S": 2, "W": 5, "E": 5},
    "C": {"N": 1, "W": 5, "E": 3},
    "D": {"N": 5, "S": 3, "W": 5, "E": 3},
    "E": {"N": 2, "S": 4, "W": 4, "E": 3},
    "F": {"N": 3, "S": 4, "W": 1, "E": 2},
    "G": {"N": 3, "S": 2, "W": 3, "E": 5},
}

# C's legal movements per approach heading
C_ALLOWED = {"N": {"through"}, "W": {"left", "through"}, "E": {"through", "right"}}

# time-varying per-lane volume (pcu/h/ln), twelve 300 s bins
HETERO_PROFILE = [332.0, 345.0, 400.0, 520.0, 640.0, 694.0, 694.0, 600.0, 480.0, 400.0, 358.0, 358.0]
HETERO_BIN_S = 300.0
HETERO_CAPACITY = 720.0


def build_hetero7() -> RoadNetwork:
    S, B = SPACING, STUB
    pos = {
        "A": (0, 0), "B": (S, 0), "C": (2 * S, 0), "D": (3 * S, 0),
        "E": (0, S), "F": (S, S), "U1": (2 * S, S), "G": (3 * S, S), "U2": (2 * S, -S),
        "BA_W": (-B, 0), "BA_S": (0, -B), "BB_S": (S, -B), "BD_E": (3 * S + B, 0),
        "BD_S": (3 * S, -B), "BE_W": (-B, S), "BE_N": (0, S + B), "BF_N": (S, S + B),
        "BU1_N": (2 * S, S + B), "BG_N": (3 * S, S + B), "BG_E": (3 * S + B, S),
        "BU2_W": (2 * S - B, -S), "BU2_E": (2 * S + B, -S), "BU2_S": (2 * S, -S - B),
    }

    def kind(n):
        if n in APPROACH_LANES:
            return "signalized"
        return "unsignalized" if n.startswith("U") else "boundary"

    nodes = [Node(n, kind(n), float(x), float(y)) for n, (x, y) in pos.items()]
    two_way = [("A", "B"), ("B", "C"), ("C", "D"), ("E", "F"), ("F", "U1"), ("U1", "G"),
               ("A", "E"), ("B", "F"), ("D", "G"), ("C", "U2"),
               ("A", "BA_W"), ("A", "BA_S"), ("B", "BB_S"), ("D", "BD_E"), ("D", "BD_S"),
               ("E", "BE_W"), ("E", "BE_N"), ("F", "BF_N"), ("U1", "BU1_N"), ("G", "BG_N"),
               ("G", "BG_E"), ("U2", "BU2_W"), ("U2", "BU2_E"), ("U2", "BU2_S")]
    one_way = [("C", "U1")]
    by_id = {n.id: n for n in nodes}

    def make(a, b):
        length = abs(pos[a][0] - pos[b][0]) + abs(pos[a][1] - pos[b][1])
        lanes = 2
        if b in APPROACH_LANES:
            lanes = APPROACH_LANES[b][link_heading(by_id, Link("", a, b, 1.0))]
        return Link(f"{a}-{b}", a, b, float(length), lanes)

    links = []
    for a, b in two_way:
        links.append(make(a, b))
        links.append(make(b, a))
    for a, b in one_way:
        links.append(make(a, b))

    def allow(node, lin, lout):
        if node.kind == "boundary":
            return False
        if node.id == "C":
            h = link_heading(by_id, lin)
            return turn_class(h, link_heading(by_id, lout)) in C_ALLOWED.get(h, set())
        return True

    movements = derive_movements(nodes, links, allow)
    phases = {n.id: approach_phases(n, links, movements, by_id)
              for n in nodes if n.kind == "signalized"}
    return RoadNetwork(nodes, links, movements, phases).validate()


# (origin, destination, share of the per-lane profile level)
HETERO_PAIRS = [
    ("BA_W", "BD_E", 1.5), ("BD_E", "BA_W", 1.5),
    ("BE_W", "BG_E", 1.0), ("BG_E", "BE_W", 1.0),
    ("BA_S", "BE_N", 0.5), ("BE_N", "BA_S", 0.5),
    ("BB_S", "BF_N", 0.5), ("BF_N", "BB_S", 0.5),
    ("BD_S", "BG_N", 0.5), ("BG_N", "BD_S", 0.5),
    ("BU2_S", "BU1_N", 0.3), ("BU2_W", "BD_E", 0.3), ("BD_E", "BU2_E", 0.3),
]


def hetero7_demand() -> DemandSpec:
    spec = piecewise_flows(HETERO_PAIRS, HETERO_PROFILE, HETERO_BIN_S)
    spec.reference_capacity = HETERO_CAPACITY
    spec.profile = list(HETERO_PROFILE)
    spec.bin_s = HETERO_BIN_S
    return spec


def write_shipped_data() -> None:
    build_grid(2, 2).save(data_path("grid2x2.json"))
    build_hetero7().save(data_path("hetero7.json"))
    hetero7_demand().save(data_path("hetero7_demand.json"))


if __name__ == "__main__":
    write_shipped_data()

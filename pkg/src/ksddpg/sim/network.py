"""Road network topology: nodes, links, turn movements and signal phases.

Units are feet and seconds throughout. Networks round-trip through a JSON
file versioned ``"schema": "ksddpg-net-1"``.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from ..errors import ConfigError, SchemaError, ValidationError, json_path

SCHEMA_TAG = "ksddpg-net-1"
MPH_TO_FPS = 5280.0 / 3600.0
FREE_FLOW_FPS = 50.0 * MPH_TO_FPS
SATURATION_VPS = 0.5
VEHICLE_SPACE_FT = 25.0
NODE_KINDS = ("signalized", "unsignalized", "boundary")
MOVEMENT_CLASSES = ("through", "left", "right")
# phase order follows the NB, SB, WB, EB convention
HEADINGS = ("N", "S", "W", "E")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class Link:
    id: str
    from_node: str
    to_node: str
    length: float
    lanes: int = 1
    free_flow_speed: float = FREE_FLOW_FPS
    saturation_flow: float = SATURATION_VPS

    @property
    def travel_ticks(self) -> int:
        """Free-flow traversal time in whole 1 s ticks (at least one)."""
        return max(1, math.ceil(self.length / self.free_flow_speed - 1e-9))

    @property
    def jam_capacity(self) -> int:
        return max(1, int(self.lanes * self.length // VEHICLE_SPACE_FT))


@dataclass(frozen=True)
class Movement:
    id: str
    from_link: str
    to_link: str
    cls: str


@dataclass(frozen=True)
class Phase:
    id: int
    node: str
    movements: tuple[str, ...]


@dataclass
class RoadNetwork:
    nodes: list[Node]
    links: list[Link]
    movements: list[Movement]
    phases: dict[str, list[Phase]] = field(default_factory=dict)

    def __post_init__(self):
        self._index()

    def _index(self) -> None:
        self.node_index = {n.id: i for i, n in enumerate(self.nodes)}
        self.link_index = {l.id: i for i, l in enumerate(self.links)}
        self.movement_index = {m.id: i for i, m in enumerate(self.movements)}
        self.node_by_id = {n.id: n for n in self.nodes}
        self.link_by_id = {l.id: l for l in self.links}
        self.movement_by_id = {m.id: m for m in self.movements}

    def __eq__(self, other) -> bool:
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return (self.nodes == other.nodes and self.links == other.links
                and self.movements == other.movements and self.phases == other.phases)

    @property
    def signalized(self) -> list[str]:
        """Signalized node ids in ascending id order (the agent order)."""
        return sorted(n.id for n in self.nodes if n.kind == "signalized")

    def incoming(self, node_id: str) -> list[str]:
        return [l.id for l in self.links if l.to_node == node_id]

    def outgoing(self, node_id: str) -> list[str]:
        return [l.id for l in self.links if l.from_node == node_id]

    def movement_node(self, movement_id: str) -> str:
        return self.link_by_id[self.movement_by_id[movement_id].from_link].to_node

    def phase_is_left_only(self, phase: Phase) -> bool:
        return all(self.movement_by_id[m].cls == "left" for m in phase.movements)

    def validate(self) -> "RoadNetwork":
        """Check cross-references; raise :class:`ValidationError` on the first defect."""
        if len(self.node_index) != len(self.nodes):
            raise ValidationError("duplicate node id")
        if len(self.link_index) != len(self.links):
            raise ValidationError("duplicate link id")
        if len(self.movement_index) != len(self.movements):
            raise ValidationError("duplicate movement id")
        for n in self.nodes:
            if n.kind not in NODE_KINDS:
                raise ValidationError(f"node {n.id}: unknown kind {n.kind!r}")
        for l in self.links:
            for end in (l.from_node, l.to_node):
                if end not in self.node_index:
                    raise ValidationError(f"link {l.id}: unknown node {end!r}")
            if l.length <= 0 or l.lanes < 1 or l.free_flow_speed <= 0 or l.saturation_flow <= 0:
                raise ValidationError(f"link {l.id}: non-positive geometry or flow")
        for m in self.movements:
            if m.from_link not in self.link_index or m.to_link not in self.link_index:
                raise ValidationError(f"movement {m.id}: unknown link")
            if self.link_by_id[m.from_link].to_node != self.link_by_id[m.to_link].from_node:
                raise ValidationError(f"movement {m.id}: links do not share a node")
            if m.cls not in MOVEMENT_CLASSES:
                raise ValidationError(f"movement {m.id}: unknown class {m.cls!r}")
        for node_id, plist in self.phases.items():
            node = self.node_by_id.get(node_id)
            if node is None:
                raise ValidationError(f"phases reference unknown node {node_id!r}")
            if node.kind != "signalized":
                raise ValidationError(f"phases given for non-signalized node {node_id}")
            for idx, ph in enumerate(plist):
                if ph.id != idx:
                    raise ValidationError(f"node {node_id}: phase ids must be 0..P-1 in order")
                for mid in ph.movements:
                    if mid not in self.movement_index:
                        raise ValidationError(
                            f"node {node_id} phase {ph.id}: unknown movement {mid!r}")
                    if self.movement_node(mid) != node_id:
                        raise ValidationError(
                            f"node {node_id} phase {ph.id}: movement {mid} belongs to another node")
        for node_id in self.signalized:
            if len(self.phases.get(node_id, [])) < 2:
                raise ValidationError(f"signalized node {node_id} needs at least 2 phases")
        return self

    # -- routing ---------------------------------------------------------------

    def shortest_route(self, origin: str, destination: str) -> list[str]:
        """Static shortest free-flow-time link path following legal movements."""
        if origin not in self.node_index or destination not in self.node_index:
            raise ConfigError(f"unknown origin/destination {origin!r}->{destination!r}")
        succ: dict[str, list[str]] = {}
        for m in self.movements:
            succ.setdefault(m.from_link, []).append(m.to_link)
        best: dict[str, float] = {}
        prev: dict[str, str | None] = {}
        heap = []
        for lid in self.outgoing(origin):
            c = self.link_by_id[lid].travel_ticks
            best[lid] = c
            prev[lid] = None
            heapq.heappush(heap, (c, self.link_index[lid], lid))
        while heap:
            cost, _, lid = heapq.heappop(heap)
            if cost > best[lid]:
                continue
            if self.link_by_id[lid].to_node == destination:
                path = [lid]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for nxt in sorted(succ.get(lid, []), key=self.link_index.__getitem__):
                c = cost + self.link_by_id[nxt].travel_ticks
                if c < best.get(nxt, math.inf):
                    best[nxt] = c
                    prev[nxt] = lid
                    heapq.heappush(heap, (c, self.link_index[nxt], nxt))
        raise ConfigError(f"destination {destination!r} unreachable from {origin!r}")

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_TAG,
            "nodes": [asdict(n) for n in self.nodes],
            "links": [
                {"id": l.id, "from": l.from_node, "to": l.to_node, "length_ft": l.length,
                 "lanes": l.lanes, "free_flow_speed_fps": l.free_flow_speed,
                 "saturation_flow_vps": l.saturation_flow}
                for l in self.links
            ],
            "movements": [
                {"id": m.id, "from_link": m.from_link, "to_link": m.to_link, "class": m.cls}
                for m in self.movements
            ],
            "phases": [
                {"node": node_id, "movements": list(ph.movements)}
                for node_id in sorted(self.phases) for ph in self.phases[node_id]
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


NETWORK_SCHEMA = {
    "type": "object",
    "required": ["schema", "nodes", "links", "movements", "phases"],
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "nodes": {"type": "array", "items": {
            "type": "object", "required": ["id", "kind"],
            "properties": {"id": {"type": "string"}, "kind": {"enum": list(NODE_KINDS)},
                           "x": {"type": "number"}, "y": {"type": "number"}}}},
        "links": {"type": "array", "items": {
            "type": "object", "required": ["id", "from", "to", "length_ft"],
            "properties": {"id": {"type": "string"}, "from": {"type": "string"},
                           "to": {"type": "string"},
                           "length_ft": {"type": "number", "exclusiveMinimum": 0},
                           "lanes": {"type": "integer", "minimum": 1},
                           "free_flow_speed_fps": {"type": "number", "exclusiveMinimum": 0},
                           "saturation_flow_vps": {"type": "number", "exclusiveMinimum": 0}}}},
        "movements": {"type": "array", "items": {
            "type": "object", "required": ["id", "from_link", "to_link", "class"],
            "properties": {"id": {"type": "string"}, "from_link": {"type": "string"},
                           "to_link": {"type": "string"},
                           "class": {"enum": list(MOVEMENT_CLASSES)}}}},
        "phases": {"type": "array", "items": {
            "type": "object", "required": ["node", "movements"],
            "properties": {"node": {"type": "string"},
                           "movements": {"type": "array", "items": {"type": "string"}}}}},
    },
}


def network_from_dict(doc: dict) -> RoadNetwork:
    try:
        jsonschema.validate(doc, NETWORK_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.message, json_path(exc.absolute_path)) from None
    nodes = [Node(n["id"], n["kind"], float(n.get("x", 0.0)), float(n.get("y", 0.0)))
             for n in doc["nodes"]]
    links = [Link(l["id"], l["from"], l["to"], float(l["length_ft"]), int(l.get("lanes", 1)),
                  float(l.get("free_flow_speed_fps", FREE_FLOW_FPS)),
                  float(l.get("saturation_flow_vps", SATURATION_VPS)))
             for l in doc["links"]]
    movements = [Movement(m["id"], m["from_link"], m["to_link"], m["class"]) for m in doc["movements"]]
    phases: dict[str, list[Phase]] = {}
    for p in doc["phases"]:
        plist = phases.setdefault(p["node"], [])
        plist.append(Phase(len(plist), p["node"], tuple(p["movements"])))
    return RoadNetwork(nodes, links, movements, phases).validate()


def load_network(path) -> RoadNetwork:
    """Parse and validate a ``ksddpg-net-1`` JSON network file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno})", str(path)) from None
    return network_from_dict(doc)


def data_path(name: str) -> Path:
    return Path(__file__).with_name("data") / name


# -- geometry helpers ----------------------------------------------------------

def heading(a: Node, b: Node) -> str:
    dx, dy = b.x - a.x, b.y - a.y
    if abs(dx) >= abs(dy):
        return "E" if dx > 0 else "W"
    return "N" if dy > 0 else "S"


_LEFT_OF = {"N": "W", "W": "S", "S": "E", "E": "N"}
_RIGHT_OF = {v: k for k, v in _LEFT_OF.items()}
_OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}


def turn_class(h_in: str, h_out: str) -> str | None:
    if h_out == h_in:
        return "through"
    if h_out == _LEFT_OF[h_in]:
        return "left"
    if h_out == _RIGHT_OF[h_in]:
        return "right"
    return None  # U-turn


def link_heading(net_nodes: dict[str, Node], link: Link) -> str:
    return heading(net_nodes[link.from_node], net_nodes[link.to_node])


def derive_movements(nodes: list[Node], links: list[Link], allow=None) -> list[Movement]:
    """All non-U-turn movements between links meeting at a node, by geometry.

    ``allow(node, in_link, out_link)`` can veto individual movements.
    """
    by_id = {n.id: n for n in nodes}
    out: list[Movement] = []
    for lin in links:
        node = by_id[lin.to_node]
        h_in = link_heading(by_id, lin)
        for lout in links:
            if lout.from_node != node.id:
                continue
            cls = turn_class(h_in, link_heading(by_id, lout))
            if cls is None:
                continue
            if allow is not None and not allow(node, lin, lout):
                continue
            out.append(Movement(f"{lin.id}>{lout.id}", lin.id, lout.id, cls))
    return out


def approach_phases(node: Node, links: list[Link], movements: list[Movement],
                    nodes: dict[str, Node]) -> list[Phase]:
    """One phase per approach heading (NB, SB, WB, EB) serving all its movements."""
    by_link = {l.id: l for l in links}
    phases = []
    for h in HEADINGS:
        served = tuple(
            m.id for m in movements
            if by_link[m.from_link].to_node == node.id
            and link_heading(nodes, by_link[m.from_link]) == h
        )
        if served:
            phases.append(Phase(len(phases), node.id, served))
    return phases


def build_grid(rows: int, cols: int, link_length: float = 800.0, demand=None) -> RoadNetwork:
    """Manhattan grid of ``rows x cols`` signalized four-phase intersections.

    Boundary nodes ring the grid: one per external approach plus the four
    corners, which are reached by one-way links from their neighbouring edge
    nodes. If ``demand`` is given its routes are checked up front.
    """
    if rows < 2 or cols < 2:
        raise ConfigError("grid needs rows, cols >= 2")
    R, C = rows + 2, cols + 2
    nodes: list[Node] = []
    kind = {}
    for r in range(R):
        for c in range(C):
            inner = 1 <= r <= rows and 1 <= c <= cols
            on_edge = not inner
            if on_edge and (r in (0, R - 1)) and (c in (0, C - 1)):
                nid = f"C{r:02d}_{c:02d}"
            elif on_edge:
                nid = f"B{r:02d}_{c:02d}"
            else:
                nid = f"I{r:02d}_{c:02d}"
            kind[(r, c)] = nid
            nodes.append(Node(nid, "signalized" if inner else "boundary",
                              c * link_length, -r * link_length))

    def is_inner(r, c):
        return 1 <= r <= rows and 1 <= c <= cols

    links: list[Link] = []
    for r in range(R):
        for c in range(C):
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = r + dr, c + dc
                if r2 >= R or c2 >= C:
                    continue
                a, b = kind[(r, c)], kind[(r2, c2)]
                if is_inner(r, c) or is_inner(r2, c2):
                    links.append(Link(f"{a}-{b}", a, b, link_length))
                    links.append(Link(f"{b}-{a}", b, a, link_length))
    # one-way feeders into the corners
    for (r, c) in ((0, 0), (0, C - 1), (R - 1, 0), (R - 1, C - 1)):
        corner = kind[(r, c)]
        for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            r2, c2 = r + dr, c + dc
            if 0 <= r2 < R and 0 <= c2 < C:
                src = kind[(r2, c2)]
                links.append(Link(f"{src}-{corner}", src, corner, link_length))

    node_by_id = {n.id: n for n in nodes}

    def allow(node, lin, lout):
        if node.kind == "signalized":
            return True
        # edge nodes only pass exiting traffic on into a corner
        return lout.to_node.startswith("C") and node_by_id[lin.from_node].kind == "signalized"

    movements = derive_movements(nodes, links, allow)
    phases = {n.id: approach_phases(n, links, movements, node_by_id)
              for n in nodes if n.kind == "signalized"}
    net = RoadNetwork(nodes, links, movements, phases).validate()
    if demand is not None:
        for f in demand.flows:
            net.shortest_route(f.origin, f.destination)
    return net


def grid_entries(net: RoadNetwork) -> dict[str, list[tuple[str, str]]]:
    """Straight-through (origin, destination) pairs per travel heading.

    Heading ``"S"`` lists the entries on the north edge travelling south, and so on.
    """
    by_id = net.node_by_id
    out: dict[str, list[tuple[str, str]]] = {h: [] for h in HEADINGS}
    edge = [n for n in net.nodes if n.id.startswith("B")]
    for n in edge:
        for lid in net.outgoing(n.id):
            link = net.link_by_id[lid]
            if by_id[link.to_node].kind != "signalized":
                continue
            h = heading(n, by_id[link.to_node])
            # destination: the edge node on the far side of the same row/column
            far = [m for m in edge if m.id != n.id and heading(n, m) == h
                   and (abs(m.x - n.x) < 1e-6 or abs(m.y - n.y) < 1e-6)]
            far.sort(key=lambda m: -abs(m.x - n.x) - abs(m.y - n.y))
            out[h].append((n.id, far[0].id))
    for h in out:
        out[h].sort()
    return out

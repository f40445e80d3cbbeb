"""Origin-destination demand and Poisson arrival generation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from ..errors import ConfigError, SchemaError, json_path

DEMAND_SCHEMA_TAG = "ksddpg-demand-1"


@dataclass(frozen=True)
class Flow:
    origin: str
    destination: str
    rate: float          # vehicles per hour
    start: float = 0.0   # s, inclusive
    end: float = float("inf")  # s, exclusive

    def __post_init__(self):
        if self.rate < 0:
            raise ConfigError(f"flow {self.origin}->{self.destination}: negative rate")
        if not self.start < self.end:
            raise ConfigError(f"flow {self.origin}->{self.destination}: start must precede end")

    def active(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass
class DemandSpec:
    flows: list[Flow] = field(default_factory=list)
    reference_capacity: float | None = None  # pcu/h/ln, used only for V/C labels
    profile: list[float] | None = None       # per-lane volume per time bin (pcu/h/ln)
    bin_s: float | None = None

    def scaled(self, factor: float) -> "DemandSpec":
        return DemandSpec([Flow(f.origin, f.destination, f.rate * factor, f.start, f.end)
                           for f in self.flows], self.reference_capacity,
                          None if self.profile is None else [v * factor for v in self.profile],
                          self.bin_s)

    def rates_at(self, t: float) -> np.ndarray:
        return np.array([f.rate if f.active(t) else 0.0 for f in self.flows])

    def to_dict(self) -> dict:
        flows = []
        for f in self.flows:
            d = asdict(f)
            if d["end"] == float("inf"):
                d["end"] = None
            flows.append(d)
        return {"schema": DEMAND_SCHEMA_TAG, "reference_capacity": self.reference_capacity,
                "profile": self.profile, "bin_s": self.bin_s, "flows": flows}

    def period_labels(self, horizon: int, threshold: float = 0.5) -> list[str] | None:
        """Per-tick V/C period label (I/II/III), or None without a profile."""
        if self.profile is None or self.bin_s is None or self.reference_capacity is None:
            return None
        bins = vc_periods(self.profile, self.reference_capacity, threshold)
        return [bins[min(int(t // self.bin_s), len(bins) - 1)] for t in range(horizon)]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


_DEMAND_SCHEMA = {
    "type": "object",
    "required": ["schema", "flows"],
    "properties": {
        "schema": {"const": DEMAND_SCHEMA_TAG},
        "reference_capacity": {"type": ["number", "null"]},
        "profile": {"type": ["array", "null"], "items": {"type": "number", "minimum": 0}},
        "bin_s": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "flows": {"type": "array", "items": {
            "type": "object", "required": ["origin", "destination", "rate"],
            "properties": {"origin": {"type": "string"}, "destination": {"type": "string"},
                           "rate": {"type": "number", "minimum": 0},
                           "start": {"type": "number"}, "end": {"type": ["number", "null"]}}}},
    },
}


def load_demand(path) -> DemandSpec:
    doc = json.loads(Path(path).read_text())
    try:
        jsonschema.validate(doc, _DEMAND_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.message, json_path(exc.absolute_path)) from None
    flows = [Flow(f["origin"], f["destination"], float(f["rate"]), float(f.get("start", 0.0)),
                  float("inf") if f.get("end") is None else float(f["end"]))
             for f in doc["flows"]]
    return DemandSpec(flows, doc.get("reference_capacity"), doc.get("profile"), doc.get("bin_s"))


def spawn_arrivals(demand: DemandSpec, t: float, rng: np.random.Generator) -> list[int]:
    """Poisson arrivals for the 1 s tick starting at ``t``.

    Returns the index of the originating flow for each new vehicle, in flow order.
    """
    out: list[int] = []
    for i, f in enumerate(demand.flows):
        if f.rate > 0.0 and f.active(t):
            n = int(rng.poisson(f.rate / 3600.0))
            out.extend([i] * n)
    return out


def grid_demand(net, rate_ns: float, rate_ew: float | None = None,
                start: float = 0.0, end: float = float("inf")) -> DemandSpec:
    """Straight-through grid demand given per travel axis in veh/h.

    ``rate_ns`` is the total hourly volume per direction on the north-south
    axis (split evenly over that direction's entry points); ``rate_ew`` the
    same for east-west (defaults to ``rate_ns``).
    """
    from .network import grid_entries

    rate_ew = rate_ns if rate_ew is None else rate_ew
    entries = grid_entries(net)
    flows = []
    for h, pairs in entries.items():
        total = rate_ns if h in ("N", "S") else rate_ew
        for o, d in pairs:
            flows.append(Flow(o, d, total / len(pairs), start, end))
    return DemandSpec(flows)


def piecewise_flows(pairs: list[tuple[str, str, float]], profile: list[float],
                    bin_s: float) -> DemandSpec:
    """Time-varying demand: each (origin, destination, share) flow follows ``profile``.

    ``profile[j]`` is the per-lane volume (pcu/h/ln) during bin ``j``; a pair's
    rate is ``share * profile[j]``.
    """
    flows = []
    for j, level in enumerate(profile):
        for o, d, share in pairs:
            flows.append(Flow(o, d, share * level, j * bin_s, (j + 1) * bin_s))
    return DemandSpec(flows)


def vc_periods(profile: list[float], capacity: float, threshold: float = 0.5) -> list[str]:
    """Label each profile bin I/II/III by volume-to-capacity ratio.

    Bins below ``threshold`` before the first crossing are period I, bins at or
    above it are period II, and low bins after the peak are period III.
    """
    if capacity <= 0:
        raise ConfigError("capacity must be positive")
    labels = []
    seen_high = False
    for level in profile:
        high = level / capacity >= threshold
        if high:
            seen_high = True
            labels.append("II")
        else:
            labels.append("III" if seen_high else "I")
    return labels

"""Per-intersection signal state machine with an acyclic extend/switch action set.

Timeline of one intersection: a phase shows green for at least its minimum
green; from then on a decision point occurs every extension unit, where the
controller either extends the phase or switches to any other phase. A switch
runs yellow then red clearance before the new phase turns green.

Cycle bookkeeping for this acyclic scheme: a cycle closes at a switch when
every phase has been served and the cycle has reached its lower bound, or
when the next phase's clearance plus minimum green would push the cycle past
its upper bound.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .errors import ConfigError, IllegalActionError, UsageError

GREEN, YELLOW, RED = "green", "yellow", "red_clearance"


@dataclass(frozen=True)
class ControllerConfig:
    green_extension_unit: int = 2
    min_green_through: int = 15
    min_green_left: int = 5
    max_green_through: int = 60
    max_green_left: int = 25
    yellow: int = 3
    red_clearance: int = 3
    cycle_min: int = 50
    cycle_max: int = 120

    def __post_init__(self):
        vals = (self.green_extension_unit, self.min_green_through, self.min_green_left,
                self.max_green_through, self.max_green_left, self.yellow, self.red_clearance,
                self.cycle_min, self.cycle_max)
        if any(v <= 0 for v in vals):
            raise ConfigError("all controller durations must be positive")
        if self.min_green_through > self.max_green_through or self.min_green_left > self.max_green_left:
            raise ConfigError("min_green must not exceed max_green")
        if self.cycle_min > self.cycle_max:
            raise ConfigError("cycle_min must not exceed cycle_max")

    @property
    def clearance(self) -> int:
        return self.yellow + self.red_clearance

    def min_green(self, left_only: bool) -> int:
        return self.min_green_left if left_only else self.min_green_through

    def max_green(self, left_only: bool) -> int:
        return self.max_green_left if left_only else self.max_green_through


@dataclass(frozen=True)
class Action:
    kind: str               # "extend" or "switch"
    target: int | None = None

    @classmethod
    def extend(cls) -> "Action":
        return cls("extend")

    @classmethod
    def switch(cls, phase: int) -> "Action":
        return cls("switch", int(phase))

    def __repr__(self) -> str:
        return "Extend" if self.kind == "extend" else f"SwitchTo({self.target})"


EXTEND = Action.extend()


@dataclass
class ControllerState:
    node_id: str
    left_only: tuple[bool, ...]
    current_phase: int = 0
    phase_elapsed: int = 0
    mode: str = GREEN
    transition_target: int | None = None
    transition_elapsed: int = 0
    cycle_elapsed: int = 0
    phases_served: set = field(default_factory=lambda: {0})
    next_decision: int | None = None
    pending: bool = False
    cycles: list = field(default_factory=list)   # completed cycle lengths (s)
    greens: list = field(default_factory=list)   # completed greens as (phase, seconds)

    @property
    def n_phases(self) -> int:
        return len(self.left_only)

    def signal(self) -> int | None:
        """Phase showing green during the coming tick, or None in yellow/red clearance."""
        return self.current_phase if self.mode == GREEN else None


def new_controller(node_id: str, left_only, cfg: ControllerConfig, phase: int = 0) -> ControllerState:
    left_only = tuple(bool(x) for x in left_only)
    if len(left_only) < 2:
        raise ConfigError(f"{node_id}: a controller needs at least two phases")
    st = ControllerState(node_id, left_only, current_phase=phase, phases_served={phase})
    st.next_decision = cfg.min_green(left_only[phase])
    return st


def _bounds(state: ControllerState, cfg: ControllerConfig, phase: int | None = None) -> tuple[int, int]:
    lo = state.left_only[state.current_phase if phase is None else phase]
    return cfg.min_green(lo), cfg.max_green(lo)


def extend_legal(state: ControllerState, cfg: ControllerConfig) -> bool:
    _, gmax = _bounds(state, cfg)
    u = cfg.green_extension_unit
    return state.phase_elapsed + u <= gmax and state.cycle_elapsed + u <= cfg.cycle_max


def legal_actions(state: ControllerState, cfg: ControllerConfig) -> list[Action]:
    """Actions allowed at a decision point: Extend (if within bounds) then every other phase."""
    gmin, _ = _bounds(state, cfg)
    if state.mode != GREEN or state.phase_elapsed < gmin:
        raise UsageError(f"{state.node_id}: no decision possible in mode {state.mode} "
                         f"at elapsed {state.phase_elapsed}")
    out = [EXTEND] if extend_legal(state, cfg) else []
    out.extend(Action.switch(p) for p in range(state.n_phases) if p != state.current_phase)
    return out


def action_mask(state: ControllerState, cfg: ControllerConfig) -> list[bool]:
    """Legality per action index, where index ``current_phase`` means Extend."""
    mask = [True] * state.n_phases
    mask[state.current_phase] = extend_legal(state, cfg)
    return mask


def index_to_action(state: ControllerState, j: int) -> Action:
    return EXTEND if j == state.current_phase else Action.switch(j)


def action_to_index(state: ControllerState, action: Action) -> int:
    return state.current_phase if action.kind == "extend" else int(action.target)


def apply_action(state: ControllerState, action: Action, cfg: ControllerConfig) -> ControllerState:
    """Apply ``action`` in place at a decision point; raises on any violated bound."""
    if state.mode != GREEN:
        raise UsageError(f"{state.node_id}: action during {state.mode}")
    gmin, gmax = _bounds(state, cfg)
    if state.phase_elapsed < gmin:
        raise IllegalActionError("min_green", f"{state.node_id}: min green not yet served")
    u = cfg.green_extension_unit
    if action.kind == "extend":
        if state.phase_elapsed + u > gmax:
            raise IllegalActionError("max_green", f"{state.node_id}: extension exceeds max green")
        if state.cycle_elapsed + u > cfg.cycle_max:
            raise IllegalActionError("cycle_max", f"{state.node_id}: extension exceeds cycle max")
        state.next_decision = state.phase_elapsed + u
        state.pending = False
        return state
    if action.kind != "switch" or action.target is None:
        raise IllegalActionError("action_kind", f"unknown action {action!r}")
    p = action.target
    if not 0 <= p < state.n_phases:
        raise IllegalActionError("phase_index", f"{state.node_id}: no phase {p}")
    if p == state.current_phase:
        raise IllegalActionError("switch_to_current", f"{state.node_id}: switch target is current phase")
    state.greens.append((state.current_phase, state.phase_elapsed))
    next_min = cfg.min_green(state.left_only[p])
    all_served = len(state.phases_served) == state.n_phases
    if (all_served and state.cycle_elapsed >= cfg.cycle_min) or \
            state.cycle_elapsed + cfg.clearance + next_min > cfg.cycle_max:
        state.cycles.append(state.cycle_elapsed)
        state.cycle_elapsed = 0
        state.phases_served = set()
    state.mode = YELLOW
    state.transition_target = p
    state.transition_elapsed = 0
    state.next_decision = None
    state.pending = False
    return state


def fallback_action(state: ControllerState, cfg: ControllerConfig) -> Action:
    """Used when a decision point passes without an action: extend, else round-robin switch."""
    if extend_legal(state, cfg):
        return EXTEND
    return Action.switch((state.current_phase + 1) % state.n_phases)


def settle(state: ControllerState, cfg: ControllerConfig) -> ControllerState:
    """Apply the fallback if the last decision point went unanswered.

    Call before reading :meth:`ControllerState.signal` for the next tick so the
    fallback takes effect on time; :func:`controller_tick` also calls it.
    """
    if state.pending:
        apply_action(state, fallback_action(state, cfg), cfg)
    return state


def controller_tick(state: ControllerState, cfg: ControllerConfig, dt: int = 1) -> tuple[ControllerState, bool]:
    """Advance timers by ``dt`` seconds; report whether a decision point was reached."""
    at_decision = False
    for _ in range(dt):
        settle(state, cfg)
        state.cycle_elapsed += 1
        if state.mode == GREEN:
            state.phase_elapsed += 1
            if state.phase_elapsed == state.next_decision:
                state.pending = True
                at_decision = True
        elif state.mode == YELLOW:
            state.transition_elapsed += 1
            if state.transition_elapsed == cfg.yellow:
                state.mode = RED
                state.transition_elapsed = 0
        else:
            state.transition_elapsed += 1
            if state.transition_elapsed == cfg.red_clearance:
                p = state.transition_target
                state.mode = GREEN
                state.current_phase = p
                state.phase_elapsed = 0
                state.transition_target = None
                state.transition_elapsed = 0
                state.phases_served.add(p)
                state.next_decision = cfg.min_green(state.left_only[p])
    return state, at_decision


# -- fixed-time plans --------------------------------------------------------

@dataclass
class FixedTimePlan:
    """Cyclic plan of green durations run through the normal safety sequencing."""

    greens: list[int]

    def action(self, state: ControllerState, cfg: ControllerConfig) -> Action:
        target = self.greens[state.current_phase]
        if state.phase_elapsed + cfg.green_extension_unit <= target and extend_legal(state, cfg):
            return EXTEND
        return Action.switch((state.current_phase + 1) % state.n_phases)


# -- tracing and audit ---------------------------------------------------------

class ControllerTrace:
    """Rows of ``t,node_id,phase,mode,elapsed`` captured at the start of each tick."""

    HEADER = ["t", "node_id", "phase", "mode", "elapsed"]

    def __init__(self):
        self.rows: list[tuple] = []

    def record(self, t: int, state: ControllerState) -> None:
        elapsed = state.phase_elapsed if state.mode == GREEN else state.transition_elapsed
        self.rows.append((t, state.node_id, state.current_phase if state.mode == GREEN
                          else state.transition_target, state.mode, elapsed))

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            w.writerows(self.rows)


def audit(rows, cfg: ControllerConfig, left_only: dict[str, tuple[bool, ...]],
          cycles: dict[str, list[int]] | None = None) -> list[str]:
    """Check a controller trace against every timing rule; returns violation messages.

    The final (possibly truncated) green of each node is not bound-checked.
    """
    problems: list[str] = []
    by_node: dict[str, list[tuple]] = {}
    seen = set()
    for r in rows:
        t, node = int(r[0]), r[1]
        if (t, node) in seen:
            problems.append(f"{node}: two signal states at t={t}")
        seen.add((t, node))
        by_node.setdefault(node, []).append((t, None if r[2] in (None, "") else int(r[2]), r[3]))
    for node, seq in by_node.items():
        seq.sort()
        runs: list[list] = []   # [mode, phase, length]
        for t, phase, mode in seq:
            if runs and runs[-1][0] == mode and runs[-1][1] == phase:
                runs[-1][2] += 1
            else:
                runs.append([mode, phase, 1])
        for i, (mode, phase, n) in enumerate(runs):
            last = i == len(runs) - 1
            if mode == GREEN:
                if not last:
                    lo = left_only[node][phase]
                    if not cfg.min_green(lo) <= n <= cfg.max_green(lo):
                        problems.append(f"{node}: phase {phase} green {n}s outside bounds")
                    if runs[i + 1][0] != YELLOW:
                        problems.append(f"{node}: green of phase {phase} not followed by yellow")
            elif mode == YELLOW:
                if not last and n != cfg.yellow:
                    problems.append(f"{node}: yellow lasted {n}s")
                if not last and runs[i + 1][0] != RED:
                    problems.append(f"{node}: yellow not followed by red clearance")
            elif mode == RED:
                if not last and n != cfg.red_clearance:
                    problems.append(f"{node}: red clearance lasted {n}s")
                if not last and (runs[i + 1][0] != GREEN or runs[i + 1][1] != phase):
                    problems.append(f"{node}: red clearance not followed by its target green")
            else:
                problems.append(f"{node}: unknown mode {mode!r}")
    for node, lengths in (cycles or {}).items():
        for c in lengths:
            if not cfg.cycle_min <= c <= cfg.cycle_max:
                problems.append(f"{node}: cycle of {c}s outside [{cfg.cycle_min}, {cfg.cycle_max}]")
    return problems

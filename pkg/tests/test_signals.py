from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksddpg.env import TrafficEnv
from ksddpg.errors import ConfigError, IllegalActionError, UsageError
from ksddpg.signals import (EXTEND, Action, ControllerConfig, ControllerTrace, FixedTimePlan,
                            action_mask, action_to_index, apply_action, audit, controller_tick,
                            index_to_action, legal_actions, new_controller, settle)
from ksddpg.sim.demand import grid_demand
from ksddpg.sim.network import build_grid

CFG = ControllerConfig()
FOUR = (False, False, False, False)


def at_first_decision(left_only=FOUR):
    st_ = new_controller("X", left_only, CFG)
    ticks = 0
    while True:
        ticks += 1
        _, dec = controller_tick(st_, CFG)
        if dec:
            return st_, ticks


def test_first_decision_after_min_green():
    st_, ticks = at_first_decision()
    assert ticks == 15 and st_.phase_elapsed == 15
    _, ticks = at_first_decision((True, False))
    assert ticks == 5


def test_fresh_min_green_offers_extend_and_three_switches():
    st_, _ = at_first_decision()
    acts = legal_actions(st_, CFG)
    assert len(acts) == 4 and acts[0] == EXTEND
    assert {a.target for a in acts[1:]} == {1, 2, 3}


def test_extend_moves_decision_by_two_seconds():
    st_, _ = at_first_decision()
    apply_action(st_, EXTEND, CFG)
    assert st_.next_decision == 17
    for _ in range(2):
        _, dec = controller_tick(st_, CFG)
    assert dec and st_.phase_elapsed == 17
    apply_action(st_, EXTEND, CFG)
    controller_tick(st_, CFG)
    _, dec = controller_tick(st_, CFG)
    assert dec and st_.phase_elapsed == 19 and EXTEND in legal_actions(st_, CFG)


def test_extend_absent_at_max_green():
    st_, _ = at_first_decision()
    st_.phase_elapsed = 60
    assert EXTEND not in legal_actions(st_, CFG)
    with pytest.raises(IllegalActionError) as info:
        apply_action(st_, EXTEND, CFG)
    assert info.value.constraint == "max_green"


@pytest.mark.parametrize("cycle,present", [(118, True), (119, False)])
def test_cycle_max_limits_extension(cycle, present):
    st_, _ = at_first_decision()
    st_.cycle_elapsed = cycle
    assert (EXTEND in legal_actions(st_, CFG)) is present
    assert action_mask(st_, CFG)[0] is present


def test_switch_runs_exactly_six_seconds_of_clearance():
    st_, _ = at_first_decision()
    apply_action(st_, Action.switch(2), CFG)
    modes = []
    for _ in range(7):
        modes.append(st_.signal())
        _, dec = controller_tick(st_, CFG)
        assert not dec
    assert modes[:6] == [None] * 6 and modes[6] == 2
    assert st_.current_phase == 2 and st_.phase_elapsed == 1


def test_illegal_actions_name_their_constraint():
    st_ = new_controller("X", FOUR, CFG)
    with pytest.raises(IllegalActionError) as info:
        apply_action(st_, EXTEND, CFG)
    assert info.value.constraint == "min_green"
    st_, _ = at_first_decision()
    with pytest.raises(IllegalActionError) as info:
        apply_action(st_, Action.switch(0), CFG)
    assert info.value.constraint == "switch_to_current"
    with pytest.raises(IllegalActionError) as info:
        apply_action(st_, Action.switch(9), CFG)
    assert info.value.constraint == "phase_index"


def test_legal_actions_mid_transition_is_a_usage_error():
    st_, _ = at_first_decision()
    apply_action(st_, Action.switch(1), CFG)
    with pytest.raises(UsageError):
        legal_actions(st_, CFG)


def test_missing_action_falls_back_to_round_robin_at_max_green():
    st_, _ = at_first_decision()
    seen_switch = False
    for _ in range(200):
        controller_tick(st_, CFG)
        if st_.mode != "green":
            seen_switch = True
            break
    assert seen_switch and st_.transition_target == 1
    # decisions fall on 15, 17, ..., 59; extending past 59 would exceed 60
    assert st_.greens == [(0, 59)]


def test_index_action_mapping_roundtrip():
    st_, _ = at_first_decision()
    for j in range(4):
        assert action_to_index(st_, index_to_action(st_, j)) == j
    assert index_to_action(st_, 0) == EXTEND


def test_config_validation():
    with pytest.raises(ConfigError):
        ControllerConfig(min_green_through=70)
    with pytest.raises(ConfigError):
        ControllerConfig(yellow=0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000), left=st.lists(st.booleans(), min_size=2, max_size=5))
def test_random_policies_never_violate_timing(seed, left):
    rng = np.random.default_rng(seed)
    st_ = new_controller("X", tuple(left), CFG)
    trace = ControllerTrace()
    for t in range(1500):
        settle(st_, CFG)
        trace.record(t, st_)
        _, dec = controller_tick(st_, CFG)
        if dec:
            acts = legal_actions(st_, CFG)
            assert acts
            if rng.random() < 0.8:
                apply_action(st_, acts[rng.integers(len(acts))], CFG)
            # otherwise leave it pending: the fallback must stay legal
    assert audit(trace.rows, CFG, {"X": tuple(left)}, {"X": st_.cycles}) == []
    assert st_.cycles


def test_audit_flags_short_yellow_and_long_green():
    rows = [(t, "X", 0, "green") for t in range(70)] + [(70, "X", 1, "yellow"), (71, "X", 1, "red_clearance"),
                                                       (72, "X", 1, "green")]
    out = audit(rows, CFG, {"X": FOUR})
    assert any("green 70s" in p for p in out)
    assert any("yellow lasted 1s" in p for p in out)
    assert any("cycle of 130s" in p for p in audit([], CFG, {}, {"X": [130]}))


def test_fixed_time_plan_follows_greens():
    plan = FixedTimePlan([21, 15, 31, 15])
    st_, _ = at_first_decision()
    greens = []
    for _ in range(400):
        _, dec = controller_tick(st_, CFG)
        if dec:
            apply_action(st_, plan.action(st_, CFG), CFG)
    greens = [g for _, g in st_.greens]
    phases = [p for p, _ in st_.greens]
    assert phases[:4] == [0, 1, 2, 3]
    assert greens[:4] == [21, 15, 31, 15]


def test_env_trace_audit_over_an_hour_with_a_random_agent():
    net = build_grid(2, 2)
    env = TrafficEnv(net, grid_demand(net, 750.0), horizon=3600, trace=True)
    env.reset(0)
    rng = np.random.default_rng(0)
    while not env.done:
        env.tick()
        acts = {}
        for i, m in enumerate(env.masks()):
            if env.deciding[i]:
                acts[i] = int(rng.choice(np.flatnonzero(m)))
        env.apply(acts)
    assert audit(env.trace.rows, CFG, env.left_only, env.cycles()) == []

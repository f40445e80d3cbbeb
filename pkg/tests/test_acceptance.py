"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The learning experiments (criteria 6, 7 and 10) share one session fixture that
trains KS-DDPG and MADDPG on five paired seeds; expect roughly half an hour on
one core.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

import oracles
from conftest import report
from ksddpg.agents.buffer import ReplayBuffer
from ksddpg.agents.classic import max_pressure_select, movement_queues, webster_cycle
from ksddpg.agents.dqn import dqn_targets
from ksddpg.agents.networks import Critic, KSActor, QNet
from ksddpg.comm import (CommParams, comm_backward, embed, embed_backward, obtain_knowledge, recurrent_cell,
                         update_knowledge)
from ksddpg.harness import io
from ksddpg.harness.config import ALGORITHMS, config_from_dict
from ksddpg.harness.runner import (aggregate_reward, build_env, evaluate_policy, make_policy, run_episode,
                                   train)
from ksddpg.signals import audit
from ksddpg.sim import Simulation
from ksddpg.sim.demand import grid_demand
from ksddpg.sim.network import build_grid

SEEDS = (0, 1, 2, 3, 4)


def grid_doc(alg, rate_ns=750.0, rate_ew=None, horizon=360, episodes=200):
    demand = {"rate_ns": rate_ns} if rate_ew is None else {"rate_ns": rate_ns, "rate_ew": rate_ew}
    return {"config": "ksddpg-exp-1", "network": {"grid": {"rows": 2, "cols": 2}},
            "demand": {"grid": demand}, "algorithm": alg, "episodes": episodes, "horizon": horizon,
            "hyper": {"capacity": 16}}


def random_comm(rng, obs=3, m=4, K=3, scale=0.6) -> CommParams:
    p = CommParams.init(obs, m, K, rng)
    for arr in p.named().values():
        arr[...] = rng.normal(scale=scale, size=arr.shape)
    return p


def linear_loss(fn, up):
    return lambda: float((fn() * up).sum())


# -- 1 --------------------------------------------------------------------------------------

def test_criterion_01_gradient_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(20):
        p = random_comm(rng)
        p.embed.bias[:] = rng.uniform(0.1, 0.5, size=p.embed.bias.shape)
        o = rng.normal(size=(3, 3))
        M = np.abs(rng.normal(size=(2, 4)))
        k = rng.uniform(-1, 1, size=(2, 3))

        up = rng.normal(size=(3, 4))
        _, cache = embed(o, p)
        g = embed_backward(up, cache)
        num = oracles.fd_grads(linear_loss(lambda: embed(o, p)[0], up), {"W_oM": p.embed.weight, "b_M": p.embed.bias, "o": o})
        note("embed", oracles.combined_rel_error(g, num))

        for name, op in (("obtain", obtain_knowledge), ("update", update_knowledge)):
            up = rng.normal(size=(2, 3))
            _, cache = op(M, k, p)
            g = comm_backward(up, cache)
            targets = {n: getattr(p, n) for n in g if n not in ("M", "k")}
            targets.update(M=M, k=k)
            num = oracles.fd_grads(linear_loss(lambda: op(M, k, p)[0], up), targets)
            note(name, oracles.combined_rel_error(g, num))

        actor = KSActor(3, 2, 4, 3, 5, rng)
        for arr in actor.params().values():
            arr[...] = rng.normal(scale=0.5, size=arr.shape)
        kk = rng.uniform(-1, 1, size=(2, 3))
        obs = rng.normal(size=(2, 3))
        up = rng.normal(size=(2, 2))
        logits, cache, _ = actor.forward(obs, kk)
        g = actor.backward(up, cache)
        num = oracles.fd_grads(linear_loss(lambda: actor.forward(obs, kk)[0], up), actor.params())
        note("action head", oracles.combined_rel_error(g, num))

        critic = Critic(6, (5, 4), rng)
        oracles._jitter_biases(rng, [critic])
        inp = rng.normal(size=(3, 6))
        up = rng.normal(size=(3, 1))
        q, cache = critic.forward(inp)
        _, g = critic.backward(up, cache)
        num = oracles.fd_grads(linear_loss(lambda: critic.forward(inp)[0], up), critic.params())
        note("critic", oracles.combined_rel_error(g, num))

        qnet = QNet(4, 3, (5, 4), rng)
        oracles._jitter_biases(rng, [qnet])
        inp = rng.normal(size=(3, 4))
        up = rng.normal(size=(3, 3))
        q, cache = qnet.forward(inp)
        _, g = qnet.backward(up, cache)
        num = oracles.fd_grads(linear_loss(lambda: qnet.forward(inp)[0], up), qnet.params())
        note("dqn head", oracles.combined_rel_error(g, num))

    through = 0
    for n_agents in (1, 2):
        for comm in (True, False):
            for _ in range(5):
                sysm = oracles.micro_ac(rng, n_agents, comm=comm)
                batch = oracles.micro_batch(rng, sysm)
                for i in range(n_agents):
                    _, g = sysm.actor_grads(i, batch)
                    num = oracles.fd_grads(lambda: sysm.actor_grads(i, batch)[0], sysm.actors[i].params())
                    note("actor via critic", oracles.combined_rel_error(g, num))
                    through += 1
    elapsed = time.perf_counter() - start
    ok = (all(v < 1e-5 for k, v in worst.items() if k != "actor via critic")
          and worst["actor via critic"] < 1e-4 and through >= 20 and elapsed < 60)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    report(1, ok, detail)
    assert ok


# -- 2 --------------------------------------------------------------------------------------

def test_criterion_02_gate_identities():
    rng = np.random.default_rng(102)
    keep_err = rnn_err = 0.0
    for _ in range(20):
        p = random_comm(rng, scale=0.3)
        p.b_z[:] = 50.0
        p.b_q[:] = 50.0
        M = np.abs(rng.normal(size=(2, 4)))
        k = rng.uniform(-1, 1, size=(2, 3))
        keep_err = max(keep_err, np.abs(obtain_knowledge(M, k, p)[0] - k).max(),
                       np.abs(update_knowledge(M, k, p)[0] - k).max())
        p = random_comm(rng)
        for w in ("W_Mz", "W_kz", "W_Ml", "W_kl"):
            getattr(p, w)[...] = 0.0
        p.b_z[:] = -1e3
        p.b_l[:] = 1e3
        r, _ = obtain_knowledge(M, k, p)
        rnn_err = max(rnn_err, np.abs(r - recurrent_cell(M, k, p.W_Mk, p.W_kk, p.b_k)).max())
    ok = keep_err < 1e-9 and rnn_err < 1e-12
    report(2, ok, f"keep-gate max err {keep_err:.1e}, RNN degeneration max err {rnn_err:.1e}")
    assert ok


# -- 3 --------------------------------------------------------------------------------------

def test_criterion_03_conservation_and_determinism(tmp_path):
    start = time.perf_counter()
    cfg = config_from_dict(grid_doc("fixed_time", horizon=3600, episodes=1))
    blobs, broken = [], 0
    for k in range(2):
        env = build_env(cfg)
        log = run_episode(env, make_policy(cfg, env, 7), 7, 0, train=False)
        broken += sum(f.spawned != f.in_network + f.exited for f in log.frames)
        assert len(log.frames) == 3600
        path = tmp_path / f"metrics{k}.csv"
        io.write_metrics(path, log, env.agent_ids)
        blobs.append(path.read_bytes())
    elapsed = time.perf_counter() - start
    ok = broken == 0 and blobs[0] == blobs[1] and elapsed < 30
    report(3, ok, f"{broken} conservation breaks over 2x3600 ticks, CSV identical={blobs[0] == blobs[1]}, "
                  f"{elapsed:.1f}s")
    assert ok


# -- 4 --------------------------------------------------------------------------------------

def test_criterion_04_controller_safety():
    problems = {}
    for alg in ALGORITHMS:
        cfg = config_from_dict(grid_doc(alg, horizon=3600, episodes=10))
        env = build_env(cfg, trace=True)
        policy = make_policy(cfg, env, 0)
        # learners explore (train=True); the buffer stays below a batch, so no updates happen
        run_episode(env, policy, 0, 0, train=alg not in ("fixed_time", "max_pressure"))
        problems[alg] = audit(env.trace.rows, cfg.controller, env.left_only, env.cycles())
    ok = all(not v for v in problems.values())
    report(4, ok, ", ".join(f"{a}: {len(v)} violations" for a, v in problems.items()))
    assert ok, problems


# -- 5 --------------------------------------------------------------------------------------

def test_criterion_05_max_pressure_beats_webster():
    start = time.perf_counter()
    queues = {}
    for alg in ("fixed_time", "max_pressure"):
        cfg = config_from_dict(grid_doc(alg, 900.0, 300.0, horizon=3600, episodes=1))
        env = build_env(cfg)
        queues[alg] = [evaluate_policy(env, make_policy(cfg, env, s), s, 1)[0]["avg_queue_veh"] for s in SEEDS]
    wins = sum(m < f for m, f in zip(queues["max_pressure"], queues["fixed_time"]))
    elapsed = time.perf_counter() - start
    ok = wins == 5 and elapsed < 120
    pairs = " ".join(f"{f:.2f}/{m:.2f}" for f, m in zip(queues["fixed_time"], queues["max_pressure"]))
    report(5, ok, f"MaxPressure lower in {wins}/5 seeds (fixed/MP queue: {pairs}); {elapsed:.1f}s")
    assert ok


# -- 6, 7, 10: shared training runs ---------------------------------------------------------

@pytest.fixture(scope="session")
def learning_runs():
    out = {}
    for alg in ("ksddpg", "maddpg"):
        cfg = config_from_dict(grid_doc(alg))
        runs = []
        for s in SEEDS:
            res = train(cfg, s)
            summary, _ = evaluate_policy(res.env, res.policy, s, 3)
            runs.append({"rbar": res.rbar(), "eval_queue": summary["avg_queue_veh"],
                         "wall": float(np.mean([l.wall_time for l in res.logs]))})
        out[alg] = runs
    cfg = config_from_dict(grid_doc("fixed_time"))
    env = build_env(cfg)
    out["fixed_time"] = [evaluate_policy(env, make_policy(cfg, env, s), s, 3)[0]["avg_queue_veh"] for s in SEEDS]
    return out


def test_criterion_06_learning_signal(learning_runs):
    ks = learning_runs["ksddpg"]
    gains = [r["rbar"][-50:].mean() - r["rbar"][:50].mean() for r in ks]
    improved = sum(g > 0 for g in gains)
    ks_q = float(np.mean([r["eval_queue"] for r in ks]))
    ft_q = float(np.mean(learning_runs["fixed_time"]))
    ok = improved >= 4 and ks_q <= ft_q
    report(6, ok, f"last50-first50 Rbar gain > 0 in {improved}/5 seeds "
                  f"({' '.join(f'{g:+.3f}' for g in gains)}); eval queue KS-DDPG {ks_q:.2f} vs fixed-time {ft_q:.2f}")
    assert ok


def test_criterion_07_communication_ablation(learning_runs):
    ks = [r["rbar"][-50:].mean() for r in learning_runs["ksddpg"]]
    ma = [r["rbar"][-50:].mean() for r in learning_runs["maddpg"]]
    wins = sum(a >= b for a, b in zip(ks, ma))
    rel = (np.mean(ks) - np.mean(ma)) / abs(np.mean(ma))
    ok = wins >= 3
    report(7, ok, f"KS-DDPG last-50 Rbar >= MADDPG in {wins}/5 paired seeds; "
                  f"mean {np.mean(ks):.4f} vs {np.mean(ma):.4f} ({rel:+.1%})")
    assert ok


def test_criterion_10_training_cost(learning_runs):
    ks = float(np.mean([r["wall"] for r in learning_runs["ksddpg"]]))
    ma = float(np.mean([r["wall"] for r in learning_runs["maddpg"]]))
    ok = ks <= 1.5 * ma
    report(10, ok, f"per-episode wall time KS-DDPG {ks:.3f}s vs MADDPG {ma:.3f}s (ratio {ks / ma:.2f})")
    assert ok


# -- 8 --------------------------------------------------------------------------------------

def test_criterion_08_replay_buffer():
    buf = ReplayBuffer(100)
    for i in range(250):
        buf.add({"v": np.array([float(i)])})
    fifo = np.array_equal(buf.field("v")[:, 0], np.arange(150, 250))
    rng = np.random.default_rng(108)
    counts = np.zeros(100)
    for _ in range(10_000):
        counts += np.bincount(buf.sample_indices(10, rng), minlength=100)
    sigma = np.sqrt(10_000 * 0.1 * 0.9)
    worst = float(np.abs(counts - 1000).max() / sigma)
    ok = fifo and counts.sum() == 100_000 and worst < 5
    report(8, ok, f"FIFO exact={fifo}; worst frequency deviation {worst:.2f} sigma over 1e5 draws")
    assert ok


# -- 9 --------------------------------------------------------------------------------------

def test_criterion_09_oracle_equivalences():
    rng = np.random.default_rng(109)
    web = 0.0
    cases = 0
    for _ in range(60):
        L = float(rng.integers(2, 6) * 6)
        Y = float(rng.uniform(0.0, 0.99))
        web = max(web, abs(webster_cycle(L, Y)[0] - oracles.webster_cycle_oracle(L, Y)))
        cases += 1

    net = build_grid(2, 2)
    mp_checked = mp_bad = 0
    for seed in range(6):
        sim = Simulation(net, grid_demand(net, 900.0, 500.0), seed)
        r = np.random.default_rng(seed)
        for t in range(500):
            sim.step([int(r.integers(4)) for _ in sim.agent_ids])
            if t % 50 == 49:
                up, down = movement_queues(sim)
                for node in sim.agent_ids:
                    mp_bad += max_pressure_select(sim.phase_movements[node], up, down) != \
                        oracles.max_pressure_oracle(sim, node)
                    mp_checked += 1

    agg = 0.0
    for _ in range(60):
        T, N = int(rng.integers(1, 30)), int(rng.integers(1, 6))
        x = rng.normal(size=(T, N))
        agg = max(agg, abs(aggregate_reward(x) - oracles.aggregate_oracle(x.tolist())))

    tgt = 0.0
    for _ in range(50):
        sysm = oracles.micro_ac(rng, int(rng.integers(1, 4)), comm=bool(rng.random() < 0.5))
        batch = oracles.micro_batch(rng, sysm, S=3)
        for i in range(sysm.N):
            tgt = max(tgt, np.abs(oracles.ddpg_target_batched(sysm, batch, i)
                                  - oracles.ddpg_target_oracle(sysm, batch, i)).max())
    for _ in range(50):
        q = rng.normal(size=(4, 3))
        mask = rng.random((4, 3)) < 0.6
        mask[:, 1] = True
        rr, done = rng.normal(size=4), rng.random(4) < 0.3
        tgt = max(tgt, np.abs(dqn_targets(rr, q, mask, 0.95, done)
                              - oracles.dqn_target_oracle(rr, q, mask, 0.95, done)).max())

    ok = web < 1e-10 and mp_bad == 0 and mp_checked >= 50 and agg < 1e-10 and tgt < 1e-10
    report(9, ok, f"Webster {cases} cases max err {web:.1e}; MaxPressure {mp_checked - mp_bad}/{mp_checked} "
                  f"exact; aggregation max err {agg:.1e}; targets max err {tgt:.1e}")
    assert ok

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import oracles
from ksddpg.errors import ConfigError, SchemaError, VersionError
from ksddpg.harness import cli, io
from ksddpg.harness.config import config_from_dict, load_config
from ksddpg.harness.runner import (aggregate_reward, build_env, evaluate, evaluate_policy,
                                   load_checkpoint, make_policy, run_episode, save_checkpoint,
                                   train)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TINY = {"capacity": 4, "embed_dim": 8, "actor_hidden": 8, "critic_hidden": [16, 8], "batch_size": 16,
        "buffer_size": 1000, "train_every": 5}


def tiny_doc(alg="ksddpg", **kw):
    doc = {"config": "ksddpg-exp-1", "network": {"grid": {"rows": 2, "cols": 2}},
           "demand": {"grid": {"rate_ns": 750}}, "algorithm": alg, "episodes": 3, "horizon": 120,
           "hyper": dict(TINY)}
    doc.update(kw)
    return doc


def write_config(tmp_path, doc, name="cfg.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# -- configuration ------------------------------------------------------------------------

def test_shipped_configs_validate():
    paths = sorted(CONFIGS.glob("*.json"))
    assert len(paths) >= 7
    for p in paths:
        cfg = load_config(p)
        assert cfg.build_network().signalized


def test_schema_errors_carry_a_path():
    with pytest.raises(SchemaError) as info:
        config_from_dict(tiny_doc(episodes=0))
    assert info.value.path == "episodes"
    with pytest.raises(SchemaError):
        config_from_dict(tiny_doc(algorithm="ppo"))
    with pytest.raises(SchemaError):
        config_from_dict({**tiny_doc(), "unknown": 1})


def test_bad_hyper_and_missing_files_are_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict(tiny_doc(hyper={"nope": 1}))
    with pytest.raises(ConfigError):
        config_from_dict(tiny_doc(network={"file": "missing.json"}), base_dir=tmp_path)


def test_overrides_reach_nested_fields():
    cfg = config_from_dict(tiny_doc(), overrides=["hyper.batch_size=32", "horizon=60", "algorithm=maddpg"])
    assert cfg.hyper.batch_size == 32 and cfg.horizon == 60 and cfg.algorithm == "maddpg"
    with pytest.raises(ConfigError):
        config_from_dict(tiny_doc(), overrides=["horizon"])


# -- reward aggregation ------------------------------------------------------------------------

def test_aggregate_reward_examples():
    assert aggregate_reward(np.array([[1.0, 3.0], [2.0, 4.0]])) == pytest.approx(2.5)
    assert aggregate_reward(np.zeros((5, 3))) == 0.0
    assert aggregate_reward(np.array([[7.0]])) == 7.0


def test_aggregate_reward_matches_double_loop():
    rng = np.random.default_rng(0)
    for _ in range(60):
        T, N = int(rng.integers(1, 40)), int(rng.integers(1, 6))
        r = rng.normal(size=(T, N)) * (rng.random((T, N)) < 0.3)
        assert abs(aggregate_reward(r) - oracles.aggregate_oracle(r.tolist())) < 1e-12


def test_episode_rewards_telescope_to_last_decision_delay():
    cfg = config_from_dict(tiny_doc("max_pressure", horizon=300))
    env = build_env(cfg)
    log = run_episode(env, make_policy(cfg, env, 0), 0, 0, train=False)
    assert log.steps == 300 and log.rewards.shape == (300, 4)
    for i in range(4):
        assert len(log.reward_series(i)) == len(log.decisions[i])
        last = log.decisions[i][-1]
        assert log.rewards[:, i].sum() == pytest.approx(-log.frames[last].lane_delay[i], abs=1e-9)


# -- episodes -----------------------------------------------------------------------------

def test_fixed_time_on_empty_demand_has_zero_delay():
    cfg = config_from_dict(tiny_doc("fixed_time", demand={"flows": []}))
    env = build_env(cfg)
    log = run_episode(env, make_policy(cfg, env, 0), 0, 0, train=False)
    assert all(f.delay.sum() == 0 and f.queue.sum() == 0 for f in log.frames)
    assert np.all(log.rewards == 0)


def test_same_seed_gives_identical_logs_and_csv(tmp_path):
    cfg = config_from_dict(tiny_doc())
    outs = []
    for k in range(2):
        res = train(cfg, 3, keep_frames=True)
        path = tmp_path / f"log{k}.csv"
        io.write_training_log(path, res.logs, res.env.n_agents)
        io.write_metrics(tmp_path / f"m{k}.csv", res.logs[-1], res.env.agent_ids)
        outs.append(res)
    a, b = outs
    assert all(np.array_equal(x.rewards, y.rewards) and x.decisions == y.decisions for x, y in zip(a.logs, b.logs))
    assert (tmp_path / "log0.csv").read_bytes() == (tmp_path / "log1.csv").read_bytes()
    assert (tmp_path / "m0.csv").read_bytes() == (tmp_path / "m1.csv").read_bytes()


def test_training_actually_updates_tiny_networks():
    res = train(config_from_dict(tiny_doc()), 0)
    assert any(log.train_stats for log in res.logs)
    assert len(res.policy.system.buffer) > 16


@pytest.mark.parametrize("alg", ["maddpg", "ddpg", "dqn"])
def test_every_learner_runs(alg):
    res = train(config_from_dict(tiny_doc(alg, episodes=2)), 0)
    assert len(res.rbar()) == 2 and np.all(np.isfinite(res.rbar()))


# -- checkpoints and evaluation -----------------------------------------------------------

def test_checkpoint_roundtrip_reproduces_evaluation(tmp_path):
    cfg = config_from_dict(tiny_doc())
    res = train(cfg, 0)
    save_checkpoint(tmp_path / "ck", res.policy, res.env.agent_ids)
    before, _ = evaluate_policy(res.env, res.policy, 0, 1)
    fresh = make_policy(cfg, res.env, 9)
    load_checkpoint(tmp_path / "ck", fresh, res.env.agent_ids)
    after, _ = evaluate_policy(res.env, fresh, 0, 1)
    assert before == after
    via_api, _ = evaluate(cfg, tmp_path / "ck", 1, seed=0)
    assert via_api == before


def test_checkpoint_mismatches_raise_version_errors(tmp_path):
    cfg = config_from_dict(tiny_doc())
    res = train(cfg, 0, episodes=1)
    ck = save_checkpoint(tmp_path / "ck", res.policy, res.env.agent_ids)
    other = config_from_dict(tiny_doc("maddpg"))
    env = build_env(other)
    with pytest.raises(VersionError):
        load_checkpoint(ck, make_policy(other, env, 0), env.agent_ids)
    wide = config_from_dict(tiny_doc(hyper={**TINY, "embed_dim": 12}))
    env = build_env(wide)
    with pytest.raises(VersionError):
        load_checkpoint(ck, make_policy(wide, env, 0), env.agent_ids)
    manifest = json.loads((ck / "manifest.json").read_text())
    (ck / "manifest.json").write_text(json.dumps({**manifest, "format": "old"}))
    with pytest.raises(VersionError):
        load_checkpoint(ck, res.policy, res.env.agent_ids)
    with pytest.raises(ConfigError):
        evaluate(cfg)


def test_evaluation_mutates_neither_checkpoint_nor_buffer(tmp_path):
    cfg = config_from_dict(tiny_doc())
    res = train(cfg, 0)
    ck = save_checkpoint(tmp_path / "ck", res.policy, res.env.agent_ids)
    snapshot = {p.name: p.read_bytes() for p in ck.iterdir()}
    inserted = res.policy.system.buffer.inserted
    tensors = [{k: v.copy() for k, v in res.policy.system.state_tensors(i).items()} for i in range(4)]
    evaluate_policy(res.env, res.policy, 0, 2)
    evaluate(cfg, ck, 1, seed=0)
    assert {p.name: p.read_bytes() for p in ck.iterdir()} == snapshot
    assert res.policy.system.buffer.inserted == inserted
    for i in range(4):
        assert all(np.array_equal(tensors[i][k], v) for k, v in res.policy.system.state_tensors(i).items())


# -- summaries ------------------------------------------------------------------------------

def test_summary_matches_recomputation_from_metrics_csv(tmp_path):
    cfg = config_from_dict(tiny_doc("fixed_time", horizon=200))
    env = build_env(cfg)
    summary, logs = evaluate_policy(env, make_policy(cfg, env, 1), 1, 1)
    io.write_metrics(tmp_path / "m.csv", logs[0], env.agent_ids)
    rows = [r for r in io.read_csv(tmp_path / "m.csv") if r["node_id"] != "NET"]
    q = {}
    for r in rows:
        q.setdefault(int(r["t"]), []).append(float(r["queue_veh"]))
    assert len(q) == 200
    assert summary["avg_queue_veh"] == pytest.approx(np.mean([np.mean(v) for v in q.values()]), abs=1e-9)
    net = [r for r in io.read_csv(tmp_path / "m.csv") if r["node_id"] == "NET"]
    assert summary["avg_reward"] == pytest.approx(np.mean([float(r["reward"]) for r in net]), rel=1e-5)


def test_period_split_on_profiled_demand_is_three_contiguous_blocks():
    cfg = config_from_dict(tiny_doc("fixed_time", network={"builtin": "hetero7"},
                                    demand={"builtin": "hetero7"}, horizon=3600))
    env = build_env(cfg)
    labels = env.demand.period_labels(3600, cfg.period_threshold)
    change = [t for t in range(1, 3600) if labels[t] != labels[t - 1]]
    assert [labels[0], labels[change[0]], labels[change[1]]] == ["I", "II", "III"] and len(change) == 2


def test_summary_reports_period_means():
    cfg = config_from_dict(tiny_doc("fixed_time", network={"builtin": "hetero7"},
                                    demand={"builtin": "hetero7"}, horizon=1800))
    env = build_env(cfg)
    summary, _ = evaluate_policy(env, make_policy(cfg, env, 0), 0, 1)
    assert {"avg_queue_veh[I]", "avg_queue_veh[II]"} <= set(summary)


def test_moving_average_is_trailing_window_five():
    ma = io.moving_average([5, 0, 0, 0, 0, 10])
    assert ma.tolist() == [5.0, 2.5, 5 / 3, 1.25, 1.0, 2.0]


# -- CLI -------------------------------------------------------------------------------------

def test_cli_missing_config_exits_with_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["train", "--config", str(tmp_path / "none.json")])
    assert info.value.code == 2


def test_cli_reports_schema_errors(tmp_path, capsys):
    path = write_config(tmp_path, {**tiny_doc(), "episodes": -1})
    assert cli.main(["train", "--config", str(path)]) == 1
    assert "episodes" in capsys.readouterr().err


def test_cli_train_then_eval(tmp_path, capsys):
    path = write_config(tmp_path, tiny_doc(episodes=2))
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(path), "--seed", "4", "--out", str(out)]) == 0
    sdir = out / "seed_4"
    curve = io.read_csv(sdir / "reward_curve.csv")
    assert list(curve[0]) == io.CURVE_HEADER and len(curve) == 2
    assert list(io.read_csv(sdir / "training_log.csv")[0]) == io.TRAINING_HEADER
    assert (sdir / "checkpoint" / "manifest.json").exists()
    ev = tmp_path / "ev"
    assert cli.main(["eval", "--config", str(sdir / "config.json"), "--checkpoint", str(sdir / "checkpoint"),
                     "--episodes", "1", "--out", str(ev)]) == 0
    metrics = io.read_csv(ev / "metrics.csv")
    assert list(metrics[0]) == io.METRICS_HEADER and len(metrics) == 120 * 5
    assert "avg_queue_veh" in capsys.readouterr().out


def test_cli_compare_writes_table_shape(tmp_path):
    paths = [write_config(tmp_path, tiny_doc(alg), f"{alg}.json") for alg in ("fixed_time", "max_pressure")]
    out = tmp_path / "cmp.csv"
    assert cli.main(["compare", "--configs", *map(str, paths), "--episodes", "1", "--out", str(out)]) == 0
    rows = io.read_csv(out)
    assert list(rows[0]) == io.SUMMARY_HEADER
    assert {r["algorithm"] for r in rows} == {"fixed_time:fixed_time", "max_pressure:max_pressure"}
    assert {r["metric"] for r in rows} >= {"avg_reward", "avg_queue_veh", "avg_delay_s", "avg_speed_fps",
                                           "avg_stops"}

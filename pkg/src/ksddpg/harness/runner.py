"""Episode loop, policies for every algorithm, training, evaluation and checkpoints."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agents.buffer import Transition
from ..agents.classic import movement_queues, phase_pressures, webster_plan
from ..agents.common import ExplorationSchedule
from ..agents.ddpg import ActorCriticSystem, StepStats
from ..agents.dqn import DQNSystem
from ..comm import KnowledgeTrace
from ..env import TrafficEnv
from ..errors import ConfigError, VersionError
from ..signals import EXTEND, Action, extend_legal
from ..sim.core import MetricsFrame
from ..tensor import load_matrices, save_matrices
from .config import LEARNING, ExperimentConfig

CHECKPOINT_FORMAT = "ksddpg-ckpt-1"
EVAL_EPISODE_OFFSET = 1_000_000

# independent random streams per (seed, episode)
STREAM_SIM, STREAM_EXPLORE, STREAM_TRAIN, STREAM_INIT = 0, 1, 2, 3


def episode_rng(seed: int, episode: int, stream: int) -> np.random.Generator:
    """Counter-based stream: any (seed, episode, stream) is reproducible in isolation."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(episode), int(stream)]))


@dataclass
class EpisodeLog:
    episode: int
    frames: list[MetricsFrame]
    rewards: np.ndarray            # T x N, decision-point rewards at their tick, zeros elsewhere
    decisions: list[list[int]]     # decision ticks per agent
    wall_time: float
    train_stats: list = field(default_factory=list)   # one list[StepStats] per train step
    epsilon: float = 0.0
    sigma: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.frames)

    def reward_series(self, agent: int) -> np.ndarray:
        return self.rewards[self.decisions[agent], agent]


# -- policies ------------------------------------------------------------------

class FixedTimePolicy:
    name = "fixed_time"
    learning = False

    def __init__(self, env: TrafficEnv):
        self.timings = webster_plan(env.net, env.demand, env.cfg)
        self.plans = [self.timings[a].plan for a in env.agent_ids]

    def begin_episode(self, env, episode, train, rng):
        pass

    def step(self, env: TrafficEnv) -> None:
        acts = {i: self.plans[i].action(env.controllers[i], env.cfg) for i in np.flatnonzero(env.deciding)}
        env.apply_actions(acts)

    def finish(self, env):
        pass


class MaxPressurePolicy:
    name = "max_pressure"
    learning = False

    def __init__(self, env: TrafficEnv):
        pass

    def begin_episode(self, env, episode, train, rng):
        pass

    def step(self, env: TrafficEnv) -> None:
        deciding = np.flatnonzero(env.deciding)
        if len(deciding) == 0:
            return
        up, down = movement_queues(env.sim)
        acts = {}
        for i in deciding:
            c = env.controllers[i]
            pressure = phase_pressures(env.sim.phase_movements[env.agent_ids[i]], up, down)
            best = int(np.argmax(pressure))
            if best == c.current_phase:
                if extend_legal(c, env.cfg):
                    acts[i] = EXTEND
                    continue
                # max green reached: the strongest other phase
                pressure[best] = -np.inf
                best = int(np.argmax(pressure))
            acts[i] = Action.switch(best)
        env.apply_actions(acts)

    def finish(self, env):
        pass


class LearningPolicy:
    """Drives an actor-critic or DQN system: acting, transition storage and the train cadence.

    An RL step happens at every tick where at least one agent decides. All
    agents act at an RL step (the container is visited in agent order);
    agents not at a decision point are masked to holding their current phase
    and their output is not applied. Each agent's reward is the drop in its
    intersection's average lane delay since the previous RL step.
    """

    def __init__(self, name: str, system, schedule: ExplorationSchedule, trace_knowledge: bool = False):
        self.name = name
        self.system = system
        self.schedule = schedule
        self.learning = True
        self.trace_knowledge = trace_knowledge
        self.knowledge_trace: KnowledgeTrace | None = None

    def begin_episode(self, env, episode, train, rng):
        self.system.reset_episode()
        self.train = train
        self.rng_explore = rng[0]
        self.rng_train = rng[1]
        self.sigma = self.schedule.sigma(episode) if train else 0.0
        self.epsilon = self.schedule.epsilon(episode) if train else 0.0
        self.prev = None
        self.stats: list[list[StepStats]] = []
        if self.trace_knowledge and self.system.container is not None:
            self.knowledge_trace = KnowledgeTrace(self.system.h.capacity)

    def _phi_now(self, phis) -> np.ndarray:
        return np.concatenate(phis) if phis else np.zeros(0)

    def _store(self, x_next, masks_next, phi_next, delay_now, done: bool) -> None:
        if self.prev is None or not self.train:
            return
        x, a_vec, a_idx, phi, masks, delay_prev = self.prev
        tr = Transition(x=x, x_next=x_next, a_vec=np.concatenate(a_vec), a_idx=np.array(a_idx, float),
                        phi=phi, phi_next=phi_next, r=delay_prev - delay_now, done=float(done),
                        mask=np.concatenate(masks).astype(float),
                        mask_next=np.concatenate(masks_next).astype(float))
        buf = self.system.buffer
        buf.add(tr)
        if buf.inserted % self.system.h.train_every == 0:
            out = self.system.train_step(self.rng_train)
            if out is not None:
                self.stats.append(out)

    def step(self, env: TrafficEnv) -> None:
        if not env.deciding.any():
            return
        obs = env.observations()
        masks = env.masks()
        x = np.concatenate(obs)
        delay = env.lane_delay()
        idx, vecs, phis = self.system.act(obs, masks, explore=self.train, rng=self.rng_explore,
                                          sigma=self.sigma, epsilon=self.epsilon,
                                          trace=self.knowledge_trace, t=env.t)
        phi = self._phi_now(phis)
        self._store(x, masks, phi, delay, done=False)
        env.apply({i: idx[i] for i in np.flatnonzero(env.deciding)})
        self.prev = (x, vecs, idx, phi, masks, delay)

    def finish(self, env: TrafficEnv) -> None:
        if self.prev is None:
            return
        obs = env.observations()
        masks = env.masks()
        c = self.system.container
        phi = np.tile(c.k[0], self.system.N) if c is not None else np.zeros(0)
        self._store(np.concatenate(obs), masks, phi, env.lane_delay(), done=True)


def make_policy(cfg: ExperimentConfig, env: TrafficEnv, seed: int, trace_knowledge: bool = False):
    alg = cfg.algorithm
    if alg == "fixed_time":
        return FixedTimePolicy(env)
    if alg == "max_pressure":
        return MaxPressurePolicy(env)
    if env.sim is None:
        env.reset(episode_rng(seed, 0, STREAM_SIM))
    rng = episode_rng(seed, 0, STREAM_INIT)
    schedule = ExplorationSchedule.from_hyper(cfg.episodes, cfg.hyper)
    if alg == "dqn":
        system = DQNSystem(env.obs_sizes, env.n_actions, cfg.hyper, rng)
    else:
        system = ActorCriticSystem(env.obs_sizes, env.n_actions, cfg.hyper, rng,
                                   comm=alg == "ksddpg", centralized=alg != "ddpg")
    return LearningPolicy(alg, system, schedule, trace_knowledge)


# -- episode loop ----------------------------------------------------------------

def run_episode(env: TrafficEnv, policy, seed: int, episode: int, train: bool) -> EpisodeLog:
    """Reset everything, then tick to the horizon, answering decision points in agent order."""
    start = time.perf_counter()
    env.reset(episode_rng(seed, episode, STREAM_SIM))
    policy.begin_episode(env, episode, train,
                         (episode_rng(seed, episode, STREAM_EXPLORE), episode_rng(seed, episode, STREAM_TRAIN)))
    T, N = env.horizon, env.n_agents
    rewards = np.zeros((T, N))
    decisions: list[list[int]] = [[] for _ in range(N)]
    last = np.zeros(N)
    while not env.done:
        env.tick()
        t = env.t - 1
        if env.deciding.any():
            d = env.lane_delay()
            for i in np.flatnonzero(env.deciding):
                rewards[t, i] = last[i] - d[i]
                last[i] = d[i]
                decisions[i].append(t)
        if env.done:
            break
        policy.step(env)
    policy.finish(env)
    log = EpisodeLog(episode, env.frames, rewards, decisions, time.perf_counter() - start)
    if getattr(policy, "learning", False):
        log.train_stats = policy.stats
        log.epsilon, log.sigma = policy.epsilon, policy.sigma
    return log


def aggregate_reward(logs) -> list[float] | float:
    """Average reward per agent per step: ``(1/T) sum_t (1/N) sum_i r_{i,t}``.

    Accepts one reward array (T x N), one :class:`EpisodeLog`, or a list of either.
    """
    def one(item) -> float:
        r = item.rewards if isinstance(item, EpisodeLog) else np.asarray(item, dtype=np.float64)
        if r.size == 0:
            raise ValueError("empty reward tensor")
        if r.ndim == 1:
            r = r[:, None]
        return float(r.mean(axis=1).sum() / r.shape[0])

    if isinstance(logs, (EpisodeLog, np.ndarray)):
        return one(logs)
    logs = list(logs)
    if not logs:
        raise ValueError("no logs to aggregate")
    if np.ndim(logs[0]) == 1 and not isinstance(logs[0], EpisodeLog):
        return one(logs)
    return [one(x) for x in logs]


# -- summaries ---------------------------------------------------------------------

SUMMARY_METRICS = ("avg_reward", "avg_queue_veh", "avg_delay_s", "avg_speed_fps", "avg_stops",
                   "stops_per_vehicle")


def frame_table(log: EpisodeLog) -> dict[str, np.ndarray]:
    """Per-tick spatial means (over intersections) of each metric for one episode."""
    fr = log.frames
    return {
        "avg_reward": log.rewards.mean(axis=1),
        "avg_queue_veh": np.array([f.queue.mean() for f in fr]),
        "avg_delay_s": np.array([f.delay.mean() for f in fr]),
        "avg_speed_fps": np.array([f.network_speed for f in fr]),
        "avg_stops": np.array([f.stops.mean() for f in fr]),
    }


def summarize(logs: list[EpisodeLog], periods: list[str] | None = None) -> dict[str, float]:
    """Spatial mean per tick, averaged over episodes, then over time."""
    tables = [frame_table(l) for l in logs]
    out = {}
    for key in tables[0]:
        series = np.mean([t[key] for t in tables], axis=0)
        out[key] = float(series.mean())
        if periods is not None:
            lab = np.array(periods[: len(series)])
            for p in ("I", "II", "III"):
                sel = lab == p
                if sel.any():
                    out[f"{key}[{p}]"] = float(series[sel].mean())
    out["stops_per_vehicle"] = float(np.mean([
        l.frames[-1].network_stops / max(1, l.frames[-1].spawned) for l in logs]))
    return out


# -- checkpoints ---------------------------------------------------------------------

def save_checkpoint(directory, policy: LearningPolicy, agent_ids, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    system = policy.system
    files = []
    for i, a in enumerate(agent_ids):
        fname = f"agent_{i:03d}_{a}.ckpt"
        save_matrices(directory / fname, system.state_tensors(i), {"agent": a, "index": i})
        files.append(fname)
    manifest = {
        "format": CHECKPOINT_FORMAT, "algorithm": policy.name, "agents": list(agent_ids),
        "files": files, "obs_sizes": list(system.obs_sizes), "n_actions": list(system.n_actions),
        "capacity": system.h.capacity if policy.name == "ksddpg" else None,
        "embed_dim": system.h.embed_dim, **(extra or {}),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return directory


def load_checkpoint(directory, policy: LearningPolicy, agent_ids) -> dict:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise VersionError(f"{directory}: no manifest.json")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise VersionError(f"unsupported checkpoint format {manifest.get('format')!r}")
    system = policy.system
    if manifest["algorithm"] != policy.name:
        raise VersionError(f"checkpoint is for {manifest['algorithm']}, config asks for {policy.name}")
    if (manifest["agents"] != list(agent_ids) or manifest["obs_sizes"] != list(system.obs_sizes)
            or manifest["n_actions"] != list(system.n_actions)):
        raise VersionError("checkpoint agents or shapes do not match the configured network")
    for i, fname in enumerate(manifest["files"]):
        tensors, _ = load_matrices(directory / fname)
        try:
            system.load_tensors(i, tensors)
        except (KeyError, ValueError) as exc:
            raise VersionError(f"incompatible checkpoint tensor: {exc}") from None
    return manifest


# -- training and evaluation -----------------------------------------------------------

def build_env(cfg: ExperimentConfig, trace: bool = False) -> TrafficEnv:
    net = cfg.build_network()
    demand = cfg.build_demand(net)
    return TrafficEnv(net, demand, cfg.controller, cfg.horizon, cfg.backend, cfg.volume, trace)


@dataclass
class TrainResult:
    logs: list[EpisodeLog]
    policy: object
    env: TrafficEnv

    def rbar(self) -> np.ndarray:
        return np.array(aggregate_reward(self.logs))


def train(cfg: ExperimentConfig, seed: int, episodes: int | None = None, callback=None,
          keep_frames: bool = False) -> TrainResult:
    """Run the training episodes for one seed; classic controllers simply run their episodes."""
    env = build_env(cfg)
    policy = make_policy(cfg, env, seed)
    logs = []
    for e in range(cfg.episodes if episodes is None else episodes):
        log = run_episode(env, policy, seed, e, train=True)
        if not keep_frames:
            log.frames = log.frames[-1:]
        logs.append(log)
        if callback is not None:
            callback(log)
    return TrainResult(logs, policy, env)


def evaluate_policy(env: TrafficEnv, policy, seed: int, n_episodes: int,
                    period_threshold: float = 0.5) -> tuple[dict[str, float], list[EpisodeLog]]:
    logs = [run_episode(env, policy, seed, EVAL_EPISODE_OFFSET + e, train=False) for e in range(n_episodes)]
    periods = env.demand.period_labels(env.horizon, period_threshold)
    return summarize(logs, periods), logs


def evaluate(cfg: ExperimentConfig, checkpoint=None, n_eval_episodes: int | None = None,
             seed: int | None = None) -> tuple[dict[str, float], list[EpisodeLog]]:
    """Greedy evaluation; learning algorithms need a checkpoint directory."""
    env = build_env(cfg)
    seed = cfg.seeds[0] if seed is None else seed
    policy = make_policy(cfg, env, seed)
    checkpoint = checkpoint or cfg.checkpoint
    if cfg.algorithm in LEARNING:
        if checkpoint is None:
            raise ConfigError(f"evaluating {cfg.algorithm} needs a checkpoint")
        load_checkpoint(cfg._path(str(checkpoint)), policy, env.agent_ids)
    n = n_eval_episodes or cfg.eval_episodes
    return evaluate_policy(env, policy, seed, n, cfg.period_threshold)

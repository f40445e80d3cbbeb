"""CSV writers for metrics, training logs, summaries and reward curves."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

METRICS_HEADER = ["t", "node_id", "queue_veh", "delay_s", "speed_fps", "stops", "reward"]
TRAINING_HEADER = ["episode", "agent", "avg_reward", "critic_loss", "actor_grad_norm", "epsilon", "sigma"]
SUMMARY_HEADER = ["metric", "algorithm", "value"]
CURVE_HEADER = ["episode", "avg_reward", "moving_avg"]


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = path.open("w", newline="")
    return fh, csv.writer(fh)


def write_metrics(path, log, agent_ids) -> None:
    """One row per intersection per tick plus a network-wide ``NET`` row."""
    fh, w = _writer(path)
    with fh:
        w.writerow(METRICS_HEADER)
        for t, f in enumerate(log.frames):
            r = log.rewards[t]
            for i, a in enumerate(agent_ids):
                w.writerow([t, a, int(f.queue[i]), f"{f.delay[i]:.6g}", f"{f.speed[i]:.6g}",
                            int(f.stops[i]), f"{r[i]:.6g}"])
            w.writerow([t, "NET", int(f.queue.sum()), f"{f.delay.mean():.6g}", f"{f.network_speed:.6g}",
                        int(f.stops.sum()), f"{r.mean():.6g}"])


def write_training_log(path, logs, n_agents: int) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(TRAINING_HEADER)
        for log in logs:
            per_agent = log.rewards.sum(axis=0) / log.rewards.shape[0]
            stats = log.train_stats
            for i in range(n_agents):
                if stats:
                    loss = float(np.mean([s[i].critic_loss for s in stats]))
                    gnorm = float(np.mean([s[i].actor_grad_norm for s in stats]))
                    loss_s, gnorm_s = f"{loss:.6g}", f"{gnorm:.6g}"
                else:
                    loss_s = gnorm_s = ""
                w.writerow([log.episode, i, f"{per_agent[i]:.6g}", loss_s, gnorm_s,
                            f"{log.epsilon:.4g}", f"{log.sigma:.4g}"])


def write_summary(path, summaries: dict[str, dict[str, float]]) -> None:
    """``summaries`` maps algorithm name to its metric dict."""
    fh, w = _writer(path)
    with fh:
        w.writerow(SUMMARY_HEADER)
        for alg, metrics in summaries.items():
            for k, v in metrics.items():
                w.writerow([k, alg, f"{v:.6g}"])


def moving_average(values, window: int = 5) -> np.ndarray:
    """Trailing mean over the last ``window`` values (fewer at the start)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def write_reward_curve(path, rbar, window: int = 5) -> None:
    fh, w = _writer(path)
    ma = moving_average(rbar, window)
    with fh:
        w.writerow(CURVE_HEADER)
        for e, (r, m) in enumerate(zip(rbar, ma)):
            w.writerow([e, f"{r:.6g}", f"{m:.6g}"])


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))

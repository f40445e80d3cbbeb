"""Experiment configuration, episode runner, evaluation and the command line."""
from .config import ExperimentConfig, config_from_dict, load_config
from .runner import (EpisodeLog, aggregate_reward, episode_rng, evaluate, load_checkpoint,
                     run_episode, save_checkpoint, summarize, train)

__all__ = [
    "EpisodeLog", "ExperimentConfig", "aggregate_reward", "config_from_dict", "episode_rng",
    "evaluate", "load_checkpoint", "load_config", "run_episode", "save_checkpoint", "summarize",
    "train",
]

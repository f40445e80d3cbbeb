"""Learning agents (KS-DDPG, MADDPG, DDPG, DQN) and classic controllers."""
from .buffer import ReplayBuffer, Transition
from .classic import max_pressure_select, phase_pressures, webster_cycle, webster_greens, webster_plan
from .common import ExplorationSchedule, Hyper, masked_argmax, masked_softmax
from .ddpg import ActorCriticSystem, ddpg_train_step, ksddpg_train_step, maddpg_train_step
from .dqn import DQNSystem, dqn_train_step
from .networks import Critic, KSActor, PlainActor, QNet

__all__ = [
    "ActorCriticSystem", "Critic", "DQNSystem", "ExplorationSchedule", "Hyper", "KSActor",
    "PlainActor", "QNet", "ReplayBuffer", "Transition", "ddpg_train_step", "dqn_train_step",
    "ksddpg_train_step", "maddpg_train_step", "masked_argmax", "masked_softmax",
    "max_pressure_select", "phase_pressures", "webster_cycle", "webster_greens", "webster_plan",
]

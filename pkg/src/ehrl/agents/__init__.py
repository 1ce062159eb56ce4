"""Learning agents: DQN access control, LSTM battery prediction and the joint network."""
from .combinadic import action_decode, action_encode, n_actions
from .dqn import ActionSpace, AgentParams, dqn_target, dqn_update
from .exploration import EpsilonSchedule, epsilon_greedy_select
from .joint import JointAgent, JointParams, joint_forward, joint_reward, joint_update
from .predictor import HistoryWindow, history_update, predict_batteries, td0_update
from .replay import ReplayBuffer, Transition, replay_push, replay_sample

__all__ = [
    "ActionSpace", "AgentParams", "EpsilonSchedule", "HistoryWindow", "JointAgent", "JointParams",
    "ReplayBuffer", "Transition", "action_decode", "action_encode", "dqn_target", "dqn_update",
    "epsilon_greedy_select", "history_update", "joint_forward", "joint_reward", "joint_update",
    "n_actions", "predict_batteries", "replay_push", "replay_sample", "td0_update",
]

"""MuZero-variant agent: networks, policy updates, training loop."""

from idtlab.agent.config import TrainingConfig
from idtlab.agent.networks import AgentConfig, AgentModel, observation_to_tensor
from idtlab.agent.policy import (
    ExplorationController,
    exploration_loss,
    pairwise_gradients,
    pairwise_policy_loss,
    saturation_frequency,
)
from idtlab.agent.segment import SegmentScale
from idtlab.agent.training import Trainer

__all__ = [
    "TrainingConfig",
    "AgentConfig",
    "AgentModel",
    "observation_to_tensor",
    "ExplorationController",
    "exploration_loss",
    "pairwise_gradients",
    "pairwise_policy_loss",
    "saturation_frequency",
    "SegmentScale",
    "Trainer",
]

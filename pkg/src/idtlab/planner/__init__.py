"""Planning: particle swarm tree search with an MCTS baseline."""

from idtlab.planner.swarm import (
    Particle,
    SwarmConfig,
    plan,
    rollout_particles,
    select_distribution,
    write_trace,
)
from idtlab.planner.mcts import mcts_baseline

__all__ = [
    "Particle",
    "SwarmConfig",
    "plan",
    "rollout_particles",
    "select_distribution",
    "write_trace",
    "mcts_baseline",
]

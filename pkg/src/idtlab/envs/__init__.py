"""Deterministic, seedable desk-scale environments.

BeamGrid is a lane-dodge/shoot game rendered to 48x48 grayscale frames
with a sector side-channel; TwoChoice is an exactly solvable MDP used as
an oracle by planner and criticality tests.
"""

from idtlab.envs.beamgrid import (
    ACTIONS,
    FRAME_SIZE,
    BeamGridConfig,
    BeamGridEnv,
    EnvState,
    Observation,
    StepResult,
)
from idtlab.envs.trajectory import TrajectoryLogger, frame_to_png
from idtlab.envs.twochoice import TwoChoiceEnv, TwoChoiceExactModel, twochoice_exact_q

__all__ = [
    "ACTIONS",
    "FRAME_SIZE",
    "BeamGridConfig",
    "BeamGridEnv",
    "EnvState",
    "Observation",
    "StepResult",
    "TrajectoryLogger",
    "frame_to_png",
    "TwoChoiceEnv",
    "TwoChoiceExactModel",
    "twochoice_exact_q",
]

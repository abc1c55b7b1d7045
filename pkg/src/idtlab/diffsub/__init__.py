"""Differentiable-computation substrate.

First- and second-order gradients, detachment, gradient-scale hooks,
rebalanced layer normalization, the step-limited Adam variant, and the
flat binary checkpoint format.
"""

from idtlab.diffsub.autograd import (
    detach,
    gradient,
    gradient_of_gradient_norm,
    scale_grad_detached,
)
from idtlab.diffsub.checkpoint import load_checkpoint, save_checkpoint
from idtlab.diffsub.optim import StepLimitedAdam
from idtlab.diffsub.rebalance import (
    LayerNormRebalanced,
    RebalanceConfig,
    layer_norm_rebalanced,
    rank_targets,
    rebalance_paused,
)

__all__ = [
    "detach",
    "gradient",
    "gradient_of_gradient_norm",
    "scale_grad_detached",
    "LayerNormRebalanced",
    "RebalanceConfig",
    "layer_norm_rebalanced",
    "rank_targets",
    "rebalance_paused",
    "StepLimitedAdam",
    "save_checkpoint",
    "load_checkpoint",
]

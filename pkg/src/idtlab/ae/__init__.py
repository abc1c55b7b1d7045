"""Adversarial-explanation conditioning, generation, and benchmarking."""

from idtlab.ae.conditioning import (
    conditioning_loss,
    l_adv,
    lipschitz_controller,
    measure_policy_grad_l1,
)
from idtlab.ae.explain import Perturbation, export_bundle, generate_explanation
from idtlab.ae.bench import robustness_rmse_ratio

__all__ = [
    "conditioning_loss",
    "l_adv",
    "lipschitz_controller",
    "measure_policy_grad_l1",
    "Perturbation",
    "export_bundle",
    "generate_explanation",
    "robustness_rmse_ratio",
]

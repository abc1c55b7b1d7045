"""Robustness benchmark: perturbation size needed to flip decisions.

For each scene the target is the model's own runner-up action; the mean
flip RMSE over converged scenes is compared between a conditioned and a
plain model on one shared scene set.
"""

from __future__ import annotations

import numpy as np
import torch

from idtlab.ae.explain import generate_explanation
from idtlab.agent.networks import observation_to_tensor
from idtlab.envs.beamgrid import Observation


@torch.no_grad()
def _runner_up(model, obs: Observation) -> int:
    log_probs, _ = model.prediction(model.represent(observation_to_tensor(obs)[None]))
    order = torch.argsort(log_probs[0], descending=True)
    return int(order[1])


def flip_rmse(model, scenes: list[Observation], budget: int = 500, step_size: float = 1e-2):
    """Per-scene RMSE to flip argmax to the runner-up; NaN when unconverged."""
    out = []
    for obs in scenes:
        target = _runner_up(model, obs)
        pert = generate_explanation(
            model, obs, target, mode="original", budget=budget, step_size=step_size
        )
        out.append(pert.rmse if pert.converged else float("nan"))
    return np.array(out)


def robustness_rmse_ratio(
    model_ae, model_plain, scenes: list[Observation], budget: int = 500
) -> dict:
    """Mean flip-RMSE ratio (conditioned / plain) over the shared scenes.

    Unconverged cases are excluded from the means and counted.
    """
    r_ae = flip_rmse(model_ae, scenes, budget)
    r_plain = flip_rmse(model_plain, scenes, budget)
    ok_ae, ok_plain = ~np.isnan(r_ae), ~np.isnan(r_plain)
    both = ok_ae & ok_plain
    mean_ae = float(np.mean(r_ae[both])) if both.any() else float("nan")
    mean_plain = float(np.mean(r_plain[both])) if both.any() else float("nan")
    return {
        "scenes": len(scenes),
        "paired_converged": int(both.sum()),
        "unconverged_ae": int((~ok_ae).sum()),
        "unconverged_plain": int((~ok_plain).sum()),
        "mean_rmse_ae": mean_ae,
        "mean_rmse_plain": mean_plain,
        "ratio": mean_ae / mean_plain if both.any() else float("nan"),
    }

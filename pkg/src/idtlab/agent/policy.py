"""Pairwise policy update and the exploration controller.

The pairwise gradient on each sampled action's log-probability is
mean(Q) - Q_i, treated as a loss gradient so that descent raises the
probability of above-average-Q actions. It is invariant to constant Q
shifts and exactly stationary for equal-Q pairs; through the softmax and
the sampling frequency the effective probability update scales as
P(1-P)|dQ|, so saturated actions barely move.

Exploration moves log-probability mass from policy samples to uniformly
drawn actions. An integrating controller sets the transfer magnitude so
the observed fraction of policy samples whose probability sits below
uniform tracks rho_target; the integrator step is scaled by
0.5 / rho_target so retuning rho_target keeps the loop speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor


def pairwise_gradients(q: Tensor) -> Tensor:
    """Loss gradient per log-prob: mean(Q) - Q_i. Shape (..., N)."""
    if q.shape[-1] < 2:
        raise ValueError("pairwise update needs at least 2 sampled actions")
    if not torch.isfinite(q).all():
        raise ValueError("Q values must be finite")
    return q.mean(dim=-1, keepdim=True) - q


def pairwise_policy_loss(log_probs: Tensor, q: Tensor) -> Tensor:
    """Scalar loss whose gradient on log_probs[i] is (mean(Q) - Q_i) / N.

    ``log_probs`` are the current policy's log-probabilities of the
    sampled actions; ``q`` their (detached) expected values. Leading
    dimensions are averaged.
    """
    g = pairwise_gradients(q.detach())
    return (g * log_probs).mean(dim=-1).mean()


@dataclass
class ExplorationController:
    rho_target: float = 0.1
    gain: float = 0.01
    magnitude: float = 0.0

    def speed(self) -> float:
        return self.gain * 0.5 / self.rho_target

    def update(self, measured_freq: float) -> float:
        """Integrate (rho_target - measured); magnitude stays >= 0."""
        self.magnitude = max(
            0.0, self.magnitude + self.speed() * (self.rho_target - measured_freq)
        )
        return self.magnitude


def saturation_frequency(policy_log_probs: Tensor, sampled_actions: Tensor) -> float:
    """Fraction of policy samples with probability below uniform."""
    n_actions = policy_log_probs.shape[-1]
    p = policy_log_probs.gather(-1, sampled_actions[..., None]).squeeze(-1).exp()
    return float((p < 1.0 / n_actions).float().mean())


def exploration_loss(
    policy_log_probs: Tensor,
    policy_actions: Tensor,
    uniform_actions: Tensor,
    magnitude: float,
) -> Tensor:
    """Transfer term: descent raises uniform-sample log-probs and lowers
    policy-sample log-probs, scaled by the controller magnitude.

    Exactly zero when the magnitude is zero.
    """
    if magnitude == 0.0:
        return torch.zeros((), dtype=policy_log_probs.dtype)
    lp_policy = policy_log_probs.gather(-1, policy_actions).mean()
    lp_uniform = policy_log_probs.gather(-1, uniform_actions).mean()
    return magnitude * (lp_policy - lp_uniform)

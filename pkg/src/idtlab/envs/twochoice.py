"""TwoChoice: an exactly solvable finite-horizon MDP.

Action A yields 1, action B yields 0, every step for H steps. Closed-form
Q values make it an oracle for the planner and criticality machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def twochoice_exact_q(t: int, horizon: int, gamma: float) -> tuple[float, float]:
    """(Q(A), Q(B)) at step t: Q(A) = sum_{k<H-t} gamma^k, Q(B) = Q(A) - 1."""
    if t >= horizon:
        raise ValueError(f"step {t} is past horizon {horizon}")
    remaining = horizon - t
    if gamma == 1.0:
        q_a = float(remaining)
    else:
        q_a = (1 - gamma**remaining) / (1 - gamma)
    return q_a, q_a - 1.0


@dataclass
class TwoChoiceState:
    t: int


class TwoChoiceExactModel:
    """Planner-style model backed by the true TwoChoice dynamics.

    Latents are (B,) float tensors holding the step index; the horizon is
    absorbing. The value follows the inclusive convention under a uniform
    continuation policy (0.5 per remaining step), and the rollout policy
    is uniform, so a planner running on this adapter is judged purely on
    its reward accounting and selection rule.
    """

    def __init__(self, horizon: int, gamma: float = 1.0):
        import torch

        self._torch = torch
        self.horizon = horizon
        self.gamma = gamma
        self.n_actions = 2

    def initial_latent(self, t: int = 0):
        return self._torch.tensor(float(t), dtype=self._torch.float64)

    def policy_log_probs(self, latents):
        torch = self._torch
        return torch.full((latents.shape[0], 2), math.log(0.5), dtype=torch.float64)

    def step(self, latents, actions):
        torch = self._torch
        alive = latents < self.horizon
        rewards = torch.where(
            alive & (actions == 0), torch.ones_like(latents), torch.zeros_like(latents)
        )
        return latents + alive.to(latents.dtype), rewards

    def value(self, latents):
        torch = self._torch
        remaining = (self.horizon - latents).clamp(min=0)
        if self.gamma == 1.0:
            full = remaining
        else:
            full = (1 - self.gamma**remaining) / (1 - self.gamma)
        return 0.5 * full


class TwoChoiceEnv:
    """Two actions: 0 = A (reward 1), 1 = B (reward 0)."""

    n_actions = 2

    def __init__(self, horizon: int = 3, gamma: float = 1.0):
        self.horizon = horizon
        self.gamma = gamma
        self.t = 0

    def reset(self, seed: int = 0) -> int:
        self.t = 0
        return self.t

    def step(self, action: int) -> tuple[int, float, bool]:
        if self.t >= self.horizon:
            raise RuntimeError("episode finished")
        reward = 1.0 if action == 0 else 0.0
        self.t += 1
        return self.t, reward, self.t >= self.horizon

    def snapshot(self) -> TwoChoiceState:
        return TwoChoiceState(self.t)

    def restore(self, snap: TwoChoiceState) -> None:
        self.t = snap.t

    def exact_q(self, t: int | None = None) -> tuple[float, float]:
        return twochoice_exact_q(self.t if t is None else t, self.horizon, self.gamma)

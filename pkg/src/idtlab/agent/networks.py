"""Representation, dynamics and prediction networks.

The latent is a fixed-width vector. Dynamics consumes (latent, action)
and emits the next latent plus an immediate-reward mixture; gradients
through the incoming latent are halved via the detached scaling so
unrolled credit decays geometrically in both gradient orders. The
prediction head emits action log-probabilities and an inclusive-value
mixture (the value at a latent counts the reward of its next step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from idtlab.diffsub import LayerNormRebalanced, scale_grad_detached
from idtlab.diffsub.checkpoint import load_checkpoint, save_checkpoint
from idtlab.envs.beamgrid import FRAME_SIZE, Observation
from idtlab.gmm import GaussianMixture, expectation

SECTOR_SCALE = 10.0  # sector plane = sector / 10


@dataclass
class AgentConfig:
    latent_dim: int = 128
    n_actions: int = 4
    n_gaussians: int = 3
    conv_channels: tuple[int, int, int] = (16, 32, 48)
    hidden_dim: int = 192
    frame_size: int = FRAME_SIZE
    rebalance_pull: float = 1e-2


def observation_to_tensor(obs: Observation, dtype=torch.float32) -> Tensor:
    """(2, H, W): frame plus a constant sector plane."""
    frame = torch.as_tensor(obs.frame, dtype=dtype)
    sector = torch.full_like(frame, obs.sector / SECTOR_SCALE)
    return torch.stack([frame, sector])


class MixtureHead(nn.Module):
    """Final linear emitting 3N mixture parameters in reward units.

    Keeps its three output groups (means, stddevs, weights) addressable so
    the explanation machinery can read grouped weight-matrix norms.
    """

    def __init__(self, in_dim: int, n_gaussians: int):
        super().__init__()
        self.n = n_gaussians
        self.linear = nn.Linear(in_dim, 3 * n_gaussians)

    def forward(self, h: Tensor) -> GaussianMixture:
        raw = self.linear(h)
        means = raw[..., : self.n]
        stddevs = F.softplus(raw[..., self.n : 2 * self.n]) + 1e-3
        log_weights = raw[..., 2 * self.n :]
        return GaussianMixture(means, stddevs, log_weights)

    def group_weight_rms(self) -> dict[str, float]:
        """Per-group sqrt(mean over rows of sum of squared weights)."""
        w = self.linear.weight.detach()
        out = {}
        for name, sl in (
            ("means", slice(0, self.n)),
            ("stddevs", slice(self.n, 2 * self.n)),
            ("weights", slice(2 * self.n, 3 * self.n)),
        ):
            out[name] = float((w[sl] ** 2).sum(dim=1).mean().sqrt())
        return out


class ReprNet(nn.Module):
    def __init__(self, cfg: AgentConfig):
        super().__init__()
        c1, c2, c3 = cfg.conv_channels
        s = cfg.frame_size
        # stride-4 first conv lines up with the 4px grid cells
        self.conv1 = nn.Conv2d(2, c1, 5, stride=4, padding=2)
        self.ln1 = LayerNormRebalanced((c1, s // 4, s // 4))
        self.conv2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.ln2 = LayerNormRebalanced((c2, s // 8, s // 8))
        self.conv3 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.ln3 = LayerNormRebalanced((c3, s // 16, s // 16))
        self.fc = nn.Linear(c3 * (s // 16) ** 2, cfg.latent_dim)
        self.ln_out = LayerNormRebalanced(cfg.latent_dim)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.ln1(self.conv1(x)))
        h = F.relu(self.ln2(self.conv2(h)))
        h = F.relu(self.ln3(self.conv3(h)))
        return self.ln_out(self.fc(h.flatten(1)))


class DynamicsNet(nn.Module):
    def __init__(self, cfg: AgentConfig):
        super().__init__()
        self.n_actions = cfg.n_actions
        self.fc1 = nn.Linear(cfg.latent_dim + cfg.n_actions, cfg.hidden_dim)
        self.ln1 = LayerNormRebalanced(cfg.hidden_dim)
        self.fc2 = nn.Linear(cfg.hidden_dim, cfg.latent_dim)
        self.ln2 = LayerNormRebalanced(cfg.latent_dim)
        self.reward_head = MixtureHead(cfg.hidden_dim, cfg.n_gaussians)

    def forward(self, latent: Tensor, actions: Tensor) -> tuple[Tensor, GaussianMixture]:
        latent = scale_grad_detached(latent, 0.5)
        onehot = F.one_hot(actions, self.n_actions).to(latent.dtype)
        h = F.relu(self.ln1(self.fc1(torch.cat([latent, onehot], dim=-1))))
        nxt = self.ln2(self.fc2(h))
        return nxt, self.reward_head(h)


class PredictionNet(nn.Module):
    def __init__(self, cfg: AgentConfig):
        super().__init__()
        self.fc = nn.Linear(cfg.latent_dim, cfg.hidden_dim)
        self.ln = LayerNormRebalanced(cfg.hidden_dim)
        self.policy_head = nn.Linear(cfg.hidden_dim, cfg.n_actions)
        self.value_head = MixtureHead(cfg.hidden_dim, cfg.n_gaussians)

    def forward(self, latent: Tensor) -> tuple[Tensor, GaussianMixture]:
        h = F.relu(self.ln(self.fc(latent)))
        log_probs = F.log_softmax(self.policy_head(h), dim=-1)
        return log_probs, self.value_head(h)

    def policy_only(self, latent: Tensor) -> Tensor:
        h = F.relu(self.ln(self.fc(latent)))
        return F.log_softmax(self.policy_head(h), dim=-1)


class _PlannerAdapter:
    """No-grad view of the model for the planner and MCTS."""

    def __init__(self, model: "AgentModel", gamma: float):
        self.model = model
        self.gamma = gamma
        self.n_actions = model.cfg.n_actions

    @torch.no_grad()
    def policy_log_probs(self, latents: Tensor) -> Tensor:
        return self.model.prediction.policy_only(latents)

    @torch.no_grad()
    def step(self, latents: Tensor, actions: Tensor) -> tuple[Tensor, Tensor]:
        nxt, reward_mix = self.model.dynamics(latents, actions)
        return nxt, expectation(reward_mix)

    @torch.no_grad()
    def value(self, latents: Tensor) -> Tensor:
        return expectation(self.model.prediction(latents)[1])


class AgentModel(nn.Module):
    def __init__(self, cfg: AgentConfig | None = None):
        super().__init__()
        self.cfg = cfg or AgentConfig()
        self.representation = ReprNet(self.cfg)
        self.dynamics = DynamicsNet(self.cfg)
        self.prediction = PredictionNet(self.cfg)
        # EfficientZero-style projector for the latent-consistency loss
        self.projector = nn.Sequential(
            nn.Linear(self.cfg.latent_dim, self.cfg.latent_dim),
            nn.ReLU(),
            nn.Linear(self.cfg.latent_dim, self.cfg.latent_dim),
        )
        self._set_rebalance_pull(self.cfg.rebalance_pull)

    def _set_rebalance_pull(self, pull: float) -> None:
        for mod in self.modules():
            if isinstance(mod, LayerNormRebalanced):
                mod.cfg.pull_rate = pull

    # ----------------------------------------------------------- inference

    def represent(self, obs_batch: Tensor) -> Tensor:
        return self.representation(obs_batch)

    @torch.no_grad()
    def represent_observation(self, obs: Observation) -> Tensor:
        return self.represent(observation_to_tensor(obs).unsqueeze(0))[0]

    def one_step_q(self, latents: Tensor, gamma: float) -> Tensor:
        """(B, A) expected Q via one dynamics step: E[r] + gamma E[v']."""
        b = latents.shape[0]
        a = self.cfg.n_actions
        tiled = latents.repeat_interleave(a, dim=0)
        actions = torch.arange(a, device=latents.device).repeat(b)
        nxt, reward_mix = self.dynamics(tiled, actions)
        _, value_mix = self.prediction(nxt)
        q = expectation(reward_mix) + gamma * expectation(value_mix)
        return q.reshape(b, a)

    def planner_model(self, gamma: float) -> _PlannerAdapter:
        return _PlannerAdapter(self, gamma)

    # --------------------------------------------------------- persistence

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}

    def save(self, path) -> None:
        save_checkpoint(path, self.to_arrays())

    def load(self, path) -> None:
        arrays = load_checkpoint(path)
        state = {k: torch.from_numpy(v.copy()) for k, v in arrays.items()}
        missing = set(self.state_dict()) - set(state)
        if missing:
            raise ValueError(f"checkpoint missing parameters: {sorted(missing)[:4]}...")
        self.load_state_dict(state)

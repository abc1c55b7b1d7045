"""Particle swarm tree search.

N_ps particles roll out from the current latent, each step sampling the
learned policy through the dynamics model, accumulating discounted
rewards plus the terminal value expectation. Uniform noise scaled by
c1 * (max Q - min Q) is added per particle and the top N_hat survive; the
empirical distribution of their first actions is the search policy. The
noise trick folds each action sequence's sampling probability into the
selection: sequences the policy likes appear more often and so win more
of the noisy draws, without any visit-count bookkeeping.

Models are anything with ``n_actions``, ``policy_log_probs(latents)``,
``step(latents, actions) -> (latents, rewards)`` and ``value(latents)``,
operating on batched latent tensors. Values follow the inclusive
convention (a latent's value already counts its next step's reward), so
q = sum(gamma^k r_k) + gamma^T v(l_T) backs up with no double counting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch


@dataclass
class SwarmConfig:
    n_particles: int = 128
    depth: int = 5
    n_top: int = 16  # << n_particles
    c1: float = 0.2

    def __post_init__(self):
        if not (1 <= self.n_top <= self.n_particles):
            raise ValueError("need 1 <= n_top <= n_particles")
        if self.c1 < 0:
            raise ValueError("c1 must be >= 0")


@dataclass
class Particle:
    actions: tuple[int, ...]
    q_estimate: float
    log_prob_trace: float


@dataclass
class SwarmTrace:
    particles: list[Particle]
    noise: list[float]
    selected: list[int]
    distribution: list[float]
    config: SwarmConfig = field(repr=False, default=None)


@torch.no_grad()
def rollout_particles(
    latent: torch.Tensor,
    model,
    cfg: SwarmConfig,
    gamma: float,
    rng: torch.Generator,
) -> list[Particle]:
    """Simulate n_particles action sequences of length depth from one latent."""
    n = cfg.n_particles
    latents = latent.unsqueeze(0).expand(n, *latent.shape).contiguous()
    q = torch.zeros(n, dtype=torch.float64)
    trace = torch.zeros(n, dtype=torch.float64)
    actions_seq = torch.zeros(n, cfg.depth, dtype=torch.long)
    for k in range(cfg.depth):
        log_probs = model.policy_log_probs(latents)
        actions = torch.multinomial(log_probs.exp(), 1, generator=rng).squeeze(-1)
        trace += log_probs.gather(-1, actions[:, None]).squeeze(-1).double()
        latents, rewards = model.step(latents, actions)
        q += (gamma**k) * rewards.double()
        actions_seq[:, k] = actions
    q += (gamma**cfg.depth) * model.value(latents).double()
    return [
        Particle(tuple(actions_seq[i].tolist()), float(q[i]), float(trace[i]))
        for i in range(n)
    ]


def select_distribution(
    particles: list[Particle],
    n_actions: int,
    cfg: SwarmConfig,
    rng: torch.Generator,
) -> tuple[np.ndarray, SwarmTrace]:
    """Noisy top-N_hat selection; returns the first-action distribution.

    Zero noise range (all q equal) degrades to a stable index-ordered
    subsample, which keeps ties deterministic.
    """
    if len(particles) < cfg.n_top:
        raise ValueError("need at least n_top particles")
    q = torch.tensor([p.q_estimate for p in particles], dtype=torch.float64)
    spread = float(q.max() - q.min())
    noise = torch.rand(len(particles), generator=rng, dtype=torch.float64)
    noise = noise * cfg.c1 * spread
    scored = q + noise
    # descending, stable in particle index for exact ties
    order = torch.argsort(-scored, stable=True)
    selected = order[: cfg.n_top].tolist()
    counts = np.zeros(n_actions, dtype=np.float64)
    for i in selected:
        counts[particles[i].actions[0]] += 1.0
    dist = counts / counts.sum()
    trace = SwarmTrace(
        particles=particles,
        noise=[float(v) for v in noise],
        selected=selected,
        distribution=dist.tolist(),
        config=cfg,
    )
    return dist, trace


def plan(
    latent: torch.Tensor,
    model,
    cfg: SwarmConfig,
    gamma: float,
    rng: torch.Generator,
) -> tuple[np.ndarray, SwarmTrace]:
    particles = rollout_particles(latent, model, cfg, gamma, rng)
    return select_distribution(particles, model.n_actions, cfg, rng)


def write_trace(trace: SwarmTrace, path: str | Path) -> Path:
    """JSON dump consumed by the what-if view."""
    path = Path(path)
    payload = {
        "schema": "swarm-trace/1",
        "config": {
            "n_particles": trace.config.n_particles,
            "depth": trace.config.depth,
            "n_top": trace.config.n_top,
            "c1": trace.config.c1,
        },
        "particles": [
            {
                "actions": list(p.actions),
                "q_estimate": p.q_estimate,
                "log_prob_trace": p.log_prob_trace,
                "noise": trace.noise[i],
            }
            for i, p in enumerate(trace.particles)
        ],
        "selected": trace.selected,
        "distribution": trace.distribution,
    }
    path.write_text(json.dumps(payload))
    return path

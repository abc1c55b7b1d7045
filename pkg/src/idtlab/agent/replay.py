"""Episode replay with stored search targets.

Frames are stored as uint8 levels (value * 200, exact for the palette the
renderer uses) to keep 100k transitions in memory. Each step also stores
the search policy's surviving (first action, q estimate) pairs and the
search root value, which become the pairwise-policy targets and value
bootstraps at training time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch


def encode_frame(frame: np.ndarray) -> np.ndarray:
    return np.round(frame * 200.0).astype(np.uint8)


def decode_frame(enc: np.ndarray) -> np.ndarray:
    return enc.astype(np.float32) / np.float32(200.0)


@dataclass
class Episode:
    frames: np.ndarray  # (T+1, H, W) uint8
    sectors: np.ndarray  # (T+1,) int16
    actions: np.ndarray  # (T,) int8
    rewards: np.ndarray  # (T,) float32
    search_actions: np.ndarray  # (T, n_top) int8
    search_qs: np.ndarray  # (T, n_top) float32
    search_values: np.ndarray  # (T,) float32
    terminal: bool  # ended by collision (vs. step cap)

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class ReplayBuffer:
    capacity_steps: int = 100_000
    episodes: list[Episode] = field(default_factory=list)
    total_steps: int = 0

    def add(self, ep: Episode) -> None:
        self.episodes.append(ep)
        self.total_steps += ep.length
        while self.episodes and self.total_steps - self.episodes[0].length > self.capacity_steps:
            dropped = self.episodes.pop(0)
            self.total_steps -= dropped.length

    def sample_segment_indices(
        self, batch: int, rng: np.random.Generator
    ) -> list[tuple[int, int]]:
        weights = np.array([ep.length for ep in self.episodes], dtype=np.float64)
        eps = rng.choice(len(self.episodes), size=batch, p=weights / weights.sum())
        return [(int(e), int(rng.integers(0, self.episodes[e].length))) for e in eps]


def build_batch(
    buffer: ReplayBuffer,
    indices: list[tuple[int, int]],
    k_unroll: int,
    n_step: int,
    gamma: float,
    sector_scale: float,
) -> dict[str, torch.Tensor]:
    """Assemble an unroll batch; positions past episode end are absorbing
    (zero reward/value targets, policy masked)."""
    b = len(indices)
    n_top = buffer.episodes[0].search_actions.shape[1]
    hw = buffer.episodes[0].frames.shape[1]
    obs = np.zeros((b, 2, hw, hw), dtype=np.float32)
    target_obs = np.zeros((b, k_unroll, 2, hw, hw), dtype=np.float32)
    actions = np.zeros((b, k_unroll), dtype=np.int64)
    rewards = np.zeros((b, k_unroll), dtype=np.float32)
    value_targets = np.zeros((b, k_unroll + 1), dtype=np.float32)
    pol_actions = np.zeros((b, k_unroll + 1, n_top), dtype=np.int64)
    pol_qs = np.zeros((b, k_unroll + 1, n_top), dtype=np.float32)
    pol_mask = np.zeros((b, k_unroll + 1), dtype=np.float32)
    valid = np.zeros((b, k_unroll), dtype=np.float32)

    for i, (e, t) in enumerate(indices):
        ep = buffer.episodes[e]
        T = ep.length
        obs[i, 0] = decode_frame(ep.frames[t])
        obs[i, 1] = ep.sectors[t] / sector_scale
        for k in range(k_unroll):
            tk = t + k
            if tk < T:
                actions[i, k] = ep.actions[tk]
                rewards[i, k] = ep.rewards[tk]
                valid[i, k] = 1.0
                target_obs[i, k, 0] = decode_frame(ep.frames[tk + 1])
                target_obs[i, k, 1] = ep.sectors[tk + 1] / sector_scale
            else:
                actions[i, k] = 0
        for k in range(k_unroll + 1):
            tk = t + k
            if tk < T:
                value_targets[i, k] = _n_step_target(ep, tk, n_step, gamma)
                pol_actions[i, k] = ep.search_actions[tk]
                pol_qs[i, k] = ep.search_qs[tk]
                pol_mask[i, k] = 1.0

    return {
        "obs": torch.from_numpy(obs),
        "target_obs": torch.from_numpy(target_obs),
        "actions": torch.from_numpy(actions),
        "rewards": torch.from_numpy(rewards),
        "value_targets": torch.from_numpy(value_targets),
        "pol_actions": torch.from_numpy(pol_actions),
        "pol_qs": torch.from_numpy(pol_qs),
        "pol_mask": torch.from_numpy(pol_mask),
        "valid": torch.from_numpy(valid),
    }


def _n_step_target(ep: Episode, t: int, n: int, gamma: float) -> float:
    """Inclusive value target: sum gamma^i r_{t+i} (i < n) + gamma^n * search
    value bootstrap, truncated at episode end."""
    T = ep.length
    g = 0.0
    for i in range(n):
        if t + i >= T:
            return g
        g += (gamma**i) * float(ep.rewards[t + i])
    if t + n < T:
        g += (gamma**n) * float(ep.search_values[t + n])
    elif t + n == T and not ep.terminal:
        # step-cap truncation: bootstrap from the last stored search value
        g += (gamma**n) * float(ep.search_values[T - 1])
    return g

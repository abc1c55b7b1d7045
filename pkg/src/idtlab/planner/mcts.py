"""Visit-count MCTS baseline with pUCT selection and discounted backup.

Reference point for the swarm's speed/quality comparison; one simulation
is one model expansion (a dynamics + prediction call), matching the
swarm's per-particle-step simulation unit.
"""

from __future__ import annotations

import math

import numpy as np
import torch


class _Node:
    __slots__ = ("prior", "latent", "reward", "children", "visits", "value_sum")

    def __init__(self, prior: float):
        self.prior = prior
        self.latent = None
        self.reward = 0.0
        self.children: dict[int, _Node] = {}
        self.visits = 0
        self.value_sum = 0.0

    @property
    def value(self) -> float:
        return self.value_sum / self.visits if self.visits else 0.0

    @property
    def expanded(self) -> bool:
        return bool(self.children)


class _MinMax:
    def __init__(self):
        self.lo = math.inf
        self.hi = -math.inf

    def update(self, v: float):
        self.lo = min(self.lo, v)
        self.hi = max(self.hi, v)

    def normalize(self, v: float) -> float:
        if self.hi > self.lo:
            return (v - self.lo) / (self.hi - self.lo)
        return v


@torch.no_grad()
def mcts_baseline(
    latent: torch.Tensor,
    model,
    budget: int,
    gamma: float,
    c_base: float = 19652.0,
    c_init: float = 1.25,
) -> np.ndarray:
    """Action distribution from visit counts after ``budget`` simulations.

    With no child visits (budget 1 expands only the root) the prior is
    returned unchanged.
    """
    root = _Node(1.0)
    _expand(root, latent, model)
    minmax = _MinMax()

    for _ in range(budget - 1):
        node, path = root, [root]
        while node.expanded:
            node = _select_child(node, minmax, gamma, c_base, c_init)
            path.append(node)
        parent = path[-2]
        action = next(a for a, ch in parent.children.items() if ch is node)
        lat, reward = model.step(
            parent.latent.unsqueeze(0), torch.tensor([action], dtype=torch.long)
        )
        node.reward = float(reward[0])
        _expand(node, lat[0], model)
        # discounted backup; values are inclusive so each edge adds its
        # own reward exactly once
        g = float(model.value(lat)[0])
        for n in reversed(path):
            n.value_sum += g
            n.visits += 1
            if n is not root:
                minmax.update(n.reward + gamma * n.value)
            g = n.reward + gamma * g

    counts = np.zeros(model.n_actions)
    priors = np.zeros(model.n_actions)
    for a, ch in root.children.items():
        counts[a] = ch.visits
        priors[a] = ch.prior
    if counts.sum() == 0:
        return priors / priors.sum()
    return counts / counts.sum()


def _expand(node: _Node, latent: torch.Tensor, model) -> None:
    node.latent = latent
    log_probs = model.policy_log_probs(latent.unsqueeze(0))[0]
    probs = log_probs.exp()
    for a in range(model.n_actions):
        node.children[a] = _Node(float(probs[a]))


def _select_child(
    node: _Node, minmax: _MinMax, gamma: float, c_base: float, c_init: float
) -> _Node:
    total = sum(ch.visits for ch in node.children.values())
    best, best_score = None, -math.inf
    c = c_init + math.log((total + c_base + 1) / c_base)
    for a in sorted(node.children):
        ch = node.children[a]
        q = minmax.normalize(ch.reward + gamma * ch.value) if ch.visits else 0.0
        u = c * ch.prior * math.sqrt(max(total, 1)) / (1 + ch.visits)
        score = q + u
        if score > best_score:
            best, best_score = ch, score
    return best

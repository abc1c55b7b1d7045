"""Mixture representation and the rank-based update rule.

A value/reward network emits 3N parameters per distribution: means and
stddevs in reward units plus raw pre-softmax log-weights. The update rule
ranks components by distance to the sampled target and pulls hard on the
closest one (weight 1) and barely on the rest (1e-3), keeping every
update channel's gradient proportional to how far the closest mean sits
from the data. Exact distance ties share the mean of the weight factors
over the tied rank positions, which is deterministic and keeps identical
components exactly symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor


@dataclass
class RankUpdateConfig:
    w_top: float = 1.0
    w_rest: float = 1e-3
    std_scale: float = 0.1  # stddev utility is for the user, not the policy
    centering: float = 1e-3

    def __post_init__(self):
        if not (self.w_top >= self.w_rest > 0):
            raise ValueError("need w_top >= w_rest > 0")


@dataclass
class GaussianMixture:
    """means/stddevs in reward units; log_weights raw (pre-softmax)."""

    means: Tensor  # (..., N)
    stddevs: Tensor  # (..., N), strictly positive
    log_weights: Tensor  # (..., N)

    def __post_init__(self):
        if not (self.means.shape == self.stddevs.shape == self.log_weights.shape):
            raise ValueError("mixture parameter shapes must match")

    @property
    def n_components(self) -> int:
        return self.means.shape[-1]

    def weights(self) -> Tensor:
        return torch.softmax(self.log_weights, dim=-1)

    def detach(self) -> "GaussianMixture":
        return GaussianMixture(
            self.means.detach(), self.stddevs.detach(), self.log_weights.detach()
        )


def expectation(m: GaussianMixture) -> Tensor:
    """Sum of softmax(log_weights) * means over components."""
    return (m.weights() * m.means).sum(dim=-1)


def density(m: GaussianMixture, x: Tensor | float) -> Tensor:
    x = torch.as_tensor(x, dtype=m.means.dtype)
    z = (x[..., None] - m.means) / m.stddevs
    comp = torch.exp(-0.5 * z * z) / (m.stddevs * math.sqrt(2 * math.pi))
    return (m.weights() * comp).sum(dim=-1)


def sample(m: GaussianMixture, rng: torch.Generator, n: int = 1) -> Tensor:
    """Ancestral sampling: component by weight, then its normal."""
    with torch.no_grad():
        w = m.weights().expand(n, m.n_components)
        idx = torch.multinomial(w, 1, generator=rng).squeeze(-1)
        mu = m.means[..., :].expand(n, -1).gather(-1, idx[:, None]).squeeze(-1)
        sd = m.stddevs[..., :].expand(n, -1).gather(-1, idx[:, None]).squeeze(-1)
        eps = torch.randn(n, generator=rng, dtype=mu.dtype)
        return mu + sd * eps


class _PerComponentGradScale(torch.autograd.Function):
    """Forward identity; backward multiplies each component's gradient by a
    fixed per-component factor (constant, so double backward is clean)."""

    @staticmethod
    def forward(ctx, x: Tensor, factors: Tensor) -> Tensor:
        ctx.save_for_backward(factors)
        return x.clone()

    @staticmethod
    def backward(ctx, grad_out: Tensor):
        (factors,) = ctx.saved_tensors
        return grad_out * factors, None


def rank_weight_factors(means: Tensor, target: Tensor, cfg: RankUpdateConfig) -> Tensor:
    """Per-component weight factors from |mean - target| ranking.

    Shapes: means (..., N), target (...) -> (..., N). Ties share the mean
    factor over the tied rank positions.
    """
    dist = (means - target[..., None]).abs()
    n = means.shape[-1]
    base = torch.full_like(means, cfg.w_rest)
    ranks = torch.argsort(dist, dim=-1, stable=True)
    base.scatter_(
        -1,
        ranks[..., :1],
        torch.full_like(ranks[..., :1], cfg.w_top, dtype=means.dtype),
    )
    sorted_d = dist.gather(-1, ranks)
    tie_rows = (sorted_d[..., 1:] == sorted_d[..., :-1]).any(dim=-1)
    if not bool(tie_rows.any()):
        return base
    # tie groups share the mean factor over their rank positions; rare in
    # float data, so only affected rows take the python path
    sorted_w = base.gather(-1, ranks)
    out_sorted = sorted_w.clone()
    flat_rows = tie_rows.reshape(-1).nonzero().squeeze(-1)
    d_flat = sorted_d.reshape(-1, n)
    o_flat = out_sorted.reshape(-1, n)
    for b in flat_rows.tolist():
        d, o = d_flat[b], o_flat[b]
        i = 0
        while i < n:
            j = i + 1
            while j < n and d[j] == d[i]:
                j += 1
            if j - i > 1:
                o[i:j] = o[i:j].mean()
            i = j
    out = torch.zeros_like(means)
    out.scatter_(-1, ranks, out_sorted.reshape(sorted_w.shape))
    return out


def rank_update_loss(
    m: GaussianMixture, sample_value: Tensor | float, cfg: RankUpdateConfig | None = None
) -> Tensor:
    """Scalar loss with shaped gradients for one sampled target per mixture.

    Three channels, each weighted by (rank factor x detached mixture weight):
      means    - squared pull toward the sample;
      stddevs  - squared pull toward sqrt(sigma^2 + (mu - sample)^2) with the
                 target detached (gradient reaches sigma only), scaled by
                 cfg.std_scale;
      weights  - categorical cross-entropy toward the normalized rank
                 factors, with each raw log-weight's backward gradient
                 multiplied by |E[m] - mu_i| to bring it onto the reward
                 scale, plus a mild centering of the raw outputs.

    Batched: mixture tensors (..., N) with a matching (...) sample tensor
    reduce by mean over the batch.
    """
    cfg = cfg or RankUpdateConfig()
    y = torch.as_tensor(sample_value, dtype=m.means.dtype)
    if not torch.isfinite(y).all():
        raise ValueError("sample must be finite")

    with torch.no_grad():
        w_rank = rank_weight_factors(m.means.detach(), y, cfg)
        pi = torch.softmax(m.log_weights.detach(), dim=-1)
        coeff = w_rank * pi

    mean_loss = (coeff * (m.means - y[..., None]) ** 2).sum(dim=-1)

    with torch.no_grad():
        std_target = torch.sqrt(m.stddevs**2 + (m.means - y[..., None]) ** 2)
    std_loss = cfg.std_scale * (coeff * (m.stddevs - std_target) ** 2).sum(dim=-1)

    with torch.no_grad():
        exp_val = (pi * m.means.detach()).sum(dim=-1, keepdim=True)
        grad_scale = (exp_val - m.means.detach()).abs()
        ce_target = w_rank / w_rank.sum(dim=-1, keepdim=True)
    hooked = _PerComponentGradScale.apply(m.log_weights, grad_scale)
    log_probs = torch.log_softmax(hooked, dim=-1)
    weight_loss = -(ce_target * log_probs).sum(dim=-1)
    centering = cfg.centering * m.log_weights.mean(dim=-1) ** 2

    return (mean_loss + std_loss + weight_loss + centering).mean()

"""Layer normalization with rank-based gradient rebalancing.

Forward is exactly layer norm. During training backward passes, each
pre-normalization value is pulled toward a per-channel rank target

    target = delta_sd * sqrt(2) * erfinv(2R / (1 + N) - 1)

where R is the value's rank within its channel's statistics group
(batch x spatial positions), N the group size, and delta_sd the channel's
(population) standard deviation. All delta_sd are jointly rescaled so the
variance of the targets across every channel is 1. The pull drives every
channel to carry a full spread of activations, the way per-channel batch
statistics would, without changing the forward computation.

The pull is an additive constant on the backward gradient, so input
gradients taken for explanation purposes would be polluted by it; wrap
those passes in :func:`rebalance_paused` (eval mode also disables it).
"""

from __future__ import annotations

import contextlib
import math
import threading
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

_state = threading.local()


def _pull_active() -> bool:
    return not getattr(_state, "paused", False)


@contextlib.contextmanager
def rebalance_paused():
    """Disable the rank pull for backward passes launched inside the block.

    Used around input-gradient computations (adversarial explanations, AE
    conditioning) where the pull term would show up as gradient noise.
    """
    prev = getattr(_state, "paused", False)
    _state.paused = True
    try:
        yield
    finally:
        _state.paused = prev


@dataclass
class RebalanceConfig:
    pull_rate: float = 1e-2
    enabled: bool = True

    def __post_init__(self):
        if self.pull_rate < 0:
            raise ValueError("pull_rate must be >= 0")


def rank_targets(x: Tensor) -> Tensor:
    """Rank targets for a (batch, channel, *spatial) tensor.

    Ranks are 1-based within each channel's statistics group, ties broken
    by stable ordering of the flattened index. Population (ddof=0) standard
    deviations are used for delta_sd and for the joint rescale that sets
    the cross-channel target variance to 1. Returns a tensor shaped like
    ``x``; no gradient flows through it.
    """
    with torch.no_grad():
        b = x.shape[0]
        c = x.shape[1] if x.dim() > 1 else 1
        # group dim: batch and all spatial positions, per channel
        flat = x.reshape(b, c, -1).permute(1, 0, 2).reshape(c, -1)
        n = flat.shape[1]
        if n <= 1:
            return torch.zeros_like(x)
        # stable argsort twice gives 0-based ranks with index tie-breaking
        order = torch.argsort(flat, dim=1, stable=True)
        ranks = torch.empty_like(order)
        ranks.scatter_(
            1, order, torch.arange(n, device=x.device).expand(c, n).contiguous()
        )
        # the erfinv argument only depends on the rank, so one lookup table
        # of n entries serves every channel
        r = torch.arange(1, n + 1, dtype=x.dtype, device=x.device)
        table = math.sqrt(2.0) * torch.erfinv(2.0 * r / (1.0 + n) - 1.0)
        delta_sd = flat.std(dim=1, unbiased=False, keepdim=True)
        targets = delta_sd * table[ranks]
        total_std = targets.std(unbiased=False)
        if total_std > 0:
            targets = targets / total_std
        targets = targets.reshape(c, b, -1).permute(1, 0, 2).reshape(x.shape)
        return targets


class _RankPull(torch.autograd.Function):
    """Identity forward; training backward adds pull_rate*(value - target).

    The added term is a constant w.r.t. the graph, so double backward sees
    it as zero. Whether the pull fires is decided at backward execution
    time, letting a single forward graph serve both the training backward
    (pull on) and explanation gradient passes (pull paused).
    """

    @staticmethod
    def forward(ctx, x: Tensor, pull: Tensor, pull_rate: float) -> Tensor:
        ctx.save_for_backward(pull)
        ctx.pull_rate = pull_rate
        return x.clone()

    @staticmethod
    def backward(ctx, grad_out: Tensor):
        (pull,) = ctx.saved_tensors
        if _pull_active():
            return grad_out + ctx.pull_rate * pull, None, None
        return grad_out, None, None


def layer_norm_rebalanced(
    x: Tensor,
    normalized_shape,
    weight: Tensor | None = None,
    bias: Tensor | None = None,
    eps: float = 1e-5,
    cfg: RebalanceConfig | None = None,
    training: bool = True,
) -> Tensor:
    """Layer norm whose training backward pulls values toward rank targets.

    Forward output is bit-for-bit ``F.layer_norm``. Rebalancing needs a
    statistics group of at least 2 entries per channel; with N=1 the
    targets are undefined and the pull is skipped for that step.
    """
    cfg = cfg or RebalanceConfig()
    group = x.numel() // x.shape[1] if x.dim() > 1 else x.numel()
    if cfg.enabled and training and x.requires_grad and group > 1:
        targets = rank_targets(x)
        x = _RankPull.apply(x, (x.detach() - targets), cfg.pull_rate)
    return F.layer_norm(x, normalized_shape, weight, bias, eps)


class LayerNormRebalanced(torch.nn.Module):
    """Module wrapper; `.training` gates the pull like batch statistics."""

    def __init__(
        self,
        normalized_shape,
        eps: float = 1e-5,
        elementwise_affine: bool = True,
        cfg: RebalanceConfig | None = None,
    ):
        super().__init__()
        if isinstance(normalized_shape, int):
            normalized_shape = (normalized_shape,)
        self.normalized_shape = tuple(normalized_shape)
        self.eps = eps
        self.cfg = cfg or RebalanceConfig()
        if elementwise_affine:
            self.weight = torch.nn.Parameter(torch.ones(self.normalized_shape))
            self.bias = torch.nn.Parameter(torch.zeros(self.normalized_shape))
        else:
            self.register_parameter("weight", None)
            self.register_parameter("bias", None)

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm_rebalanced(
            x,
            self.normalized_shape,
            self.weight,
            self.bias,
            self.eps,
            self.cfg,
            self.training,
        )

    def extra_repr(self) -> str:
        return f"{self.normalized_shape}, pull_rate={self.cfg.pull_rate}"

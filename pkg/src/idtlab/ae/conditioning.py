"""Input-gradient conditioning of the agent during training.

Per batch example one scalar output is drawn (a policy log-prob, a value
expectation, or a reward expectation) at a uniformly random rollout depth
tau, and a sparsity-leaning norm of that scalar's gradient with respect
to the raw [0,1] input is added to the loss. Scale corrections keep the
penalty balanced across heads and depths:

  - the scalar is divided by the (detached) grouped RMS column norm of
    its final layer, cancelling the large weights that reward-unit heads
    grow on top of normalized features;
  - outputs at depth tau are pre-scaled by 2^tau so the gradient seen by
    the norm is not shrunk by the per-step 0.5 dynamics gradient scaling,
    and the computed loss is divided by (2^tau)^q afterwards so the
    term keeps the same geometric depth discount as every other loss;
  - policy-head terms are additionally scaled by 0.25 * rho_target,
    compensating the saturation shrinkage of policy gradients.

Regularization strength is a multiplicative-integral controller driving
the measured per-pixel L1 input-gradient magnitude of the chosen action's
log-probability toward a target.
"""

from __future__ import annotations

import torch
from torch import Tensor

from idtlab.diffsub import rebalance_paused
from idtlab.gmm import expectation


def l_adv(g: Tensor, z: float = 1.25, q: float = 1.0, dims=None) -> Tensor:
    """(sum |g|^z)^(q/z); z slightly above 1 rewards sparse gradients."""
    if dims is None:
        return (g.abs() ** z).sum() ** (q / z)
    return (g.abs() ** z).sum(dim=dims) ** (q / z)


def lipschitz_controller(measured_l1: float, lam: float, cfg) -> float:
    """lam * exp(gain * (measured - target) / target); fixed point at target."""
    if measured_l1 < 0:
        raise ValueError("measured L1 must be >= 0")
    import math

    ratio = (measured_l1 - cfg.grad_l1_target) / cfg.grad_l1_target
    return lam * math.exp(cfg.controller_gain * ratio)


def measure_policy_grad_l1(model, obs: Tensor, rng: torch.Generator, max_examples: int = 8) -> float:
    """Mean per-pixel |d log pi(argmax) / d input| over a batch subsample."""
    x = obs[:max_examples].detach().clone().requires_grad_(True)
    with rebalance_paused():
        log_probs, _ = model.prediction(model.represent(x))
        chosen = log_probs.detach().argmax(dim=-1)
        scalar = log_probs.gather(-1, chosen[:, None]).sum()
        (g,) = torch.autograd.grad(scalar, x)
    return float(g.abs().mean(dim=(1, 2, 3)).mean())


def conditioning_loss(
    obs: Tensor,
    log_probs_k: list[Tensor],
    value_mix_k: list,
    reward_mix_k: list,
    model,
    ae_cfg,
    rho_target: float,
    rng: torch.Generator,
) -> Tensor:
    """Mean adversarial-conditioning term over the batch.

    ``obs`` must require grad and be the same tensor the unroll consumed;
    the prediction/reward tensors are the unroll's graph nodes, reused so
    no extra forward pass is needed. Raises at call time if the graph
    cannot provide second-order gradients.
    """
    if not obs.requires_grad:
        raise RuntimeError("conditioning requires obs.requires_grad=True at unroll time")
    b = obs.shape[0]
    k_max = len(reward_mix_k)  # prediction lists have k_max + 1 entries

    taus = torch.randint(0, k_max + 1, (b,), generator=rng)
    head_draw = torch.randint(0, 3, (b,), generator=rng)
    head_draw[taus == 0] = head_draw[taus == 0] % 2  # no reward output at tau 0
    rand_actions = torch.randint(0, log_probs_k[0].shape[-1], (b,), generator=rng)

    policy_rms = float(
        (model.prediction.policy_head.weight.detach() ** 2).sum(dim=1).mean().sqrt()
    )
    value_rms = model.prediction.value_head.group_weight_rms()["means"]
    reward_rms = model.dynamics.reward_head.group_weight_rms()["means"]

    # (K+1, B) tables of candidate scalars, gathered per example
    idx = torch.arange(b)
    policy_tab = torch.stack(
        [lp.gather(-1, rand_actions[:, None]).squeeze(-1) for lp in log_probs_k]
    )
    value_tab = torch.stack([expectation(vm) for vm in value_mix_k])
    reward_tab = torch.stack([expectation(rm) for rm in reward_mix_k])

    tau_safe = taus.clamp(min=1) - 1
    scalars = torch.where(
        head_draw == 0,
        policy_tab[taus, idx],
        torch.where(head_draw == 1, value_tab[taus, idx], reward_tab[tau_safe, idx]),
    )
    rms = torch.tensor(
        [policy_rms, value_rms, reward_rms], dtype=obs.dtype
    ).clamp(min=1e-6)[head_draw]
    weights = torch.where(
        head_draw == 0,
        torch.full((b,), ae_cfg.policy_smoothing_factor * rho_target, dtype=obs.dtype),
        torch.ones(b, dtype=obs.dtype),
    )
    total = (scalars * (2.0 ** taus.to(obs.dtype)) / rms).sum()

    with rebalance_paused():
        (g,) = torch.autograd.grad(total, obs, create_graph=True)

    per_example = l_adv(g.reshape(b, -1), ae_cfg.z, ae_cfg.q, dims=-1)
    divisor = (2.0 ** taus.to(obs.dtype)) ** ae_cfg.q
    return (weights * per_example / divisor).mean()

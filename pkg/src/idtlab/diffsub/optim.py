"""Adam variant with a global cap on the raw update magnitude.

If any parameter's raw step |m_hat / (sqrt(v_hat) + eps)| exceeds
``max_step``, every update in that optimizer step is scaled down so the
largest raw step equals ``max_step`` (the cap multiplies the learning
rate). This keeps the occasional exploding gradient from wrecking
training while leaving ordinary steps identical to Adam.
"""

from __future__ import annotations

import math

import torch


class StepLimitedAdam(torch.optim.Optimizer):
    def __init__(
        self,
        params,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        max_step: float = 100.0,
    ):
        if max_step <= 0:
            raise ValueError("max_step must be > 0")
        defaults = dict(lr=lr, betas=betas, eps=eps, max_step=max_step)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        # pass 1: moment updates and the global max raw step
        raw_steps = []
        max_step = math.inf
        max_raw = 0.0
        for group in self.param_groups:
            max_step = min(max_step, group["max_step"])
            beta1, beta2 = group["betas"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                state["step"] += 1
                t = state["step"]
                exp_avg, exp_avg_sq = state["exp_avg"], state["exp_avg_sq"]
                exp_avg.mul_(beta1).add_(p.grad, alpha=1 - beta1)
                exp_avg_sq.mul_(beta2).addcmul_(p.grad, p.grad, value=1 - beta2)
                m_hat = exp_avg / (1 - beta1**t)
                v_hat = exp_avg_sq / (1 - beta2**t)
                raw = m_hat / (v_hat.sqrt() + group["eps"])
                raw_steps.append((group, p, raw))
                max_raw = max(max_raw, raw.abs().max().item())

        scale = 1.0 if max_raw <= max_step else max_step / max_raw

        for group, p, raw in raw_steps:
            p.add_(raw, alpha=-group["lr"] * scale)
        return loss

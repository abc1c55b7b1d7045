"""Gradient primitives on top of torch autograd.

The one non-obvious piece is :func:`scale_grad_detached`: backward flow
through the tensor is multiplied by ``s`` in a way that scales second-order
gradients by ``s`` as well (plain forward-side rescaling would scale them
by ``s**2``, unbalancing any loss built from first gradients).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import torch
from torch import Tensor


def detach(t: Tensor) -> Tensor:
    """Same values, no gradient flow."""
    return t.detach()


def gradient(
    scalar_output: Tensor,
    inputs: Sequence[Tensor] | Tensor,
    create_graph: bool = False,
) -> list[Tensor]:
    """d(scalar)/d(input) for each input.

    Inputs disconnected from the output get a zero gradient rather than
    an error. ``create_graph=True`` retains the graph so the result can be
    differentiated again.
    """
    if scalar_output.numel() != 1:
        raise ValueError(
            f"gradient() needs a scalar output, got shape {tuple(scalar_output.shape)}"
        )
    single = isinstance(inputs, Tensor)
    inputs_list = [inputs] if single else list(inputs)
    if not scalar_output.requires_grad:
        # constant output: every input is disconnected
        return [torch.zeros_like(x) for x in inputs_list]
    grads = torch.autograd.grad(
        scalar_output,
        inputs_list,
        create_graph=create_graph,
        allow_unused=True,
    )
    out = [
        g if g is not None else torch.zeros_like(x)
        for g, x in zip(grads, inputs_list)
    ]
    return out


def gradient_of_gradient_norm(
    scalar_output: Tensor,
    inputs: Sequence[Tensor] | Tensor,
    norm_fn: Callable[[Tensor], Tensor],
) -> Tensor:
    """Differentiable ``norm_fn`` of the input gradient, usable as a loss term.

    ``norm_fn`` receives the flattened concatenation of all input gradients.
    Non-smooth norms (|.|) follow torch's subgradient convention (0 at 0).
    """
    grads = gradient(scalar_output, inputs, create_graph=True)
    flat = torch.cat([g.reshape(-1) for g in grads])
    value = norm_fn(flat)
    if value.numel() != 1:
        raise ValueError("norm_fn must reduce the gradient to a scalar")
    return value


class _ScaleGradDetached(torch.autograd.Function):
    """Identity forward; backward emits g + detach(g)*(s-1).

    The backward expression is differentiable with d/dg = 1, so a second
    differentiation pass sees no extra factor from this node itself while
    the emitted first-order gradient carries the full factor ``s``. Net
    effect: both gradient orders through the op scale by ``s``.
    """

    @staticmethod
    def forward(ctx, x: Tensor, s: float) -> Tensor:
        ctx.s = float(s)
        return x.clone()

    @staticmethod
    def backward(ctx, grad_out: Tensor):
        return grad_out + grad_out.detach() * (ctx.s - 1.0), None


def scale_grad_detached(t: Tensor, s: float) -> Tensor:
    """Forward value unchanged; gradients through ``t`` multiplied by ``s``.

    Second-order terms scale by ``s`` identically to first-order terms.
    """
    if not math.isfinite(float(s)):
        raise ValueError("scale factor must be finite")
    if not t.requires_grad:
        return t
    return _ScaleGradDetached.apply(t, s)

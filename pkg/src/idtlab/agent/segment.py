"""Action-sensitivity estimate used to normalize reward-scaled losses.

Tracks a running mean of |Q(a1) - Q(a2)| for action pairs drawn uniformly
at random at replayed states. Dividing value/reward/policy-Q losses by
this scalar makes the remaining hyperparameters portable across
environments whose reward magnitudes differ by orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor


@dataclass
class SegmentScale:
    momentum: float = 0.99
    eps: float = 1e-3
    value: float = 0.0
    count: int = 0

    def observe(self, q_values: Tensor, rng: torch.Generator) -> float:
        """Update from a (B, A) table of one-step Q values.

        Pairs are distinct actions drawn uniformly (identical only in the
        degenerate single-action case, where the estimate clamps at eps).
        """
        b, a = q_values.shape
        i1 = torch.randint(0, a, (b, 1), generator=rng)
        if a > 1:
            offset = 1 + torch.randint(0, a - 1, (b, 1), generator=rng)
            i2 = (i1 + offset) % a
        else:
            i2 = i1
        q1 = q_values.gather(1, i1).squeeze(1)
        q2 = q_values.gather(1, i2).squeeze(1)
        batch_mean = float((q1 - q2).abs().mean())
        if self.count == 0:
            self.value = batch_mean
        else:
            self.value = self.momentum * self.value + (1 - self.momentum) * batch_mean
        self.count += 1
        return self.value

    def scale(self) -> float:
        """Strictly positive divisor (clamped at eps)."""
        return max(self.value, self.eps)

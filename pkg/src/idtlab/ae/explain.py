"""Explanation generation: minimal input perturbations that flip the
prediction head's action choice.

Sign-free (RMS-normalized) gradient ascent on the target action's
log-probability over the frame pixels, clipped to [0,1]; the sector
side-channel is perturbed as a single scalar when enabled. Sparse mode
adds an L1 pull back toward the original image. The ascent is
deterministic, so a longer budget extends the same trajectory: once a
run converges at step k every budget >= k returns the identical result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from idtlab.agent.networks import SECTOR_SCALE, observation_to_tensor
from idtlab.diffsub import rebalance_paused
from idtlab.envs.beamgrid import Observation
from idtlab.envs.trajectory import frame_to_png


@dataclass
class Perturbation:
    delta: np.ndarray  # frame-shaped signed perturbation
    steps_used: int
    achieved_prob: float
    rmse: float
    converged: bool
    sector_delta: float
    probs_before: list[float]
    probs_after: list[float]
    mode: str
    target_action: int


@torch.no_grad()
def _probs(model, x: torch.Tensor) -> torch.Tensor:
    log_probs, _ = model.prediction(model.represent(x[None]))
    return log_probs[0].exp()


def generate_explanation(
    model,
    obs: Observation,
    target_action: int,
    mode: str = "original",
    budget: int = 500,
    step_size: float = 1e-2,
    sparse_pull: float = 0.15,
    perturb_sector: bool = True,
) -> Perturbation:
    if mode not in ("original", "sparse"):
        raise ValueError(f"unknown mode {mode!r}")
    was_training = model.training
    model.eval()
    try:
        x0 = observation_to_tensor(obs)
        frame0 = x0[0].clone()
        sector0 = float(x0[1, 0, 0])
        probs_before = _probs(model, x0).tolist()

        if int(np.argmax(probs_before)) == target_action:
            return Perturbation(
                delta=np.zeros_like(obs.frame),
                steps_used=0,
                achieved_prob=float(probs_before[target_action]),
                rmse=0.0,
                converged=True,
                sector_delta=0.0,
                probs_before=probs_before,
                probs_after=probs_before,
                mode=mode,
                target_action=target_action,
            )

        frame = frame0.clone()
        d_sector = torch.zeros(())
        steps = 0
        converged = False
        for steps in range(1, budget + 1):
            f = frame.clone().requires_grad_(True)
            ds = d_sector.clone().requires_grad_(True)
            x = torch.stack([f, torch.full_like(f, sector0) + ds])
            with rebalance_paused():
                log_probs, _ = model.prediction(model.represent(x[None]))
                objective = log_probs[0, target_action]
                if mode == "sparse":
                    objective = objective - sparse_pull * (f - frame0).abs().mean()
                grads = torch.autograd.grad(objective, [f, ds])
            g_f, g_s = grads
            rms = g_f.pow(2).mean().sqrt().clamp(min=1e-12)
            frame = (frame + step_size * g_f / rms).clamp(0.0, 1.0)
            if perturb_sector:
                d_sector = (d_sector + step_size * g_s.sign() * 0.1).clamp(
                    -sector0, 1.0 - sector0
                )
            with torch.no_grad():
                x = torch.stack([frame, torch.full_like(frame, sector0) + d_sector])
                p = _probs(model, x)
            if int(p.argmax()) == target_action:
                converged = True
                break

        delta = (frame - frame0).numpy()
        probs_after = p.tolist()
        return Perturbation(
            delta=delta,
            steps_used=steps,
            achieved_prob=float(p[target_action]),
            rmse=float(np.sqrt(np.mean(delta**2))),
            converged=converged,
            sector_delta=float(d_sector) * SECTOR_SCALE,
            probs_before=probs_before,
            probs_after=probs_after,
            mode=mode,
            target_action=target_action,
        )
    finally:
        if was_training:
            model.train()


def export_bundle(
    obs: Observation, pert: Perturbation, out_dir: str | Path, action_names: tuple
) -> Path:
    """Four-part explanation bundle: original / perturbed / signed delta
    PNGs plus metadata JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame_to_png(obs.frame, out / "original.png")
    frame_to_png(np.clip(obs.frame + pert.delta, 0, 1), out / "perturbed.png")

    lim = max(1e-6, float(np.abs(pert.delta).max()))
    fig, ax = plt.subplots(figsize=(3, 3), dpi=120)
    im = ax.imshow(pert.delta, cmap="RdBu_r", vmin=-lim, vmax=lim)
    ax.set_axis_off()
    fig.colorbar(im, fraction=0.046)
    fig.tight_layout(pad=0.1)
    fig.savefig(out / "delta.png")
    plt.close(fig)

    meta = {
        "schema": "explanation-bundle/1",
        "mode": pert.mode,
        "target_action": action_names[pert.target_action],
        "rmse": pert.rmse,
        "steps": pert.steps_used,
        "converged": pert.converged,
        "sector_delta": pert.sector_delta,
        "probs_before": pert.probs_before,
        "probs_after": pert.probs_after,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2))
    return out

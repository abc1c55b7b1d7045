"""Density plot export for the value-density panel."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from idtlab.gmm.mixture import GaussianMixture, density, expectation


def export_density_plot(m: GaussianMixture, path: str | Path, title: str = "") -> Path:
    """PNG of the mixture pdf plus a sidecar JSON with the parameters."""
    path = Path(path)
    mm = m.detach()
    lo = float((mm.means - 4 * mm.stddevs).min())
    hi = float((mm.means + 4 * mm.stddevs).max())
    xs = torch.linspace(lo, hi, 400, dtype=mm.means.dtype)
    ys = density(mm, xs).numpy()

    fig, ax = plt.subplots(figsize=(5, 2.6), dpi=110)
    ax.fill_between(xs.numpy(), ys, color="#3b6ea5", alpha=0.35)
    ax.plot(xs.numpy(), ys, color="#3b6ea5", lw=1.5)
    ax.axvline(float(expectation(mm)), color="#b2403c", lw=1.0, ls="--", label="expectation")
    ax.set_xlabel("reward (environment units)")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "means": np.asarray(mm.means).tolist(),
                "stddevs": np.asarray(mm.stddevs).tolist(),
                "weights": np.asarray(mm.weights()).tolist(),
                "expectation": float(expectation(mm)),
            },
            indent=2,
        )
    )
    return path

"""Gaussian-mixture distributional value/reward representation."""

from idtlab.gmm.mixture import (
    GaussianMixture,
    RankUpdateConfig,
    density,
    expectation,
    rank_update_loss,
    sample,
)
from idtlab.gmm.plots import export_density_plot

__all__ = [
    "GaussianMixture",
    "RankUpdateConfig",
    "density",
    "expectation",
    "rank_update_loss",
    "sample",
    "export_density_plot",
]

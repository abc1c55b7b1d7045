"""Trajectory logging and frame export."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


class TrajectoryLogger:
    """Line-delimited (step, action, reward, done, state hash) records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def log(self, step: int, action: str, reward: float, done: bool, state_hash: str) -> None:
        rec = {
            "step": step,
            "action": action,
            "reward": round(reward, 6),
            "done": done,
            "state_hash": state_hash,
        }
        self._fh.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def frame_to_png(frame: np.ndarray, path: str | Path, scale: int = 4) -> None:
    """Write a [0,1] grayscale frame as PNG, nearest-neighbor upscaled."""
    img8 = (np.clip(frame, 0.0, 1.0) * 255).astype(np.uint8)
    img = Image.fromarray(img8, mode="L")
    if scale != 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    img.save(path)

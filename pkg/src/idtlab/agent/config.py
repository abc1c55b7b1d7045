"""Training configuration, JSON round-trippable."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from idtlab.agent.networks import AgentConfig
from idtlab.envs.beamgrid import BeamGridConfig
from idtlab.gmm import RankUpdateConfig
from idtlab.planner import SwarmConfig


@dataclass
class AeTrainingConfig:
    enabled: bool = False
    z: float = 1.25
    q: float = 1.0
    lam: float = 1e-3  # adaptive regularization strength (lambda)
    grad_l1_target: float = 1.0  # target E||d logpi(a*)/d input||_1
    controller_gain: float = 0.02
    measure_momentum: float = 0.99
    policy_smoothing_factor: float = 0.25  # times rho_target
    perturb_sector: bool = True
    attack_step: float = 1e-2
    attack_budget: int = 500
    sparse_pull: float = 0.15  # L1 pull weight in sparse evaluation mode


@dataclass
class TrainingConfig:
    env: str = "beamgrid"
    seed: int = 0
    lr: float = 3e-4
    K: int = 5  # unroll length
    gamma: float = 0.997
    n_step: int = 5
    N_update: int = 8
    rho_target: float = 0.1
    exploration_gain: float = 0.01
    batch_size: int = 32
    total_env_steps: int = 24_000
    train_every: int = 3
    warmup_env_steps: int = 600
    replay_capacity: int = 100_000
    max_optimizer_step: float = 100.0
    consistency_weight: float = 1.0
    consistency_batch: int = 12
    segment_momentum: float = 0.995
    metrics_every: int = 25
    agent: AgentConfig = field(default_factory=AgentConfig)
    env_config: BeamGridConfig = field(default_factory=BeamGridConfig)
    planner: SwarmConfig = field(default_factory=lambda: SwarmConfig(64, 5, 16, 0.2))
    gmm: RankUpdateConfig = field(default_factory=RankUpdateConfig)
    ae: AeTrainingConfig = field(default_factory=AeTrainingConfig)

    # ------------------------------------------------------------- JSON io

    def to_dict(self) -> dict:
        def enc(v):
            if dataclasses.is_dataclass(v):
                return {k: enc(getattr(v, k)) for k in v.__dataclass_fields__}
            if isinstance(v, tuple):
                return list(v)
            return v

        return enc(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        def dec(klass, d):
            kwargs = {}
            for f in dataclasses.fields(klass):
                if f.name not in d:
                    continue
                v = d[f.name]
                if dataclasses.is_dataclass(f.type) or f.name in (
                    "agent",
                    "env_config",
                    "planner",
                    "gmm",
                    "ae",
                ):
                    sub = {
                        "agent": AgentConfig,
                        "env_config": BeamGridConfig,
                        "planner": SwarmConfig,
                        "gmm": RankUpdateConfig,
                        "ae": AeTrainingConfig,
                    }[f.name]
                    kwargs[f.name] = dec(sub, v)
                elif isinstance(v, list):
                    kwargs[f.name] = tuple(v)
                else:
                    kwargs[f.name] = v
            return klass(**kwargs)

        return dec(cls, data)

    @classmethod
    def load(cls, path: str | Path) -> "TrainingConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

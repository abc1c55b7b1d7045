"""BeamGrid: a 12x12 lane-dodge/shoot game.

Entities descend one row per step. Enemies can be destroyed by firing up
the player's lane (+10); touching anything is a terminal collision
(-100); surviving a step is worth +0.1. Rewards are unclipped and stay in
environment units. A sector counter (1 + kills // 25) is exposed as a
scalar side-channel next to the 48x48 frame.

Frames carry faint vertical lane gridlines whose pixel phase is drawn per
episode and has no effect on dynamics or reward: a deliberately
strategy-irrelevant texture that downstream reconstruction probes can
check the agent ignores.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

GRID = 12
CELL = 4
FRAME_SIZE = GRID * CELL  # 48

ACTIONS = ("left", "right", "stay", "fire")
LEFT, RIGHT, STAY, FIRE = range(4)

PLAYER_SHADE = 1.0
ENEMY_SHADE = 0.8
OBSTACLE_SHADE = 0.55
GRIDLINE_SHADE = 0.15

REWARD_SURVIVE = 0.1
REWARD_KILL = 10.0
REWARD_COLLISION = -100.0

KILLS_PER_SECTOR = 25


@dataclass
class BeamGridConfig:
    max_steps: int = 240
    fire_range: int = 8
    enemy_fraction: float = 0.55
    # per-episode spawn probability drawn uniformly from this range, so
    # episodes vary in danger
    spawn_prob_range: tuple[float, float] = (0.12, 0.32)
    # chance that a spawn event drops a second entity in an adjacent lane
    double_spawn_prob: float = 0.25
    # multiplies every reward; exercises loss normalization across scales
    reward_scale: float = 1.0


@dataclass
class Observation:
    frame: np.ndarray  # (48, 48) float32 in [0, 1]
    sector: int


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool


@dataclass
class EnvState:
    """Full environment state; snapshot/restore by value."""

    player_lane: int
    entities: list[tuple[int, int, int]]  # (row, lane, kind) kind: 0 enemy, 1 obstacle
    kills: int
    score: float
    step_count: int
    spawn_prob: float
    gridline_phase: int
    done: bool
    rng_state: dict = field(default_factory=dict)

    def copy(self) -> "EnvState":
        return replace(self, entities=list(self.entities), rng_state=dict(self.rng_state))


def render_frame(state: EnvState) -> np.ndarray:
    """Pure renderer: same EnvState -> same pixels."""
    frame = np.zeros((FRAME_SIZE, FRAME_SIZE), dtype=np.float32)
    for x in range(state.gridline_phase, FRAME_SIZE, CELL):
        frame[:, x] = GRIDLINE_SHADE
    for row, lane, kind in state.entities:
        shade = ENEMY_SHADE if kind == 0 else OBSTACLE_SHADE
        _fill_cell(frame, row, lane, shade)
    _fill_cell(frame, GRID - 1, state.player_lane, PLAYER_SHADE)
    return frame


def _fill_cell(frame: np.ndarray, row: int, lane: int, shade: float) -> None:
    if 0 <= row < GRID and 0 <= lane < GRID:
        frame[row * CELL : (row + 1) * CELL, lane * CELL : (lane + 1) * CELL] = shade


class BeamGridEnv:
    """Deterministic given (seed, action sequence)."""

    n_actions = len(ACTIONS)

    def __init__(self, config: BeamGridConfig | None = None):
        self.config = config or BeamGridConfig()
        self.state: EnvState | None = None
        self._rng = np.random.default_rng(0)

    # ------------------------------------------------------------- lifecycle

    def reset(self, seed: int) -> Observation:
        self._rng = np.random.default_rng(seed)
        lo, hi = self.config.spawn_prob_range
        self.state = EnvState(
            player_lane=GRID // 2,
            entities=[],
            kills=0,
            score=0.0,
            step_count=0,
            spawn_prob=float(lo + (hi - lo) * self._rng.random()),
            gridline_phase=int(self._rng.integers(0, CELL)),
            done=False,
        )
        return self.observe()

    def observe(self) -> Observation:
        st = self._require_state()
        return Observation(frame=render_frame(st), sector=self.sector)

    @property
    def sector(self) -> int:
        return 1 + self._require_state().kills // KILLS_PER_SECTOR

    def _require_state(self) -> EnvState:
        if self.state is None:
            raise RuntimeError("reset() must be called first")
        return self.state

    # ------------------------------------------------------------------ step

    def step(self, action: int) -> StepResult:
        st = self._require_state()
        if st.done:
            raise RuntimeError("step() after episode end")
        reward = 0.0

        if action == LEFT:
            st.player_lane = max(0, st.player_lane - 1)
        elif action == RIGHT:
            st.player_lane = min(GRID - 1, st.player_lane + 1)
        elif action == FIRE:
            reward += self._fire(st)

        # entities descend after the player acts
        st.entities = [(row + 1, lane, kind) for row, lane, kind in st.entities]
        collided = any(
            row == GRID - 1 and lane == st.player_lane for row, lane, kind in st.entities
        )
        st.entities = [e for e in st.entities if e[0] < GRID]

        self._spawn(st)

        st.step_count += 1
        if collided:
            reward += REWARD_COLLISION
            st.done = True
        else:
            reward += REWARD_SURVIVE
            if st.step_count >= self.config.max_steps:
                st.done = True
        reward *= self.config.reward_scale
        st.score += reward
        return StepResult(self.observe(), reward, st.done)

    def _fire(self, st: EnvState) -> float:
        targets = [
            (row, i)
            for i, (row, lane, kind) in enumerate(st.entities)
            if kind == 0
            and lane == st.player_lane
            and 0 <= row < GRID - 1
            and (GRID - 1 - row) <= self.config.fire_range
        ]
        if not targets:
            return 0.0
        _, idx = max(targets)  # nearest enemy (largest row) dies
        del st.entities[idx]
        st.kills += 1
        return REWARD_KILL

    def _spawn(self, st: EnvState) -> None:
        # draws happen every step regardless of outcome, keeping the
        # random stream aligned across action sequences
        u_spawn = self._rng.random()
        lane = int(self._rng.integers(0, GRID))
        u_kind = self._rng.random()
        u_double = self._rng.random()
        side = 1 if self._rng.random() < 0.5 else -1
        u_kind2 = self._rng.random()
        if u_spawn >= st.spawn_prob:
            return
        kind = 0 if u_kind < self.config.enemy_fraction else 1
        st.entities.append((0, lane, kind))
        if u_double < self.config.double_spawn_prob:
            lane2 = lane + side
            if 0 <= lane2 < GRID:
                kind2 = 0 if u_kind2 < self.config.enemy_fraction else 1
                st.entities.append((0, lane2, kind2))

    # ------------------------------------------------------- snapshot/restore

    def snapshot(self) -> EnvState:
        st = self._require_state().copy()
        st.rng_state = self._rng.bit_generator.state
        return st

    def restore(self, snap: EnvState) -> None:
        self.state = snap.copy()
        self._rng = np.random.default_rng(0)
        self._rng.bit_generator.state = snap.rng_state

    def state_hash(self) -> str:
        st = self._require_state()
        payload = repr(
            (st.player_lane, sorted(st.entities), st.kills, round(st.score, 6), st.step_count)
        ).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

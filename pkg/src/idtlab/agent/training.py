"""Training loop: planner-driven collection plus unrolled model updates.

Each optimizer step unrolls the dynamics K steps from replayed segments
and applies, per unroll position: the rank-update loss on reward and
value mixtures (targets are n-step returns bootstrapped from stored
search root values), the pairwise policy loss against the stored search
(action, q) pairs, the exploration transfer term, and an EfficientZero
style latent-consistency loss. Reward-scaled losses are divided by the
running action-sensitivity estimate. Optimizer is the step-limited Adam.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from idtlab.agent.config import TrainingConfig
from idtlab.agent.networks import SECTOR_SCALE, AgentModel, observation_to_tensor
from idtlab.agent.policy import (
    ExplorationController,
    exploration_loss,
    pairwise_policy_loss,
    saturation_frequency,
)
from idtlab.agent.replay import Episode, ReplayBuffer, build_batch, encode_frame
from idtlab.agent.segment import SegmentScale
from idtlab.ae.conditioning import conditioning_loss, lipschitz_controller, measure_policy_grad_l1
from idtlab.diffsub import StepLimitedAdam
from idtlab.envs.beamgrid import BeamGridEnv
from idtlab.gmm import rank_update_loss
from idtlab.planner import plan


class Trainer:
    def __init__(self, config: TrainingConfig, workdir: str | Path | None = None):
        self.cfg = config
        self.workdir = Path(workdir) if workdir else None
        if self.workdir:
            self.workdir.mkdir(parents=True, exist_ok=True)

        torch.manual_seed(config.seed)
        self.model = AgentModel(config.agent)
        self.optimizer = StepLimitedAdam(
            self.model.parameters(), lr=config.lr, max_step=config.max_optimizer_step
        )
        self.replay = ReplayBuffer(capacity_steps=config.replay_capacity)
        self.segment = SegmentScale(momentum=config.segment_momentum)
        self.explorer = ExplorationController(
            rho_target=config.rho_target, gain=config.exploration_gain
        )
        self.ae_lambda = config.ae.lam if config.ae.enabled else 0.0
        self.measured_l1 = 0.0

        self.np_rng = np.random.default_rng(config.seed)
        self.torch_rng = torch.Generator().manual_seed(config.seed + 1)

        self.env = BeamGridEnv(config.env_config)
        self.env_steps = 0
        self.train_steps = 0
        self.episode_returns: list[float] = []
        self._episode_seed = config.seed * 1_000_003

        self._metrics_fh = None
        if self.workdir:
            self._metrics_fh = open(self.workdir / "metrics.jsonl", "w")

    # ------------------------------------------------------------ collection

    def collect_episode(self, max_steps: int | None = None, greedy: bool = False) -> float:
        """One planner-driven episode appended to replay; returns the return."""
        cfg = self.cfg
        self._episode_seed += 1
        obs = self.env.reset(self._episode_seed)
        adapter = self.model.planner_model(cfg.gamma)
        frames, sectors = [encode_frame(obs.frame)], [obs.sector]
        actions, rewards = [], []
        s_actions, s_qs, s_values = [], [], []
        total = 0.0
        terminal = False
        n_top = cfg.planner.n_top
        with torch.no_grad():
            for _ in range(max_steps or cfg.env_config.max_steps):
                latent = self.model.represent_observation(obs)
                dist, trace = plan(latent, adapter, cfg.planner, cfg.gamma, self.torch_rng)
                if greedy:
                    action = int(np.argmax(dist))
                else:
                    action = int(
                        torch.multinomial(
                            torch.from_numpy(dist), 1, generator=self.torch_rng
                        )
                    )
                sel = trace.selected
                s_actions.append([trace.particles[i].actions[0] for i in sel])
                s_qs.append([trace.particles[i].q_estimate for i in sel])
                s_values.append(float(np.mean([trace.particles[i].q_estimate for i in sel])))

                res = self.env.step(action)
                total += res.reward
                actions.append(action)
                rewards.append(res.reward)
                frames.append(encode_frame(res.observation.frame))
                sectors.append(res.observation.sector)
                obs = res.observation
                self.env_steps += 1
                if res.done:
                    terminal = res.reward < 0
                    break
        ep = Episode(
            frames=np.stack(frames),
            sectors=np.array(sectors, dtype=np.int16),
            actions=np.array(actions, dtype=np.int8),
            rewards=np.array(rewards, dtype=np.float32),
            search_actions=np.array(s_actions, dtype=np.int8).reshape(-1, n_top),
            search_qs=np.array(s_qs, dtype=np.float32).reshape(-1, n_top),
            search_values=np.array(s_values, dtype=np.float32),
            terminal=terminal,
        )
        self.replay.add(ep)
        self.episode_returns.append(total)
        return total

    # ------------------------------------------------------------- training

    def train_step(self) -> dict:
        cfg = self.cfg
        self.model.train()
        idx = self.replay.sample_segment_indices(cfg.batch_size, self.np_rng)
        batch = build_batch(self.replay, idx, cfg.K, cfg.n_step, cfg.gamma, SECTOR_SCALE)

        obs = batch["obs"]
        ae_on = cfg.ae.enabled and self.ae_lambda > 0
        if ae_on:
            obs = obs.clone().requires_grad_(True)

        latent = self.model.represent(obs)
        log_probs_k = []
        value_mix_k = []
        reward_mix_k = []
        lp, vm = self.model.prediction(latent)
        log_probs_k.append(lp)
        value_mix_k.append(vm)
        latents = [latent]
        for k in range(cfg.K):
            latent, rmix = self.model.dynamics(latent, batch["actions"][:, k])
            reward_mix_k.append(rmix)
            lp, vm = self.model.prediction(latent)
            log_probs_k.append(lp)
            value_mix_k.append(vm)
            latents.append(latent)

        seg = self.segment.scale()
        reward_loss = sum(
            rank_update_loss(reward_mix_k[k], batch["rewards"][:, k], cfg.gmm)
            for k in range(cfg.K)
        ) / (cfg.K * seg)
        value_loss = sum(
            rank_update_loss(value_mix_k[k], batch["value_targets"][:, k], cfg.gmm)
            for k in range(cfg.K + 1)
        ) / ((cfg.K + 1) * seg)

        # pairwise policy + exploration at each unroll position
        policy_loss = torch.zeros((), dtype=obs.dtype)
        explore_loss = torch.zeros((), dtype=obs.dtype)
        sat_freqs = []
        n_uniform = cfg.N_update
        for k in range(cfg.K + 1):
            mask = batch["pol_mask"][:, k]
            if mask.sum() == 0:
                continue
            lp = log_probs_k[k]
            acts = batch["pol_actions"][:, k]
            lp_taken = lp.gather(-1, acts)
            pl = pairwise_policy_loss(lp_taken, batch["pol_qs"][:, k])
            policy_loss = policy_loss + (mask.mean() * pl)
            uni = torch.randint(
                0, cfg.agent.n_actions, (lp.shape[0], n_uniform), generator=self.torch_rng
            )
            explore_loss = explore_loss + mask.mean() * exploration_loss(
                lp, acts, uni, self.explorer.magnitude
            )
            sat_freqs.append(saturation_frequency(lp.detach(), acts[:, 0]))
        policy_loss = policy_loss / ((cfg.K + 1) * seg)
        explore_loss = explore_loss / (cfg.K + 1)

        # latent-consistency on a subsample of the batch
        nc = min(cfg.consistency_batch, cfg.batch_size)
        t_obs = batch["target_obs"][:nc].reshape(-1, *obs.shape[1:])
        with torch.no_grad():
            target_latents = self.model.represent(t_obs)
        pred_latents = torch.stack([latents[k + 1][:nc] for k in range(cfg.K)], dim=1)
        pred_flat = self.model.projector(pred_latents.reshape(-1, pred_latents.shape[-1]))
        cons_valid = batch["valid"][:nc].reshape(-1)
        cos = F.cosine_similarity(pred_flat, target_latents, dim=-1)
        denom = cons_valid.sum().clamp(min=1.0)
        consistency = cfg.consistency_weight * ((1 - cos) * cons_valid).sum() / denom

        loss = reward_loss + value_loss + policy_loss + explore_loss + consistency

        ae_term = torch.zeros(())
        if ae_on:
            ae_term = conditioning_loss(
                obs,
                log_probs_k,
                value_mix_k,
                reward_mix_k,
                self.model,
                cfg.ae,
                rho_target=cfg.rho_target,
                rng=self.torch_rng,
            )
            loss = loss + self.ae_lambda * ae_term

        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()

        # controllers and running estimates (subsampled, they are EMAs)
        if self.train_steps % 4 == 0:
            with torch.no_grad():
                q_table = self.model.one_step_q(latents[0].detach(), cfg.gamma)
            self.segment.observe(q_table, self.torch_rng)
        if sat_freqs:
            self.explorer.update(float(np.mean(sat_freqs)))
        if ae_on and self.train_steps % 4 == 0:
            l1 = measure_policy_grad_l1(self.model, obs.detach(), rng=self.torch_rng)
            m = cfg.ae.measure_momentum
            self.measured_l1 = l1 if self.train_steps == 0 else m * self.measured_l1 + (1 - m) * l1
            self.ae_lambda = lipschitz_controller(self.measured_l1, self.ae_lambda, cfg.ae)

        self.train_steps += 1
        return {
            "reward_loss": reward_loss.item(),
            "value_loss": value_loss.item(),
            "policy_loss": policy_loss.item(),
            "explore_loss": explore_loss.item(),
            "consistency": consistency.item(),
            "ae_term": ae_term.item(),
            "loss": loss.item(),
            "segment_scale": seg,
            "explore_magnitude": self.explorer.magnitude,
            "ae_lambda": self.ae_lambda,
            "measured_l1": self.measured_l1,
        }

    # ----------------------------------------------------------------- loop

    def run(self, progress: bool = False) -> dict:
        cfg = self.cfg
        t0 = time.time()
        while self.env_steps < cfg.warmup_env_steps:
            self.collect_episode()
        next_train_at = self.env_steps
        while self.env_steps < cfg.total_env_steps:
            ret = self.collect_episode()
            while next_train_at <= self.env_steps:
                metrics = self.train_step()
                next_train_at += cfg.train_every
                if self.train_steps % cfg.metrics_every == 0:
                    self._emit(
                        {
                            "train_step": self.train_steps,
                            "env_steps": self.env_steps,
                            "episode_return_mean20": float(
                                np.mean(self.episode_returns[-20:])
                            ),
                            **metrics,
                        }
                    )
            if progress and len(self.episode_returns) % 20 == 0:
                print(
                    f"steps={self.env_steps} episodes={len(self.episode_returns)} "
                    f"ret20={np.mean(self.episode_returns[-20:]):.1f} "
                    f"elapsed={time.time() - t0:.0f}s",
                    flush=True,
                )
        summary = {
            "env_steps": self.env_steps,
            "train_steps": self.train_steps,
            "episodes": len(self.episode_returns),
            "mean_return_last50": float(np.mean(self.episode_returns[-50:])),
            "elapsed_sec": time.time() - t0,
        }
        self._emit({"summary": summary})
        if self._metrics_fh:
            self._metrics_fh.close()
            self._metrics_fh = None
        return summary

    def _emit(self, record: dict) -> None:
        if self._metrics_fh:
            self._metrics_fh.write(json.dumps(record) + "\n")
            self._metrics_fh.flush()

    # ------------------------------------------------------------------ eval

    def save_checkpoint(self, path: str | Path) -> None:
        self.model.save(path)


@torch.no_grad()
def evaluate_episodes(
    model: AgentModel,
    env_config,
    seeds: list[int],
    gamma: float,
    use_planner: bool = False,
    planner_cfg=None,
    collect_states: bool = False,
) -> dict:
    """Batched greedy evaluation over fixed seeds.

    With use_planner=False all environments advance in lockstep with one
    batched prediction forward per step (fast path used by criticality
    statistics); the planner path runs sequentially.
    """
    model.eval()
    envs = [BeamGridEnv(env_config) for _ in seeds]
    obs = [e.reset(s) for e, s in zip(envs, seeds)]
    done = [False] * len(seeds)
    returns = [0.0] * len(seeds)
    lengths = [0] * len(seeds)
    terminal = [False] * len(seeds)
    states: list[list] = [[] for _ in seeds]

    if use_planner:
        cfg = planner_cfg
        for i, env in enumerate(envs):
            rng = torch.Generator().manual_seed(seeds[i])
            adapter = model.planner_model(gamma)
            o = obs[i]
            while not done[i]:
                latent = model.represent_observation(o)
                dist, _ = plan(latent, adapter, cfg, gamma, rng)
                res = env.step(int(np.argmax(dist)))
                returns[i] += res.reward
                lengths[i] += 1
                o = res.observation
                if res.done:
                    done[i] = True
                    terminal[i] = res.reward < 0
    else:
        while not all(done):
            live = [i for i in range(len(seeds)) if not done[i]]
            stack = torch.stack([observation_to_tensor(obs[i]) for i in live])
            latents = model.represent(stack)
            log_probs, _ = model.prediction(latents)
            acts = log_probs.argmax(dim=-1)
            if collect_states:
                for j, i in enumerate(live):
                    states[i].append(envs[i].snapshot())
            for j, i in enumerate(live):
                res = envs[i].step(int(acts[j]))
                returns[i] += res.reward
                lengths[i] += 1
                obs[i] = res.observation
                if res.done:
                    done[i] = True
                    terminal[i] = res.reward < 0
    model.train()
    return {
        "returns": returns,
        "lengths": lengths,
        "terminal": terminal,
        "mean_return": float(np.mean(returns)),
        "states": states if collect_states else None,
    }


@torch.no_grad()
def random_policy_baseline(env_config, seeds: list[int], rng_seed: int = 0) -> float:
    rng = np.random.default_rng(rng_seed)
    returns = []
    for s in seeds:
        env = BeamGridEnv(env_config)
        env.reset(s)
        total, done = 0.0, False
        while not done:
            res = env.step(int(rng.integers(0, 4)))
            total += res.reward
            done = res.done
        returns.append(total)
    return float(np.mean(returns))

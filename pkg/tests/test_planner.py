"""Swarm search against the TwoChoice enumeration oracle, selection-rule
properties, and the MCTS baseline."""

import itertools
import json

import numpy as np
import pytest
import torch
from scipy import stats

from idtlab.envs import TwoChoiceExactModel, twochoice_exact_q
from idtlab.planner import (
    Particle,
    SwarmConfig,
    mcts_baseline,
    plan,
    rollout_particles,
    select_distribution,
    write_trace,
)


def gen(seed=0):
    return torch.Generator().manual_seed(seed)


def test_rollout_shapes_and_determinism():
    model = TwoChoiceExactModel(horizon=5)
    cfg = SwarmConfig(n_particles=32, depth=4, n_top=8)
    p1 = rollout_particles(model.initial_latent(), model, cfg, 1.0, gen(3))
    p2 = rollout_particles(model.initial_latent(), model, cfg, 1.0, gen(3))
    assert len(p1) == 32
    assert all(len(p.actions) == 4 for p in p1)
    assert [p.actions for p in p1] == [p.actions for p in p2]
    assert [p.q_estimate for p in p1] == [p.q_estimate for p in p2]


def test_particle_q_matches_exact_oracle():
    # with the exact model and gamma=1, a particle's q is the number of A
    # actions plus the uniform continuation value at the leaf
    horizon, depth = 6, 3
    model = TwoChoiceExactModel(horizon=horizon)
    cfg = SwarmConfig(n_particles=64, depth=depth, n_top=8)
    particles = rollout_particles(model.initial_latent(), model, cfg, 1.0, gen(1))
    for p in particles:
        leaf_value = 0.5 * (horizon - depth)
        expected = sum(1.0 for a in p.actions if a == 0) + leaf_value
        assert p.q_estimate == pytest.approx(expected)


def test_discount_correctness_hand_built():
    # q = sum gamma^k r_k + gamma^T value on a hand built particle path
    model = TwoChoiceExactModel(horizon=10, gamma=0.9)
    cfg = SwarmConfig(n_particles=16, depth=3, n_top=4)
    particles = rollout_particles(model.initial_latent(), model, cfg, 0.9, gen(5))
    leaf = 0.5 * (1 - 0.9**7) / (1 - 0.9)
    for p in particles:
        expected = sum(
            (0.9**k) * (1.0 if a == 0 else 0.0) for k, a in enumerate(p.actions)
        ) + 0.9**3 * leaf
        assert p.q_estimate == pytest.approx(expected, rel=1e-9)


def test_zero_noise_tie_break_is_stable_subsample():
    particles = [Particle((i % 2,), 1.0, 0.0) for i in range(10)]
    dist, trace = select_distribution(particles, 2, SwarmConfig(10, 1, 4), gen(0))
    assert trace.selected == [0, 1, 2, 3]
    assert dist.tolist() == [0.5, 0.5]


def test_dominating_particle_with_top1():
    particles = [Particle((0,), 0.0, 0.0)] * 31 + [Particle((1,), 1000.0, 0.0)]
    dist, _ = select_distribution(particles, 2, SwarmConfig(32, 1, 1), gen(0))
    assert dist.tolist() == [0.0, 1.0]


def test_twochoice_depth3_argmax_over_seeds():
    # enumeration: at horizon 3 every sequence starting with A beats its
    # B-counterpart, so A is optimal; the swarm must recover it in >= 95/100
    horizon = 3
    model = TwoChoiceExactModel(horizon=horizon)
    seqs = list(itertools.product([0, 1], repeat=3))
    best = max(seqs, key=lambda s: sum(1 for a in s if a == 0))
    assert best[0] == 0
    cfg = SwarmConfig(n_particles=128, depth=3, n_top=16)
    hits = 0
    for seed in range(100):
        dist, _ = plan(model.initial_latent(), model, cfg, 1.0, gen(seed))
        hits += int(np.argmax(dist) == 0)
    assert hits >= 95


def test_probability_weighting_chi_squared():
    # among equal-q particles, selection frequency tracks swarm frequency
    rng = np.random.default_rng(0)
    first = ([0] * 700) + ([1] * 300)
    rng.shuffle(first)
    particles = [Particle((a, 0), 5.0, 0.0) for a in first]
    # two extreme particles create a nonzero noise range without entering
    # the comparison (one always in, one always out)
    particles.append(Particle((0, 0), 1000.0, 0.0))
    particles.append(Particle((1, 0), -1000.0, 0.0))
    cfg = SwarmConfig(n_particles=len(particles), depth=2, n_top=51)
    counts = np.zeros(2)
    trials = 400
    for seed in range(trials):
        _, trace = select_distribution(particles, 2, cfg, gen(seed))
        for i in trace.selected:
            if abs(particles[i].q_estimate - 5.0) < 1:
                counts[particles[i].actions[0]] += 1
    expected = counts.sum() * np.array([0.7, 0.3])
    chi2 = ((counts - expected) ** 2 / expected).sum()
    p = 1 - stats.chi2.cdf(chi2, df=1)
    assert p > 0.01, (counts, expected)


def test_monotone_in_q():
    # raising one particle's q never decreases its selection probability
    base = [Particle((i % 2,), float(i % 5), 0.0) for i in range(40)]
    cfg = SwarmConfig(n_particles=40, depth=1, n_top=10)

    def select_rate(qs, idx, trials=600):
        hits = 0
        for seed in range(trials):
            ps = [Particle(p.actions, q, 0.0) for p, q in zip(base, qs)]
            _, trace = select_distribution(ps, 2, cfg, gen(seed))
            hits += int(idx in trace.selected)
        return hits / trials

    qs = [p.q_estimate for p in base]
    idx = 7
    r1 = select_rate(qs, idx)
    qs2 = list(qs)
    qs2[idx] += 1.5
    r2 = select_rate(qs2, idx)
    se = np.sqrt(0.25 / 600) * 2
    assert r2 >= r1 - 2 * se


def test_trace_dump(tmp_path):
    model = TwoChoiceExactModel(horizon=4)
    cfg = SwarmConfig(n_particles=16, depth=2, n_top=4)
    _, trace = plan(model.initial_latent(), model, cfg, 1.0, gen(2))
    out = write_trace(trace, tmp_path / "trace.json")
    payload = json.loads(out.read_text())
    assert payload["schema"] == "swarm-trace/1"
    assert len(payload["particles"]) == 16
    assert len(payload["selected"]) == 4
    assert sum(payload["distribution"]) == pytest.approx(1.0)


# ------------------------------------------------------------------- MCTS


def test_mcts_budget_one_returns_prior():
    model = TwoChoiceExactModel(horizon=3)
    dist = mcts_baseline(model.initial_latent(), model, budget=1, gamma=1.0)
    assert dist.tolist() == pytest.approx([0.5, 0.5])


def test_mcts_finds_optimal_action():
    model = TwoChoiceExactModel(horizon=3)
    dist = mcts_baseline(model.initial_latent(), model, budget=120, gamma=1.0)
    assert int(np.argmax(dist)) == 0

"""Q-learning loop: determinism contract, update math, exploration."""

import math

import numpy as np
import pytest
from scipy import stats

from routegame.engine import CompiledGame
from routegame.learning import (
    DEFAULT_Q_INIT,
    EpisodeConfig,
    LearningError,
    PopulationState,
    QAgent,
    epsilon_at,
    q_update,
    run_episode,
    run_seeds,
    select_action,
)
from routegame.scenarios import build_amsterdam, build_braess


def cfg_for(net, steps=40, **kw):
    kw.setdefault("alphas", tuple(0.3 for _ in net.groups))
    return EpisodeConfig(steps=steps, **kw)


# --- schedule and scalar pieces ----------------------------------------------


def test_epsilon_schedule_shape():
    assert epsilon_at(0, 1.0, 0.01, 100.0) == 1.0
    assert math.isclose(epsilon_at(100, 1.0, 0.01, 100.0), 0.01 + 0.99 / math.e)
    assert math.isclose(epsilon_at(10**9, 1.0, 0.01, 100.0), 0.01)
    with pytest.raises(ValueError, match="tau"):
        epsilon_at(5, 1.0, 0.01, 0.0)
    with pytest.raises(ValueError, match="step"):
        epsilon_at(-1, 1.0, 0.01, 10.0)


def test_q_update_formula():
    agent = QAgent(q=np.array([1.0, 5.0, 3.0]), alpha=0.25, gamma=0.5)
    q_update(agent, chosen=1, reward=-4.0)
    # target uses the max taken before the write: -4 + 0.5 * 5
    assert np.allclose(agent.q, [1.0, 5.0 + 0.25 * (-4.0 + 2.5 - 5.0), 3.0])


def test_select_action_greedy_and_explore():
    rng = np.random.default_rng(0)
    agent = QAgent(q=np.array([0.0, 2.0, 1.0]), alpha=0.1)
    picks = {select_action(agent, 0.0, rng) for _ in range(50)}
    assert picks == {1}
    counts = np.bincount(
        [select_action(agent, 1.0, rng) for _ in range(6000)], minlength=3
    )
    assert stats.chisquare(counts).pvalue > 1e-3


def test_select_action_breaks_ties_uniformly():
    rng = np.random.default_rng(1)
    agent = QAgent(q=np.array([2.0, 0.0, 2.0, 2.0]), alpha=0.1)
    counts = np.bincount(
        [select_action(agent, 0.0, rng) for _ in range(6000)], minlength=4
    )
    assert counts[1] == 0
    assert stats.chisquare(counts[[0, 2, 3]]).pvalue > 1e-3


# --- configuration validation -------------------------------------------------


@pytest.mark.parametrize(
    "kw, message",
    [
        (dict(steps=-1), "steps"),
        (dict(alphas=(0.1,)), "learning rates for"),
        (dict(alphas=(0.0, 0.1)), "learning rates must lie"),
        (dict(alphas=(0.1, 1.5)), "learning rates must lie"),
        (dict(gamma=1.5), "gamma"),
        (dict(eps0=1.5), "eps0"),
        (dict(eps_min=-0.1), "eps_min"),
        (dict(eps0=0.1, eps_min=0.5), "exceeds"),
        (dict(tau=0.0), "tau"),
        (dict(q_init=(1.0, -1.0)), "q_init"),
        (dict(master_seed=-1), "nonnegative"),
    ],
)
def test_config_validation(kw, message):
    net = build_braess(True, n_per_source=3)
    base = dict(steps=5, alphas=(0.1, 0.1))
    base.update(kw)
    with pytest.raises(ValueError, match=message):
        EpisodeConfig(**base).validate(net)


def test_tau_defaults_to_a_fifth_of_steps():
    assert EpisodeConfig(steps=500, alphas=(0.1,)).resolved_tau() == 100.0
    assert EpisodeConfig(steps=2, alphas=(0.1,)).resolved_tau() == 1.0
    assert EpisodeConfig(steps=10, alphas=(0.1,), tau=7.0).resolved_tau() == 7.0


# --- determinism contract ------------------------------------------------------


def test_same_key_bitwise_identical():
    net = build_braess(True, n_per_source=6)
    game = CompiledGame.build(net)
    cfg = cfg_for(net, master_seed=9, seed_index=4)
    a = run_episode(game, cfg)
    b = run_episode(game, cfg)
    assert np.array_equal(a.social, b.social)
    assert np.array_equal(a.counts, b.counts)
    assert all(np.array_equal(x, y) for x, y in zip(a.final_q, b.final_q))


def test_different_seed_index_differs():
    net = build_braess(True, n_per_source=6)
    game = CompiledGame.build(net)
    a = run_episode(game, cfg_for(net, seed_index=0))
    b = run_episode(game, cfg_for(net, seed_index=1))
    assert not np.array_equal(a.social, b.social)


def test_q_init_comes_from_block_zero():
    net = build_braess(True, n_per_source=5)
    cfg = cfg_for(net, steps=0, master_seed=3, seed_index=8)
    res = run_episode(net, cfg)
    bg = np.random.Philox(counter=[0, 0, 0, 0], key=[3, 8])
    draws = np.random.Generator(bg).random((10, 3))
    lo, hi = DEFAULT_Q_INIT
    assert np.array_equal(res.final_q[0], lo + (hi - lo) * draws[:5])
    assert np.array_equal(res.final_q[1], lo + (hi - lo) * draws[5:])


def test_step_draws_come_from_block_t_plus_one():
    # replay step 0 by hand from the documented RNG layout: agent k owns
    # column k of the (3, n) uniform matrix drawn from counter block 1
    net = build_braess(True, n_per_source=4)
    game = CompiledGame.build(net)
    cfg = cfg_for(net, steps=1, master_seed=5, seed_index=1, eps0=0.7, eps_min=0.7)
    res = run_episode(game, cfg)

    q0 = np.random.Generator(np.random.Philox(counter=[0, 0, 0, 0], key=[5, 1])).random((8, 3))
    q0 = DEFAULT_Q_INIT[0] + (DEFAULT_Q_INIT[1] - DEFAULT_Q_INIT[0]) * q0
    u = np.random.Generator(np.random.Philox(counter=[0, 0, 0, 1], key=[5, 1])).random((3, 8))
    picks = []
    for k in range(8):
        if u[0, k] < 0.7:
            picks.append(min(int(u[1, k] * 3), 2))
        else:
            ties = np.flatnonzero(q0[k] == q0[k].max())
            picks.append(int(ties[min(int(u[2, k] * len(ties)), len(ties) - 1)]))
    want = np.bincount(
        [p + (0 if k < 4 else 3) for k, p in enumerate(picks)], minlength=6
    )
    assert np.array_equal(res.counts[0], want)


def test_merged_and_groupwise_paths_agree_bitwise():
    # equal strategy counts trigger the merged path; force the groupwise
    # path on an identical state and compare every step exactly
    net = build_braess(True, n_per_source=7)
    game = CompiledGame.build(net)
    cfg = cfg_for(net, steps=60, master_seed=2, seed_index=3, alphas=(0.5, 0.125))
    merged = PopulationState(game, cfg)
    assert merged._merged
    forced = PopulationState(game, cfg)
    forced._merged = False
    for t in range(cfg.steps):
        counts_m, social_m, avg_m = merged.step(t)
        counts_g, social_g, avg_g = forced.step(t)
        assert np.array_equal(counts_m, counts_g), t
        assert social_m == social_g, t
        assert np.array_equal(avg_m, avg_g), t
    assert all(np.array_equal(a, b) for a, b in zip(merged.q, forced.q))


def test_unequal_widths_use_groupwise_path():
    net = build_amsterdam("A", n_per_source=5)
    game = CompiledGame.build(net)
    state = PopulationState(game, cfg_for(net, alphas=(0.2, 0.2)))
    assert not state._merged
    res = run_episode(game, cfg_for(net, steps=25, alphas=(0.2, 0.2)))
    assert res.social.shape == (25,)
    assert res.counts.sum(axis=1).tolist() == [10] * 25


# --- episode accounting ---------------------------------------------------------


def test_recorded_costs_match_engine():
    from routegame.engine import AggregateProfile, cost_report

    net = build_braess(True, n_per_source=6)
    game = CompiledGame.build(net)
    res = run_episode(game, cfg_for(net, steps=30, master_seed=1))
    slices = game.group_slices
    for t in (0, 11, 29):
        counts = tuple(tuple(int(c) for c in res.counts[t][sl]) for sl in slices)
        report = cost_report(net, AggregateProfile.from_counts(net, counts))
        assert res.social[t] == float(report.social)
        for gi, g in enumerate(net.groups):
            assert res.group_avg[t, gi] == float(report.group_averages[g.name])


def test_zero_steps_episode():
    net = build_braess(False, n_per_source=3)
    res = run_episode(net, cfg_for(net, steps=0))
    assert res.social.shape == (0,)
    assert len(res.final_q) == 2


def test_run_seeds_matches_individual_runs():
    net = build_braess(True, n_per_source=4)
    game = CompiledGame.build(net)
    cfg = cfg_for(net, steps=15, master_seed=7)
    batch = run_seeds(game, cfg, seeds=[0, 2])
    solo = run_episode(game, cfg_for(net, steps=15, master_seed=7, seed_index=2))
    assert np.array_equal(batch[1].social, solo.social)
    assert batch[0].config.seed_index == 0


def test_bound_check_raises_on_corruption():
    net = build_braess(True, n_per_source=3)
    state = PopulationState(CompiledGame.build(net), cfg_for(net))
    state.q[0][0, 0] = 1e9
    with pytest.raises(LearningError, match="escaped"):
        state.check_bounds(0)


def test_q_values_stay_bounded_over_run():
    net = build_braess(True, n_per_source=5)
    game = CompiledGame.build(net)
    cfg = cfg_for(net, steps=2500, gamma=0.9, alphas=(1.0, 1.0))
    res = run_episode(game, cfg)  # the in-loop check would raise on escape
    bound = PopulationState(game, cfg).q_bound
    assert max(float(np.abs(q).max()) for q in res.final_q) <= bound

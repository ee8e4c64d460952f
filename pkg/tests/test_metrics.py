"""Metric math and the CSV interchange format."""

import math

import numpy as np
import pytest
from scipy import stats

from routegame.engine import CompiledGame
from routegame.learning import EpisodeConfig, run_episode
from routegame.metrics import (
    AGGREGATE_COLUMNS,
    SEED_COLUMNS,
    aggregate_runs,
    disparity_series,
    parse_ratio,
    pol_at,
    read_aggregate_csv,
    read_seed_csv,
    resolve_alphas,
    sign_test_p,
    smooth,
    write_aggregate_csv,
    write_seed_csv,
)
from routegame.scenarios import build_braess


def test_pol_at_scalar_and_vector():
    assert pol_at(450.0, 300.0) == 1.5
    out = pol_at(np.array([300.0, 330.0]), 300.0)
    assert np.allclose(out, [1.0, 1.1])
    with pytest.raises(ValueError, match="positive"):
        pol_at(10.0, 0.0)


def test_smooth_matches_direct_average():
    rng = np.random.default_rng(5)
    x = rng.normal(size=57)
    for window in (1, 2, 10, 57, 80):
        got = smooth(x, window)
        want = [x[max(0, t - window + 1) : t + 1].mean() for t in range(len(x))]
        assert np.allclose(got, want), window
    assert smooth(np.array([]), 4).size == 0
    with pytest.raises(ValueError, match="window"):
        smooth(x, 0)


def test_smooth_does_not_alias_input():
    x = np.ones(5)
    y = smooth(x, 1)
    y[0] = 7.0
    assert x[0] == 1.0


def test_aggregate_runs_statistics():
    runs = [np.array([1.0, 4.0]), np.array([3.0, 8.0]), np.array([5.0, 0.0])]
    agg = aggregate_runs(runs)
    assert np.allclose(agg.mean, [3.0, 4.0])
    assert np.allclose(agg.sd, np.std(np.stack(runs), axis=0, ddof=1))
    assert np.allclose(agg.ci95, 1.96 * agg.sd / math.sqrt(3))
    assert agg.n_runs == 3


def test_aggregate_runs_degenerate_and_errors():
    one = aggregate_runs([np.array([2.0, 2.0])])
    assert one.n_runs == 1 and not one.sd.any() and not one.ci95.any()
    with pytest.raises(ValueError, match="at least one"):
        aggregate_runs([])
    with pytest.raises(ValueError, match="mismatched"):
        aggregate_runs([np.zeros(3), np.zeros(4)])


def test_parse_ratio_forms():
    from fractions import Fraction

    assert parse_ratio("5:1") == 5
    assert parse_ratio("1:5") == Fraction(1, 5)
    assert parse_ratio(" 3/4 ") == Fraction(3, 4)
    assert parse_ratio("2") == 2
    for bad in ("0", "-1", "1:0", "fast"):
        with pytest.raises(ValueError):
            parse_ratio(bad)


def test_resolve_alphas_identities():
    for mean, ratio in ((0.2, 5), (0.2, 0.2), (0.1, 3), (0.5, 1)):
        a1, a2 = resolve_alphas(mean, ratio)
        assert math.isclose((a1 + a2) / 2, mean)
        assert math.isclose(a1 / a2, float(ratio))
    with pytest.raises(ValueError, match="leave"):
        resolve_alphas(0.8, 9)  # faster rate would exceed 1
    with pytest.raises(ValueError, match="positive"):
        resolve_alphas(0.0, 2)
    with pytest.raises(ValueError, match="positive"):
        resolve_alphas(0.2, -1)


def test_sign_test_matches_binomial_tail():
    for wins, n in ((0, 10), (10, 10), (7, 10), (30, 40), (20, 40)):
        want = stats.binomtest(wins, n, 0.5, alternative="greater").pvalue
        assert math.isclose(sign_test_p(wins, n), want, rel_tol=1e-12)
    assert sign_test_p(0, 0) == 1.0
    with pytest.raises(ValueError):
        sign_test_p(5, 4)


@pytest.fixture(scope="module")
def small_result():
    net = build_braess(True, n_per_source=4)
    cfg = EpisodeConfig(steps=30, alphas=(0.3, 0.3), master_seed=11, seed_index=2)
    return run_episode(CompiledGame.build(net), cfg)


def test_disparity_series_is_group_gap(small_result):
    sd = disparity_series(small_result)
    assert np.array_equal(sd, small_result.group_avg[:, 0] - small_result.group_avg[:, 1])


def test_seed_csv_round_trip(tmp_path, small_result):
    p = tmp_path / "seed_2.csv"
    write_seed_csv(p, "unit-run", 2, small_result, so_cost=12.0)
    back = read_seed_csv(p)
    assert back.run_id == "unit-run" and back.seed == 2
    assert back.groups == small_result.group_names
    # repr formatting round-trips every float exactly
    assert np.array_equal(back.avg_cost, small_result.group_avg)
    assert np.array_equal(back.social, small_result.social)
    assert np.array_equal(back.pol, small_result.social / 12.0)
    assert np.array_equal(back.sd, disparity_series(small_result))
    header = p.read_text().splitlines()[0]
    assert header == ",".join(SEED_COLUMNS)


def test_read_seed_csv_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("step,group\n0,G\n", encoding="utf-8")
    with pytest.raises(ValueError, match="unexpected header"):
        read_seed_csv(p)
    p.write_text(",".join(SEED_COLUMNS) + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="no data rows"):
        read_seed_csv(p)


def test_aggregate_csv_round_trip(tmp_path):
    runs = [np.linspace(1, 2, 9), np.linspace(2, 1, 9)]
    social = aggregate_runs(runs)
    pol = aggregate_runs([r / 1.5 for r in runs])
    sd = aggregate_runs([r - 1.4 for r in runs])
    p = tmp_path / "aggregate.csv"
    write_aggregate_csv(p, social, pol, sd, window=7)
    back = read_aggregate_csv(p)
    assert tuple(back) == AGGREGATE_COLUMNS
    assert np.array_equal(back["social_mean"], social.mean)
    assert np.array_equal(back["pol_ci95"], pol.ci95)
    assert np.array_equal(back["sd_sd"], sd.sd)
    assert set(back["seeds"]) == {2.0} and set(back["window"]) == {7.0}
    with pytest.raises(ValueError, match="inconsistent run counts"):
        write_aggregate_csv(p, social, pol, aggregate_runs(runs[:1]), window=7)

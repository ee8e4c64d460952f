"""Learning-curve metrics and the CSV interchange format.

Per-seed CSV schema (one row per step per group, header mandatory,
UTF-8, '.' decimal separator):

    run_id,seed,step,group,avg_cost,social_cost,pol,sd

social_cost, pol and sd repeat across the group rows of a step;
avg_cost is the group's own mean agent cost. pol is the step's realized
social cost divided by the certified optimum cost, so with a certified
optimum it can never drop below 1. sd is the average cost of the first
group minus that of the second (positive favors the second group).

The aggregate CSV carries cross-seed statistics of the (optionally
smoothed) per-step series:

    step,social_mean,social_sd,social_ci95,pol_mean,pol_sd,pol_ci95,
    sd_mean,sd_sd,sd_ci95,seeds,window

Floats are written with repr-shortest formatting, which round-trips
exactly, so byte-identical files mean identical results.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .learning import EpisodeResult

SEED_COLUMNS = ("run_id", "seed", "step", "group", "avg_cost", "social_cost", "pol", "sd")
AGGREGATE_COLUMNS = (
    "step",
    "social_mean", "social_sd", "social_ci95",
    "pol_mean", "pol_sd", "pol_ci95",
    "sd_mean", "sd_sd", "sd_ci95",
    "seeds", "window",
)
DEFAULT_WINDOW = 100


def pol_at(social: np.ndarray | float, so_cost: float) -> np.ndarray | float:
    """Realized social cost over optimum cost; requires a positive optimum."""
    if so_cost <= 0:
        raise ValueError(f"optimum cost must be positive, got {so_cost}")
    return social / so_cost


def smooth(series: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average; the first window-1 points average what exists.

    Output length equals input length, so curves stay aligned with steps.
    window=1 returns the series unchanged.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if window == 1 or len(x) == 0:
        return x.copy()
    c = np.cumsum(x)
    out = np.empty_like(x)
    head = min(window, len(x))
    out[:head] = c[:head] / np.arange(1, head + 1)
    if len(x) > window:
        out[window:] = (c[window:] - c[:-window]) / window
    return out


@dataclass(frozen=True)
class AggregateStats:
    """Pointwise cross-seed statistics of one metric series."""

    mean: np.ndarray
    sd: np.ndarray
    ci95: np.ndarray
    n_runs: int


def aggregate_runs(series: Sequence[np.ndarray]) -> AggregateStats:
    """Pointwise mean, sample standard deviation and 95% CI half-width.

    A single run has sd and CI of zero by convention. All series must
    share one length.
    """
    if not series:
        raise ValueError("need at least one run to aggregate")
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"runs have mismatched lengths {sorted(lengths)}")
    m = np.stack([np.asarray(s, dtype=np.float64) for s in series])
    n = m.shape[0]
    mean = m.mean(axis=0)
    if n == 1:
        zeros = np.zeros_like(mean)
        return AggregateStats(mean=mean, sd=zeros, ci95=zeros.copy(), n_runs=1)
    sd = m.std(axis=0, ddof=1)
    ci95 = 1.96 * sd / math.sqrt(n)
    return AggregateStats(mean=mean, sd=sd, ci95=ci95, n_runs=n)


def parse_ratio(text: str) -> Fraction:
    """Parse a rate ratio like '5:1', '1/5' or '2' into an exact fraction."""
    s = text.strip().replace(":", "/")
    try:
        r = Fraction(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot parse ratio {text!r}") from exc
    if r <= 0:
        raise ValueError(f"ratio must be positive, got {text!r}")
    return r


def resolve_alphas(mean_alpha: float, ratio: Fraction | float) -> tuple[float, float]:
    """Two learning rates with the given mean and first/second ratio.

    alpha1 = 2 * mean * r / (1 + r) and alpha2 = 2 * mean / (1 + r), so
    (alpha1 + alpha2) / 2 == mean_alpha and alpha1 / alpha2 == ratio.
    Both must land in (0, 1].
    """
    r = float(ratio)
    if r <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    if mean_alpha <= 0:
        raise ValueError(f"mean learning rate must be positive, got {mean_alpha}")
    a1 = 2.0 * mean_alpha * r / (1.0 + r)
    a2 = 2.0 * mean_alpha / (1.0 + r)
    for a in (a1, a2):
        if not 0 < a <= 1:
            raise ValueError(
                f"resolved rates ({a1:.4g}, {a2:.4g}) leave (0, 1]; "
                f"lower the mean or the ratio"
            )
    return a1, a2


def sign_test_p(wins: int, n: int) -> float:
    """One-sided exact binomial tail: P[X >= wins] for X ~ Binomial(n, 1/2)."""
    if not 0 <= wins <= n:
        raise ValueError(f"wins must lie in [0, {n}], got {wins}")
    if n == 0:
        return 1.0
    tail = sum(math.comb(n, k) for k in range(wins, n + 1))
    return float(Fraction(tail, 2**n))


def disparity_series(result: EpisodeResult) -> np.ndarray:
    """Average cost gap between the first two groups, per step."""
    if result.group_avg.shape[1] < 2:
        return np.zeros(len(result.social))
    return result.group_avg[:, 0] - result.group_avg[:, 1]


def write_seed_csv(
    path: str | Path,
    run_id: str,
    seed: int,
    result: EpisodeResult,
    so_cost: float,
) -> None:
    """One finished episode to disk in the per-seed schema."""
    sd = disparity_series(result)
    pol = pol_at(result.social, so_cost)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SEED_COLUMNS)
        for t in range(len(result.social)):
            for gi, gname in enumerate(result.group_names):
                w.writerow(
                    (
                        run_id,
                        seed,
                        t,
                        gname,
                        repr(float(result.group_avg[t, gi])),
                        repr(float(result.social[t])),
                        repr(float(pol[t])),
                        repr(float(sd[t])),
                    )
                )


@dataclass(frozen=True)
class SeedSeries:
    """Per-step series recovered from one per-seed CSV."""

    run_id: str
    seed: int
    groups: tuple[str, ...]
    avg_cost: np.ndarray   # (T, G)
    social: np.ndarray     # (T,)
    pol: np.ndarray        # (T,)
    sd: np.ndarray         # (T,)


def read_seed_csv(path: str | Path) -> SeedSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SEED_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    run_id = rows[0][0]
    seed = int(rows[0][1])
    groups: list[str] = []
    for row in rows:
        if int(row[2]) != 0:
            break
        groups.append(row[3])
    g = len(groups)
    if g == 0 or len(rows) % g:
        raise ValueError(f"{path}: rows do not tile into {g} groups")
    t_count = len(rows) // g
    avg = np.empty((t_count, g))
    social = np.empty(t_count)
    pol = np.empty(t_count)
    sd = np.empty(t_count)
    for i, row in enumerate(rows):
        t, gi = divmod(i, g)
        if int(row[2]) != t or row[3] != groups[gi]:
            raise ValueError(f"{path}: unexpected row order at line {i + 2}")
        avg[t, gi] = float(row[4])
        social[t] = float(row[5])
        pol[t] = float(row[6])
        sd[t] = float(row[7])
    return SeedSeries(
        run_id=run_id, seed=seed, groups=tuple(groups),
        avg_cost=avg, social=social, pol=pol, sd=sd,
    )


def write_aggregate_csv(
    path: str | Path,
    social: AggregateStats,
    pol: AggregateStats,
    sd: AggregateStats,
    window: int,
) -> None:
    n = {social.n_runs, pol.n_runs, sd.n_runs}
    if len(n) != 1:
        raise ValueError(f"inconsistent run counts {n}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for t in range(len(social.mean)):
            w.writerow(
                (
                    t,
                    repr(float(social.mean[t])), repr(float(social.sd[t])), repr(float(social.ci95[t])),
                    repr(float(pol.mean[t])), repr(float(pol.sd[t])), repr(float(pol.ci95[t])),
                    repr(float(sd.mean[t])), repr(float(sd.sd[t])), repr(float(sd.ci95[t])),
                    social.n_runs,
                    window,
                )
            )


def read_aggregate_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != AGGREGATE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        cols = {name: [] for name in AGGREGATE_COLUMNS}
        for row in reader:
            for name, value in zip(AGGREGATE_COLUMNS, row):
                cols[name].append(float(value))
    return {name: np.asarray(vals) for name, vals in cols.items()}

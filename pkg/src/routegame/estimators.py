"""Estimator-style wrappers around the solvers and the learning loop.

These follow the scikit-learn convention: constructor parameters are
plain hyperparameters, fit(network) performs the computation, results
land in trailing-underscore attributes, and get_params() round-trips the
configuration (experiment manifests are built from it). The wrappers
stay thin; all logic lives in the functional modules.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .engine import CompiledGame
from .learning import EpisodeConfig, run_episode
from .network import Network, check_network
from .solvers import nash_multistart, social_optimum


class NashSolver(BaseEstimator):
    """Best-response dynamics from a battery of starts.

    pick chooses which discovered equilibrium becomes result_: "worst"
    (most expensive, the price-of-anarchy convention) or "best".
    """

    def __init__(self, restarts: int = 16, seed: int = 0, pick: str = "worst"):
        self.restarts = restarts
        self.seed = seed
        self.pick = pick

    def fit(self, network: Network, y=None) -> "NashSolver":
        if self.pick not in ("worst", "best"):
            raise ValueError(f"pick must be 'worst' or 'best', got {self.pick!r}")
        check_network(network)
        results = nash_multistart(network, restarts=self.restarts, seed=self.seed)
        self.results_ = results
        self.result_ = results[-1] if self.pick == "worst" else results[0]
        self.profile_ = self.result_.profile
        self.total_cost_ = float(self.result_.total_cost)
        self.group_averages_ = {
            k: float(v) for k, v in self.result_.group_averages.items()
        }
        self.certified_ = self.result_.certified
        self.n_equilibria_ = len(results)
        return self


class SocialOptimumSolver(BaseEstimator):
    """Exhaustive (or, over budget, local-search) total-cost minimizer."""

    def __init__(self, enum_budget: int = 50_000_000, restarts: int = 32, seed: int = 0):
        self.enum_budget = enum_budget
        self.restarts = restarts
        self.seed = seed

    def fit(self, network: Network, y=None) -> "SocialOptimumSolver":
        check_network(network)
        self.result_ = social_optimum(
            network, enum_budget=self.enum_budget, restarts=self.restarts, seed=self.seed
        )
        self.profile_ = self.result_.profile
        self.total_cost_ = float(self.result_.total_cost)
        self.certified_ = self.result_.certified
        return self


class QLearningSimulator(BaseEstimator):
    """One learning episode on a network, recorded step by step.

    alpha may be a single rate shared by all groups or one rate per
    group. tau=None resolves to steps / 5.
    """

    def __init__(
        self,
        steps: int = 10_000,
        alpha: float | Sequence[float] = 0.2,
        gamma: float = 0.0,
        eps0: float = 1.0,
        eps_min: float = 0.01,
        tau: float | None = None,
        q_init: tuple[float, float] = (-2.0, 0.0),
        master_seed: int = 0,
        seed_index: int = 0,
    ):
        self.steps = steps
        self.alpha = alpha
        self.gamma = gamma
        self.eps0 = eps0
        self.eps_min = eps_min
        self.tau = tau
        self.q_init = q_init
        self.master_seed = master_seed
        self.seed_index = seed_index

    def episode_config(self, network: Network) -> EpisodeConfig:
        if isinstance(self.alpha, (int, float)):
            alphas = tuple(float(self.alpha) for _ in network.groups)
        else:
            alphas = tuple(float(a) for a in self.alpha)
        return EpisodeConfig(
            steps=self.steps,
            alphas=alphas,
            gamma=self.gamma,
            eps0=self.eps0,
            eps_min=self.eps_min,
            tau=self.tau,
            q_init=(float(self.q_init[0]), float(self.q_init[1])),
            master_seed=self.master_seed,
            seed_index=self.seed_index,
        )

    def fit(self, network: Network, y=None) -> "QLearningSimulator":
        check_network(network)
        game = CompiledGame.build(network)
        result = run_episode(game, self.episode_config(network))
        self.result_ = result
        self.social_ = result.social
        self.group_avg_ = result.group_avg
        self.counts_ = result.counts
        self.group_names_ = result.group_names
        self.final_q_ = result.final_q
        return self

"""Independent Q-learning over agent populations on a routing network.

Every agent keeps one Q-value per strategy (the game is stateless and
rewards arrive immediately, so there is nothing else to condition on).
Each step all agents pick strategies with epsilon-greedy exploration,
the realized loads determine path costs, and every agent updates the
Q-value of its own choice with reward = minus its realized path cost.
Updates are synchronous: all rewards are computed from the same joint
outcome before any Q table changes.

Determinism contract: draws come from a counter-based generator keyed
by (master_seed, seed_index). Counter block 0 covers Q initialization;
block t+1 covers step t, in which agent k always owns column k of the
step's 3 x n uniform matrix (explore gate, uniform strategy pick,
greedy tie-break). Results are therefore bit-identical regardless of
scheduling, worker count or recorded history.

Costs are accounted in the network's integer scaling (engine
CompiledGame), with one float division per recorded quantity at the
boundary. Recorded social costs are thus correctly rounded, and any
recorded social cost is >= the certified optimum's float value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .engine import CompiledGame
from .network import Network

DEFAULT_EPS0 = 1.0
DEFAULT_EPS_MIN = 0.01
DEFAULT_GAMMA = 0.0
# fresh Q tables start uniformly below zero so that early realized rewards
# (always negative) do not freeze unexplored strategies at an optimistic 0
DEFAULT_Q_INIT = (-2.0, 0.0)
BOUND_CHECK_EVERY = 1000


class LearningError(RuntimeError):
    """Broken invariant inside the learning loop (a bug, not bad data)."""


def epsilon_at(t: int, eps0: float, eps_min: float, tau: float) -> float:
    """Exploration rate at step t: eps_min + (eps0 - eps_min) * exp(-t / tau)."""
    if t < 0:
        raise ValueError(f"step must be nonnegative, got {t}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return eps_min + (eps0 - eps_min) * math.exp(-t / tau)


@dataclass
class QAgent:
    """Single learner: one Q-value per strategy of its group."""

    q: np.ndarray
    alpha: float
    gamma: float = DEFAULT_GAMMA


def select_action(agent: QAgent, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy pick; greedy ties break uniformly at random.

    Always consumes exactly three uniforms (gate, uniform pick, tie
    break) so a scalar replay sees the same stream as the vectorized
    loop.
    """
    u_gate, u_pick, u_tie = rng.random(3)
    k = len(agent.q)
    if u_gate < epsilon:
        return min(int(u_pick * k), k - 1)
    top = agent.q.max()
    ties = np.flatnonzero(agent.q == top)
    return int(ties[min(int(u_tie * len(ties)), len(ties) - 1)])


def q_update(agent: QAgent, chosen: int, reward: float) -> QAgent:
    """Standard update toward reward + gamma * max(q), max taken pre-write."""
    best_next = float(agent.q.max())
    agent.q[chosen] += agent.alpha * (reward + agent.gamma * best_next - agent.q[chosen])
    return agent


@dataclass(frozen=True)
class EpisodeConfig:
    """One seed's worth of learning on one network."""

    steps: int
    alphas: tuple[float, ...]            # one learning rate per group
    gamma: float = DEFAULT_GAMMA
    eps0: float = DEFAULT_EPS0
    eps_min: float = DEFAULT_EPS_MIN
    tau: float | None = None             # None resolves to steps / 5
    q_init: tuple[float, float] = DEFAULT_Q_INIT
    master_seed: int = 0
    seed_index: int = 0

    def resolved_tau(self) -> float:
        if self.tau is not None:
            return self.tau
        return max(self.steps / 5.0, 1.0)

    def validate(self, net: Network) -> None:
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if len(self.alphas) != len(net.groups):
            raise ValueError(
                f"{len(self.alphas)} learning rates for {len(net.groups)} groups"
            )
        for a in self.alphas:
            if not 0 < a <= 1:
                raise ValueError(f"learning rates must lie in (0, 1], got {a}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name, v in (("eps0", self.eps0), ("eps_min", self.eps_min)):
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.eps_min > self.eps0:
            raise ValueError(f"eps_min {self.eps_min} exceeds eps0 {self.eps0}")
        if self.tau is not None and self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.q_init[0] > self.q_init[1]:
            raise ValueError(f"empty q_init range {self.q_init}")
        if self.master_seed < 0 or self.seed_index < 0:
            raise ValueError("master_seed and seed_index must be nonnegative")


@dataclass
class EpisodeResult:
    """Recorded trajectory of one episode (per-step summaries, no RNG state)."""

    config: EpisodeConfig
    group_names: tuple[str, ...]
    social: np.ndarray        # (T,) float64, exact-to-rounding social cost
    group_avg: np.ndarray     # (T, G) float64 per-group average agent cost
    counts: np.ndarray        # (T, S) int16 agents per flat strategy
    final_q: list[np.ndarray] = field(default_factory=list)


def _block_rng(master_seed: int, seed_index: int, block: int) -> np.random.Generator:
    bg = np.random.Philox(counter=[0, 0, 0, block], key=[master_seed, seed_index])
    return np.random.Generator(bg)


def _greedy_rows(q: np.ndarray, u_tie: np.ndarray) -> np.ndarray:
    """Row argmax with uniform tie-break driven by one uniform per row."""
    top = q.max(axis=1, keepdims=True)
    ties = q == top
    n_ties = ties.sum(axis=1)
    pick = np.minimum((u_tie * n_ties).astype(np.int64), n_ties - 1)
    return (ties.cumsum(axis=1) > pick[:, None]).argmax(axis=1)


class PopulationState:
    """Vectorized per-group Q tables plus the compiled network.

    When every group has the same number of strategies the Q tables live
    in one (n_agents, S) array and each step is a handful of whole
    population operations; otherwise the same row-independent math runs
    group by group. Both paths consume identical RNG columns and perform
    identical elementwise arithmetic, so results are bit-equal.
    """

    def __init__(self, game: CompiledGame, cfg: EpisodeConfig):
        cfg.validate(game.net)
        self.game = game
        self.cfg = cfg
        self.group_sizes = [g.size for g in game.net.groups]
        self.n_agents = sum(self.group_sizes)
        self.offsets = np.cumsum([0] + self.group_sizes)[:-1]
        lo, hi = cfg.q_init
        rng = _block_rng(cfg.master_seed, cfg.seed_index, 0)
        self.q: list[np.ndarray] = [
            lo + (hi - lo) * rng.random((g.size, g.n_strategies))
            for g in game.net.groups
        ]
        widths = {g.n_strategies for g in game.net.groups}
        self._merged = len(widths) == 1
        if self._merged:
            self._qall = np.concatenate(self.q, axis=0)
            self.q = [
                self._qall[off : off + n]
                for off, n in zip(self.offsets, self.group_sizes)
            ]
            self._alpha_col = np.repeat(
                np.asarray(cfg.alphas), self.group_sizes
            )
            # flat strategy index of strategy 0 for each agent's group
            self._strat_base = np.repeat(
                np.asarray([sl.start for sl in game.group_slices]), self.group_sizes
            )
            self._rows = np.arange(self.n_agents)
        # reward magnitude can never exceed the fully congested path cost
        full_loads = np.full(len(game.edge_ids), self.n_agents, dtype=np.int64)
        worst = int(game.strategy_costs_scaled(full_loads).max()) / game.denom
        init_mag = max(abs(lo), abs(hi))
        if cfg.gamma < 1.0:
            self.q_bound = max(init_mag, worst / (1.0 - cfg.gamma)) + 1e-9
        else:
            self.q_bound = math.inf

    def step(self, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance one step; returns (flat counts, social float, group avgs)."""
        cfg = self.cfg
        game = self.game
        eps = epsilon_at(t, cfg.eps0, cfg.eps_min, cfg.resolved_tau())
        u = _block_rng(cfg.master_seed, cfg.seed_index, t + 1).random((3, self.n_agents))
        if self._merged:
            return self._step_merged(u, eps)
        return self._step_groupwise(u, eps)

    def _finish_step(
        self, flat_counts: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, float, np.ndarray]:
        game = self.game
        loads = game.loads_from_counts(flat_counts)
        costs_scaled = game.strategy_costs_scaled(loads)
        social_scaled = int(game.social_cost_scaled(loads))
        rewards_flat = -(costs_scaled / game.denom)
        group_avgs = np.empty(len(self.group_sizes))
        for gi, sl in enumerate(game.group_slices):
            gtotal = int((flat_counts[sl] * costs_scaled[sl]).sum())
            group_avgs[gi] = gtotal / (game.denom * self.group_sizes[gi])
        return costs_scaled, rewards_flat, social_scaled / game.denom, group_avgs

    def _step_merged(self, u: np.ndarray, eps: float):
        game = self.game
        q = self._qall
        k = q.shape[1]
        explore = u[0] < eps
        random_pick = np.minimum((u[1] * k).astype(np.int64), k - 1)
        pick = np.where(explore, random_pick, _greedy_rows(q, u[2]))
        flat_counts = np.bincount(
            self._strat_base + pick, minlength=game.n_flat_strategies
        )
        _, rewards_flat, social, group_avgs = self._finish_step(flat_counts)
        r = rewards_flat[self._strat_base + pick]
        best_next = q.max(axis=1)
        q[self._rows, pick] += self._alpha_col * (
            r + self.cfg.gamma * best_next - q[self._rows, pick]
        )
        return flat_counts, social, group_avgs

    def _step_groupwise(self, u: np.ndarray, eps: float):
        game = self.game
        flat_counts = np.zeros(game.n_flat_strategies, dtype=np.int64)
        picks: list[np.ndarray] = []
        for gi, q in enumerate(self.q):
            lo = self.offsets[gi]
            n, k = q.shape
            u_gate, u_pick, u_tie = u[:, lo : lo + n]
            explore = u_gate < eps
            random_pick = np.minimum((u_pick * k).astype(np.int64), k - 1)
            pick = np.where(explore, random_pick, _greedy_rows(q, u_tie))
            picks.append(pick)
            flat_counts[game.group_slices[gi]] = np.bincount(pick, minlength=k)
        _, rewards_flat, social, group_avgs = self._finish_step(flat_counts)
        for gi, (q, pick) in enumerate(zip(self.q, picks)):
            sl = game.group_slices[gi]
            r = rewards_flat[sl][pick]
            best_next = q.max(axis=1)
            rows = np.arange(q.shape[0])
            q[rows, pick] += self.cfg.alphas[gi] * (
                r + self.cfg.gamma * best_next - q[rows, pick]
            )
        return flat_counts, social, group_avgs

    def check_bounds(self, t: int) -> None:
        worst = max(float(np.abs(q).max()) for q in self.q)
        if worst > self.q_bound:
            raise LearningError(
                f"Q values escaped their bound at step {t}: {worst} > {self.q_bound}"
            )


def run_episode(net: Network | CompiledGame, cfg: EpisodeConfig) -> EpisodeResult:
    """Simulate one full episode and record per-step summaries."""
    game = net if isinstance(net, CompiledGame) else CompiledGame.build(net)
    state = PopulationState(game, cfg)
    T = cfg.steps
    social = np.empty(T)
    group_avg = np.empty((T, len(game.net.groups)))
    counts = np.empty((T, game.n_flat_strategies), dtype=np.int16)
    for t in range(T):
        flat_counts, soc, avgs = state.step(t)
        counts[t] = flat_counts
        social[t] = soc
        group_avg[t] = avgs
        if (t + 1) % BOUND_CHECK_EVERY == 0:
            state.check_bounds(t)
    if T:
        state.check_bounds(T - 1)
    return EpisodeResult(
        config=cfg,
        group_names=tuple(g.name for g in game.net.groups),
        social=social,
        group_avg=group_avg,
        counts=counts,
        final_q=[q.copy() for q in state.q],
    )


def run_seeds(
    net: Network | CompiledGame,
    cfg: EpisodeConfig,
    seeds: Sequence[int],
) -> list[EpisodeResult]:
    """Run the same configuration across seed indices, sequentially."""
    game = net if isinstance(net, CompiledGame) else CompiledGame.build(net)
    return [run_episode(game, replace(cfg, seed_index=int(s))) for s in seeds]

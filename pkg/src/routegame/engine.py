"""Cost accounting for atomic routing games.

Agents inside a group are exchangeable, so a joint outcome is represented
by how many agents of each group play each strategy (an AggregateProfile),
never by per-agent assignments. All public costs are exact Fractions.

The module also provides a compiled, integer-scaled view of a network:
after multiplying by the common denominator of all latency coefficients,
every edge cost at integer load is an integer, so solver enumeration and
the learning loop can run on int64 arrays with zero rounding error and
divide back to float exactly once at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .network import GroupSpec, Network, latency_eval


class ProfileMismatch(ValueError):
    """Profile does not line up with the network's groups or strategy sets."""


@dataclass(frozen=True)
class AggregateProfile:
    """Counts of agents per (group, strategy index), aligned with Network.groups.

    counts[g][s] is the number of agents of group g playing strategy s.
    Hashable, so NE sets and memo tables can hold profiles directly.
    """

    groups: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    @classmethod
    def from_counts(
        cls, net: Network, counts: Mapping[str, Sequence[int]] | Sequence[Sequence[int]]
    ) -> "AggregateProfile":
        if isinstance(counts, Mapping):
            rows = []
            for g in net.groups:
                if g.name not in counts:
                    raise ProfileMismatch(f"missing counts for group {g.name!r}")
                rows.append(tuple(int(c) for c in counts[g.name]))
            extra = set(counts) - {g.name for g in net.groups}
            if extra:
                raise ProfileMismatch(f"counts given for unknown groups {sorted(extra)}")
        else:
            rows = [tuple(int(c) for c in row) for row in counts]
        prof = cls(tuple(g.name for g in net.groups), tuple(rows))
        validate_profile(net, prof)
        return prof

    @classmethod
    def uniform(cls, net: Network) -> "AggregateProfile":
        """Spread each group as evenly as possible, remainder to low indices."""
        rows = []
        for g in net.groups:
            k = g.n_strategies
            base, rem = divmod(g.size, k)
            rows.append(tuple(base + (1 if s < rem else 0) for s in range(k)))
        return cls(tuple(g.name for g in net.groups), tuple(rows))

    @classmethod
    def all_on(cls, net: Network, strategy: int | Sequence[int]) -> "AggregateProfile":
        """Every agent of each group on one strategy (shared or per-group index)."""
        picks = [strategy] * len(net.groups) if isinstance(strategy, int) else list(strategy)
        if len(picks) != len(net.groups):
            raise ProfileMismatch(f"{len(picks)} strategy picks for {len(net.groups)} groups")
        rows = []
        for g, s in zip(net.groups, picks):
            if not 0 <= s < g.n_strategies:
                raise ProfileMismatch(f"group {g.name!r} has no strategy {s}")
            rows.append(tuple(g.size if k == s else 0 for k in range(g.n_strategies)))
        return cls(tuple(g.name for g in net.groups), tuple(rows))

    def count(self, group: str, strategy: int) -> int:
        return self.counts[self.groups.index(group)][strategy]

    def group_row(self, group: str) -> tuple[int, ...]:
        return self.counts[self.groups.index(group)]

    def with_move(self, group_idx: int, s_from: int, s_to: int) -> "AggregateProfile":
        """Profile after one agent of group group_idx switches s_from -> s_to."""
        row = list(self.counts[group_idx])
        if row[s_from] < 1:
            raise ProfileMismatch(
                f"group {self.groups[group_idx]!r} has no agent on strategy {s_from}"
            )
        row[s_from] -= 1
        row[s_to] += 1
        rows = list(self.counts)
        rows[group_idx] = tuple(row)
        return AggregateProfile(self.groups, tuple(rows))


def validate_profile(net: Network, prof: AggregateProfile) -> None:
    """Raise ProfileMismatch unless prof is a complete assignment for net."""
    names = tuple(g.name for g in net.groups)
    if prof.groups != names:
        raise ProfileMismatch(f"profile groups {prof.groups} != network groups {names}")
    if len(prof.counts) != len(net.groups):
        raise ProfileMismatch("profile row count does not match group count")
    for g, row in zip(net.groups, prof.counts):
        if len(row) != g.n_strategies:
            raise ProfileMismatch(
                f"group {g.name!r}: {len(row)} counts for {g.n_strategies} strategies"
            )
        if any(c < 0 for c in row):
            raise ProfileMismatch(f"group {g.name!r}: negative count in {row}")
        if sum(row) != g.size:
            raise ProfileMismatch(
                f"group {g.name!r}: counts sum to {sum(row)}, size is {g.size}"
            )


def edge_loads(net: Network, prof: AggregateProfile) -> dict[str, int]:
    """Number of agents on every edge (zero entries included)."""
    validate_profile(net, prof)
    loads = {e.id: 0 for e in net.edges}
    for g, row in zip(net.groups, prof.counts):
        for path, c in zip(g.strategies, row):
            if c == 0:
                continue
            for eid in path:
                loads[eid] += c
    return loads


def _loads_unchecked(net: Network, prof: AggregateProfile) -> dict[str, int]:
    loads = {e.id: 0 for e in net.edges}
    for g, row in zip(net.groups, prof.counts):
        for path, c in zip(g.strategies, row):
            if c:
                for eid in path:
                    loads[eid] += c
    return loads


def strategy_cost(net: Network, prof: AggregateProfile, group: str, strategy: int) -> Fraction:
    """Exact cost one agent of `group` pays for `strategy` under prof.

    The agent's own presence is part of every edge load; the profile must
    already include it (self-inclusive convention).
    """
    validate_profile(net, prof)
    gi = net.group_index(group)
    if not 0 <= strategy < net.groups[gi].n_strategies:
        raise ProfileMismatch(f"group {group!r} has no strategy {strategy}")
    loads = _loads_unchecked(net, prof)
    emap = net.edge_map()
    path = net.groups[gi].strategies[strategy]
    return sum(
        (latency_eval(emap[eid].latency, loads[eid]) for eid in path), Fraction(0)
    )


def social_cost(net: Network, prof: AggregateProfile) -> Fraction:
    """Total travel time: sum over edges of load * latency(load)."""
    validate_profile(net, prof)
    loads = _loads_unchecked(net, prof)
    emap = net.edge_map()
    return sum(
        (loads[eid] * latency_eval(emap[eid].latency, loads[eid]) for eid in loads),
        Fraction(0),
    )


def group_average_costs(net: Network, prof: AggregateProfile) -> dict[str, Fraction]:
    """Per-group mean agent cost (group totals divided by group size)."""
    validate_profile(net, prof)
    loads = _loads_unchecked(net, prof)
    emap = net.edge_map()
    out: dict[str, Fraction] = {}
    for g, row in zip(net.groups, prof.counts):
        total = Fraction(0)
        for path, c in zip(g.strategies, row):
            if c:
                path_cost = sum(
                    (latency_eval(emap[eid].latency, loads[eid]) for eid in path),
                    Fraction(0),
                )
                total += c * path_cost
        out[g.name] = total / g.size
    return out


def source_disparity(net: Network, prof: AggregateProfile, a: str, b: str) -> Fraction:
    """Average cost of group a minus average cost of group b.

    Positive values favor b (its agents travel faster). Antisymmetric in
    its arguments; zero when a == b.
    """
    avg = group_average_costs(net, prof)
    if a not in avg or b not in avg:
        missing = [n for n in (a, b) if n not in avg]
        raise ProfileMismatch(f"unknown group(s) {missing}")
    return avg[a] - avg[b]


def rosenthal_potential(net: Network, prof: AggregateProfile) -> Fraction:
    """Exact potential: sum over edges of sum_{k=1..load} latency(k).

    For affine latencies the inner sum has the closed form
    base*x + slope*x*(x+1)/2. A single-agent strategy switch changes this
    potential by exactly the mover's cost change, which is what makes
    best-response dynamics terminate.
    """
    validate_profile(net, prof)
    loads = _loads_unchecked(net, prof)
    emap = net.edge_map()
    total = Fraction(0)
    for eid, x in loads.items():
        lat = emap[eid].latency
        total += lat.base * x + lat.slope * Fraction(x * (x + 1), 2)
    return total


@dataclass(frozen=True)
class CostReport:
    """Everything about one outcome: loads, per-strategy and per-group costs."""

    profile: AggregateProfile
    loads: dict[str, int]
    strategy_costs: dict[str, tuple[Fraction, ...]]
    group_averages: dict[str, Fraction]
    social: Fraction
    potential: Fraction

    def to_text(self, net: Network) -> str:
        lines = [f"social cost: {self.social} ({float(self.social):.6g})"]
        for g in net.groups:
            row = self.profile.group_row(g.name)
            avg = self.group_averages[g.name]
            lines.append(f"group {g.name} (n={g.size}, avg cost {float(avg):.6g}):")
            for s, (label, c, cost) in enumerate(
                zip(g.labels, row, self.strategy_costs[g.name])
            ):
                lines.append(f"  [{s}] {label}: {c} agents, cost {float(cost):.6g}")
        used = {eid: x for eid, x in self.loads.items() if x}
        lines.append("edge loads: " + ", ".join(f"{e}={x}" for e, x in sorted(used.items())))
        return "\n".join(lines)


def cost_report(net: Network, prof: AggregateProfile) -> CostReport:
    validate_profile(net, prof)
    loads = _loads_unchecked(net, prof)
    emap = net.edge_map()
    strat_costs: dict[str, tuple[Fraction, ...]] = {}
    for g in net.groups:
        costs = []
        for path in g.strategies:
            costs.append(
                sum((latency_eval(emap[eid].latency, loads[eid]) for eid in path), Fraction(0))
            )
        strat_costs[g.name] = tuple(costs)
    return CostReport(
        profile=prof,
        loads=loads,
        strategy_costs=strat_costs,
        group_averages=group_average_costs(net, prof),
        social=social_cost(net, prof),
        potential=rosenthal_potential(net, prof),
    )


# --- compiled integer view -------------------------------------------------


@dataclass(frozen=True)
class CompiledGame:
    """Integer-scaled arrays for fast exact arithmetic on one network.

    All latency coefficients are multiplied by `denom`, the lcm of their
    denominators. With integer loads every scaled edge latency, path cost
    and social cost is then an integer; int64 is enough for the network
    sizes this package targets (guarded in __post_init__).
    """

    net: Network
    edge_ids: tuple[str, ...]
    denom: int
    base_scaled: np.ndarray   # (E,) int64, base * denom
    slope_scaled: np.ndarray  # (E,) int64, slope * denom
    incidence: np.ndarray     # (S, E) int64, flat strategy -> edges used
    group_sizes: np.ndarray   # (G,) int64
    group_slices: tuple[slice, ...]  # flat strategy rows per group

    @classmethod
    def build(cls, net: Network) -> "CompiledGame":
        edge_ids = tuple(e.id for e in net.edges)
        eidx = {eid: i for i, eid in enumerate(edge_ids)}
        denom = 1
        for e in net.edges:
            denom = math.lcm(denom, e.latency.base.denominator, e.latency.slope.denominator)
        base = np.array([int(e.latency.base * denom) for e in net.edges], dtype=np.int64)
        slope = np.array([int(e.latency.slope * denom) for e in net.edges], dtype=np.int64)

        rows: list[np.ndarray] = []
        slices: list[slice] = []
        at = 0
        for g in net.groups:
            for path in g.strategies:
                row = np.zeros(len(edge_ids), dtype=np.int64)
                for eid in path:
                    row[eidx[eid]] = 1
                rows.append(row)
            slices.append(slice(at, at + g.n_strategies))
            at += g.n_strategies
        inc = np.stack(rows) if rows else np.zeros((0, len(edge_ids)), dtype=np.int64)
        sizes = np.array([g.size for g in net.groups], dtype=np.int64)
        game = cls(
            net=net,
            edge_ids=edge_ids,
            denom=denom,
            base_scaled=base,
            slope_scaled=slope,
            incidence=inc,
            group_sizes=sizes,
            group_slices=tuple(slices),
        )
        game._check_overflow()
        return game

    def _check_overflow(self) -> None:
        n = int(self.group_sizes.sum())
        worst_edge = int(self.base_scaled.max(initial=0)) + int(self.slope_scaled.max(initial=0)) * n
        # social cost bound: every agent on the worst edge, all edges per path
        bound = worst_edge * n * max(1, self.incidence.shape[1])
        if bound >= 2**62:
            raise OverflowError(
                "scaled costs would overflow int64; reduce population or denominators"
            )

    @property
    def n_flat_strategies(self) -> int:
        return self.incidence.shape[0]

    def flat_counts(self, prof: AggregateProfile) -> np.ndarray:
        return np.concatenate([np.asarray(row, dtype=np.int64) for row in prof.counts])

    def profile_from_flat(self, flat: np.ndarray) -> AggregateProfile:
        rows = tuple(
            tuple(int(c) for c in flat[sl]) for sl in self.group_slices
        )
        return AggregateProfile(tuple(g.name for g in self.net.groups), rows)

    def loads_from_counts(self, flat_counts: np.ndarray) -> np.ndarray:
        """(..., S) counts -> (..., E) integer edge loads."""
        return flat_counts @ self.incidence

    def edge_latency_scaled(self, loads: np.ndarray) -> np.ndarray:
        return self.base_scaled + self.slope_scaled * loads

    def strategy_costs_scaled(self, loads: np.ndarray) -> np.ndarray:
        """(..., E) loads -> (..., S) scaled path costs at those loads."""
        lat = self.edge_latency_scaled(loads)
        return lat @ self.incidence.T

    def social_cost_scaled(self, loads: np.ndarray) -> np.ndarray:
        lat = self.edge_latency_scaled(loads)
        return (loads * lat).sum(axis=-1)

    def potential_scaled2(self, loads: np.ndarray) -> np.ndarray:
        """Potential times 2*denom (kept doubled so it stays integral)."""
        return (2 * self.base_scaled * loads + self.slope_scaled * loads * (loads + 1)).sum(
            axis=-1
        )

"""Equilibrium and optimum solvers for atomic routing games.

All computations run on the integer-scaled view of a network (see
engine.CompiledGame), so equilibrium certificates and optimum values are
exact. Best-response dynamics is guaranteed to terminate because every
applied move strictly lowers the Rosenthal potential; the solver checks
that invariant on every step and treats a violation as an internal bug.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .engine import AggregateProfile, CompiledGame, validate_profile
from .network import Network

DEFAULT_ENUM_BUDGET = 50_000_000
# joint pure corners are enumerated only while their count stays this small
MAX_JOINT_CORNERS = 64


class SolverError(RuntimeError):
    """Internal solver failure (budget exhausted or a broken invariant)."""


@dataclass(frozen=True)
class EquilibriumResult:
    """Outcome of a solve: profile plus exact cost summary.

    kind is "nash" or "optimum". certified means the claim was proven:
    a verified unilateral-deviation check for equilibria, exhaustive
    enumeration for optima. Local-search optima are never certified.
    """

    kind: str
    profile: AggregateProfile
    total_cost: Fraction
    group_averages: dict[str, Fraction]
    iterations: int
    certified: bool
    start: str = ""

    @property
    def total_cost_float(self) -> float:
        return float(self.total_cost)


def _scaled_group_tables(game: CompiledGame):
    """Per-group helper arrays for O(1) move deltas.

    For group g with incidence I (S,E) and current scaled edge latencies
    lat, the cost a mover pays after switching i -> j is
    costs0[j] + row_slope[j] - overlap[i, j], where row_slope sums the
    slopes along j and overlap sums slopes of edges shared by i and j.
    """
    tables = []
    for sl in game.group_slices:
        inc = game.incidence[sl]
        row_slope = inc @ game.slope_scaled
        overlap = (inc * game.slope_scaled) @ inc.T
        tables.append((inc, row_slope, overlap))
    return tables


def best_response_step(
    net: Network | CompiledGame, prof: AggregateProfile
) -> tuple[AggregateProfile, bool]:
    """One step of best-response dynamics on an aggregate profile.

    Applies the single move with the largest strict improvement for the
    moving agent; ties break toward the lowest group name, then the lowest
    current strategy index, then the lowest target index. Returns the
    profile unchanged with moved=False when no strict improvement exists
    (the profile is then a Nash equilibrium).
    """
    game = net if isinstance(net, CompiledGame) else CompiledGame.build(net)
    validate_profile(game.net, prof)
    tables = _scaled_group_tables(game)
    flat = game.flat_counts(prof)
    move = _pick_move(game, tables, flat)
    if move is None:
        return prof, False
    g, i, j, _ = move
    gi_start = game.group_slices[g].start
    flat[gi_start + i] -= 1
    flat[gi_start + j] += 1
    return game.profile_from_flat(flat), True


def _group_name_order(game: CompiledGame) -> list[int]:
    names = [g.name for g in game.net.groups]
    return sorted(range(len(names)), key=lambda k: names[k])


def _gain_matrix(tables, g: int, lat: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """gains[i, j]: scaled cost drop for one agent of group g moving i -> j.

    Rows without agents and the diagonal are forced to zero so that only
    feasible strict improvements are positive.
    """
    inc, row_slope, overlap = tables[g]
    costs0 = inc @ lat
    after = costs0[None, :] + row_slope[None, :] - overlap
    gains = costs0[:, None] - after
    np.fill_diagonal(gains, 0)
    gains[counts == 0, :] = 0
    return gains


def _pick_move(game: CompiledGame, tables, flat: np.ndarray, lat: np.ndarray | None = None):
    """Largest-gain move under the documented deterministic tie order.

    Returns (g, i, j, gain_scaled) or None when no strict improvement
    exists. np.argmax scans row-major, so within a group ties already
    fall to the lowest (i, j); across groups the name order wins.
    """
    if lat is None:
        lat = game.edge_latency_scaled(game.loads_from_counts(flat))
    best = None
    best_gain = 0
    for g in _group_name_order(game):
        gains = _gain_matrix(tables, g, lat, flat[game.group_slices[g]])
        k = int(np.argmax(gains))
        gain = int(gains.flat[k])
        if gain > best_gain:
            best_gain = gain
            i, j = divmod(k, gains.shape[1])
            best = (g, i, j, gain)
    return best


def _result_from_flat(
    game: CompiledGame, flat: np.ndarray, kind: str, iterations: int, certified: bool, start: str
) -> EquilibriumResult:
    loads = game.loads_from_counts(flat)
    total = Fraction(int(game.social_cost_scaled(loads)), game.denom)
    lat = game.edge_latency_scaled(loads)
    averages: dict[str, Fraction] = {}
    for g, sl in zip(game.net.groups, game.group_slices):
        inc = game.incidence[sl]
        costs = inc @ lat
        tot = int((flat[sl] * costs).sum())
        averages[g.name] = Fraction(tot, game.denom * g.size)
    return EquilibriumResult(
        kind=kind,
        profile=game.profile_from_flat(flat),
        total_cost=total,
        group_averages=averages,
        iterations=iterations,
        certified=certified,
        start=start,
    )


def nash_solve(
    net: Network | CompiledGame,
    start: AggregateProfile | None = None,
    max_iters: int | None = None,
    start_label: str = "",
) -> EquilibriumResult:
    """Run best-response dynamics from `start` until no improving move exists.

    The fixed point is re-verified with verify_ne before being returned.
    Every applied step must strictly lower the Rosenthal potential; the
    solver recomputes the potential each step and raises SolverError if
    the descent ever fails or the iteration budget is exceeded, since
    either would mean a bug rather than a property of the game.
    """
    game = net if isinstance(net, CompiledGame) else CompiledGame.build(net)
    if start is None:
        start = AggregateProfile.uniform(game.net)
        start_label = start_label or "uniform"
    validate_profile(game.net, start)
    if max_iters is None:
        max_iters = 100 * int(game.group_sizes.sum()) * max(1, game.n_flat_strategies) + 1000

    tables = _scaled_group_tables(game)
    flat = game.flat_counts(start)
    loads = game.loads_from_counts(flat)
    phi2 = int(game.potential_scaled2(loads))
    inc = game.incidence
    steps = 0
    while True:
        lat = game.edge_latency_scaled(loads)
        move = _pick_move(game, tables, flat, lat)
        if move is None:
            break
        g, i, j, gain = move
        at = game.group_slices[g].start
        flat[at + i] -= 1
        flat[at + j] += 1
        loads += inc[at + j] - inc[at + i]
        steps += 1
        # the mover's exact cost drop must equal the exact potential drop;
        # anything else means the move bookkeeping is broken
        new_phi2 = int(game.potential_scaled2(loads))
        if new_phi2 != phi2 - 2 * gain:
            raise SolverError(
                f"potential descent violated on step {steps}: "
                f"{phi2} -> {new_phi2}, move gain {gain}"
            )
        phi2 = new_phi2
        if steps > max_iters:
            raise SolverError(f"no fixed point within {max_iters} iterations")

    if not np.array_equal(loads, game.loads_from_counts(flat)):
        raise SolverError("incremental edge loads drifted from the profile")
    result = _result_from_flat(game, flat, "nash", steps, certified=True, start=start_label)
    if not verify_ne(game, result.profile):
        raise SolverError("best-response fixed point failed equilibrium verification")
    return result


def verify_ne(net: Network | CompiledGame, prof: AggregateProfile) -> bool:
    """Exact unilateral-deviation check.

    True iff no agent can strictly lower its own cost by switching
    strategies, accounting for the load its move removes and adds.
    """
    game = net if isinstance(net, CompiledGame) else CompiledGame.build(net)
    validate_profile(game.net, prof)
    tables = _scaled_group_tables(game)
    flat = game.flat_counts(prof)
    lat = game.edge_latency_scaled(game.loads_from_counts(flat))
    for g, sl in enumerate(game.group_slices):
        gains = _gain_matrix(tables, g, lat, flat[sl])
        if (gains > 0).any():
            return False
    return True


def _corner_starts(net: Network) -> list[tuple[AggregateProfile, str]]:
    """Pure profiles where each whole group sits on a single strategy."""
    sizes = [g.n_strategies for g in net.groups]
    combos: list[tuple[int, ...]]
    if math.prod(sizes) <= MAX_JOINT_CORNERS:
        combos = list(itertools.product(*(range(s) for s in sizes)))
    else:
        combos = [tuple(min(k, s - 1) for s in sizes) for k in range(max(sizes))]
    out = []
    for combo in combos:
        out.append((AggregateProfile.all_on(net, list(combo)), f"corner{list(combo)}"))
    return out


def _random_profile(net: Network, rng: np.random.Generator) -> AggregateProfile:
    rows = []
    for g in net.groups:
        picks = rng.integers(0, g.n_strategies, size=g.size)
        rows.append(tuple(int((picks == s).sum()) for s in range(g.n_strategies)))
    return AggregateProfile(tuple(g.name for g in net.groups), tuple(rows))


def nash_multistart(
    net: Network | CompiledGame, restarts: int = 16, seed: int = 0
) -> list[EquilibriumResult]:
    """Best-response dynamics from a deterministic battery of starts.

    Starts are the uniform spread, every pure group-corner (all agents of
    each group on one strategy; capped battery on large strategy spaces)
    and `restarts` seeded random profiles. Distinct fixed points are
    deduplicated and returned sorted by total cost, cheapest first.
    Atomic congestion games generally have many equilibria; the worst
    element of this list is what the price-of-anarchy report uses.
    """
    game = net if isinstance(net, CompiledGame) else CompiledGame.build(net)
    starts: list[tuple[AggregateProfile, str]] = [
        (AggregateProfile.uniform(game.net), "uniform")
    ]
    starts.extend(_corner_starts(game.net))
    rng = np.random.Generator(np.random.Philox(key=seed))
    for r in range(restarts):
        starts.append((_random_profile(game.net, rng), f"random{r}"))

    seen: dict[AggregateProfile, EquilibriumResult] = {}
    for prof, label in starts:
        res = nash_solve(game, prof, start_label=label)
        if res.profile not in seen:
            seen[res.profile] = res
    ordered = sorted(seen.values(), key=lambda r: (r.total_cost, r.profile.counts))
    return ordered


def worst_nash(net: Network | CompiledGame, restarts: int = 16, seed: int = 0) -> EquilibriumResult:
    """Most expensive equilibrium found by nash_multistart."""
    return nash_multistart(net, restarts=restarts, seed=seed)[-1]


def enumeration_size(net: Network) -> int:
    """Number of aggregate profiles: product of per-group compositions."""
    total = 1
    for g in net.groups:
        total *= math.comb(g.size + g.n_strategies - 1, g.n_strategies - 1)
    return total


def _compositions(n: int, k: int) -> np.ndarray:
    """All k-part compositions of n, lexicographically ordered, (m, k) int64."""
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    rows: list[list[int]] = []
    stack: list[int] = []

    def rec(remaining: int, parts_left: int) -> None:
        if parts_left == 1:
            rows.append(stack + [remaining])
            return
        for v in range(remaining + 1):
            stack.append(v)
            rec(remaining - v, parts_left - 1)
            stack.pop()

    rec(n, k)
    return np.asarray(rows, dtype=np.int64)


def _group_components(game: CompiledGame) -> list[list[int]]:
    """Partition group indices into clusters that share at least one edge.

    Groups in different clusters place load on disjoint edge sets, so the
    social cost separates and each cluster can be minimized on its own.
    """
    touched = [
        set(np.flatnonzero(game.incidence[sl].any(axis=0)))
        for sl in game.group_slices
    ]
    parent = list(range(len(touched)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(len(touched)):
        for b in range(a + 1, len(touched)):
            if touched[a] & touched[b]:
                parent[find(a)] = find(b)
    comps: dict[int, list[int]] = {}
    for g in range(len(touched)):
        comps.setdefault(find(g), []).append(g)
    return sorted(comps.values())


def _enumerate_groups(
    game: CompiledGame, group_idx: list[int], chunk: int = 1 << 16
) -> list[np.ndarray]:
    """Exact social-cost minimum over the given groups' joint profiles.

    Only edges those groups can touch enter the cost, so this is correct
    for any edge-disjoint cluster of groups. Profiles are scanned in
    lexicographic order of their concatenated count tuples and the first
    minimum wins, which pins the documented tie-breaking. Returns the
    per-group count rows of the minimizer.
    """
    edges = np.flatnonzero(
        np.concatenate([game.incidence[game.group_slices[g]] for g in group_idx]).any(axis=0)
    )
    base = game.base_scaled[edges]
    slope = game.slope_scaled[edges]
    comp_tables = []
    load_tables = []
    for g in group_idx:
        grp = game.net.groups[g]
        comps = _compositions(grp.size, grp.n_strategies)
        comp_tables.append(comps)
        load_tables.append(comps @ game.incidence[game.group_slices[g]][:, edges])
    radices = [t.shape[0] for t in comp_tables]
    total = math.prod(radices)

    best_cost = None
    best_joint = -1
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        loads = np.zeros((hi - lo, len(edges)), dtype=np.int64)
        rem = np.arange(lo, hi, dtype=np.int64)
        for m, lt in zip(reversed(radices), reversed(load_tables)):
            rem, part = np.divmod(rem, m)
            loads += lt[part]
        cost = (loads * (base + slope * loads)).sum(axis=1)
        k = int(np.argmin(cost))
        c = int(cost[k])
        if best_cost is None or c < best_cost:
            best_cost = c
            best_joint = lo + k
    rows: list[np.ndarray] = [None] * len(group_idx)  # type: ignore[list-item]
    rem = best_joint
    for pos in range(len(radices) - 1, -1, -1):
        rem, part = divmod(rem, radices[pos])
        rows[pos] = comp_tables[pos][part]
    return rows


def _local_search_optimum(
    game: CompiledGame, restarts: int, seed: int
) -> tuple[np.ndarray, int]:
    """Steepest-descent on social cost over single-agent moves, multi-start."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    starts = [game.flat_counts(AggregateProfile.uniform(game.net))]
    for _ in range(max(0, restarts - 1)):
        starts.append(game.flat_counts(_random_profile(game.net, rng)))

    best_flat = None
    best_cost = None
    for flat in starts:
        flat = flat.copy()
        while True:
            loads = game.loads_from_counts(flat)
            # cost delta of moving one agent i -> j inside group g:
            #   sum_{e in j \ i} (b + s(2x+1)) - sum_{e in i \ j} (b + s(2x-1))
            u = game.base_scaled + game.slope_scaled * (2 * loads + 1)
            v = game.base_scaled + game.slope_scaled * (2 * loads - 1)
            best_delta = 0
            move = None
            for g, sl in enumerate(game.group_slices):
                inc = game.incidence[sl]
                add = inc @ u
                sub = inc @ v
                cross_u = (inc * u) @ inc.T
                cross_v = (inc * v) @ inc.T
                counts = flat[sl]
                for i in range(inc.shape[0]):
                    if counts[i] == 0:
                        continue
                    for j in range(inc.shape[0]):
                        if j == i:
                            continue
                        delta = int(add[j] - cross_u[i, j] - sub[i] + cross_v[i, j])
                        if delta < best_delta:
                            best_delta = delta
                            move = (g, i, j)
            if move is None:
                break
            g, i, j = move
            at = game.group_slices[g].start
            flat[at + i] -= 1
            flat[at + j] += 1
        cost = int(game.social_cost_scaled(game.loads_from_counts(flat)))
        if best_cost is None or cost < best_cost or (
            cost == best_cost and tuple(flat) < tuple(best_flat)
        ):
            best_cost = cost
            best_flat = flat
    return best_flat, best_cost


def social_optimum(
    net: Network | CompiledGame,
    enum_budget: int = DEFAULT_ENUM_BUDGET,
    restarts: int = 32,
    seed: int = 0,
) -> EquilibriumResult:
    """Minimum-total-cost profile.

    Edge-disjoint group clusters are minimized independently. Exhaustive
    (and certified) when every cluster's profile space fits in
    enum_budget, with ties broken toward the lexicographically smallest
    count vector; otherwise a multi-start steepest-descent local search
    whose result is explicitly marked uncertified.
    """
    game = net if isinstance(net, CompiledGame) else CompiledGame.build(net)
    comps = _group_components(game)
    comp_sizes = [
        math.prod(
            math.comb(game.net.groups[g].size + game.net.groups[g].n_strategies - 1,
                      game.net.groups[g].n_strategies - 1)
            for g in comp
        )
        for comp in comps
    ]
    if max(comp_sizes) <= enum_budget:
        flat = np.zeros(game.n_flat_strategies, dtype=np.int64)
        for comp in comps:
            rows = _enumerate_groups(game, comp)
            for g, row in zip(comp, rows):
                flat[game.group_slices[g]] = row
        return _result_from_flat(
            game, flat, "optimum", iterations=sum(comp_sizes), certified=True,
            start="enumerate",
        )
    flat, _ = _local_search_optimum(game, restarts, seed)
    return _result_from_flat(
        game, flat, "optimum", iterations=restarts, certified=False, start="local-search"
    )


def price_of_anarchy(ne: EquilibriumResult, so: EquilibriumResult) -> Fraction:
    """Exact ratio of equilibrium cost to optimum cost.

    The equilibrium should be the worst one found if the classic
    worst-case reading is wanted. Requires a strictly positive optimum.
    """
    if so.total_cost <= 0:
        raise ValueError(f"social optimum must be positive, got {so.total_cost}")
    return Fraction(ne.total_cost, so.total_cost)

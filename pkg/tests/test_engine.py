"""Profile accounting, costs, potential and the compiled integer game."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from routegame.engine import (
    AggregateProfile,
    CompiledGame,
    ProfileMismatch,
    cost_report,
    edge_loads,
    group_average_costs,
    rosenthal_potential,
    social_cost,
    source_disparity,
    strategy_cost,
    validate_profile,
)
from routegame.network import (
    AffineLatency,
    Edge,
    GroupSpec,
    Network,
    Path,
    check_network,
)
from routegame.scenarios import build_braess


# -- random small two-group instances for property tests ----------------------

def _two_group_net(bases, slopes, sizes):
    """Three parallel edges A->B; both groups choose among single-edge routes."""
    edges = tuple(
        Edge(f"e{k}", "A", "B", AffineLatency.of(bases[k], slopes[k]))
        for k in range(3)
    )
    groups = tuple(
        GroupSpec(name, "A", size, tuple(Path((f"e{k}",)) for k in range(3)))
        for name, size in zip(("G1", "G2"), sizes)
    )
    return check_network(Network("rand", ("A", "B"), edges, "B", groups))


coeff = st.integers(min_value=0, max_value=9)
net_strategy = st.builds(
    _two_group_net,
    st.tuples(coeff, coeff, coeff),
    st.tuples(coeff, coeff, coeff),
    st.tuples(st.integers(1, 12), st.integers(1, 12)),
)


@st.composite
def net_and_profile(draw):
    net = draw(net_strategy)
    rows = []
    for g in net.groups:
        cut1 = draw(st.integers(0, g.size))
        cut2 = draw(st.integers(0, g.size - cut1))
        rows.append((cut1, cut2, g.size - cut1 - cut2))
    return net, AggregateProfile.from_counts(net, rows)


class TestProfiles:
    def test_uniform_spreads_remainder_to_low_indices(self):
        net = build_braess(True, n_per_source=7)
        prof = AggregateProfile.uniform(net)
        assert prof.counts[0] == (3, 2, 2)

    def test_from_counts_rejects_wrong_total(self):
        net = build_braess(False, n_per_source=5)
        with pytest.raises(ProfileMismatch):
            AggregateProfile.from_counts(net, {"S1": (3, 3), "S2": (5, 0)})

    def test_from_counts_rejects_negative(self):
        net = build_braess(False, n_per_source=5)
        with pytest.raises(ProfileMismatch):
            AggregateProfile.from_counts(net, {"S1": (6, -1), "S2": (5, 0)})

    def test_with_move_conserves_group_size(self):
        net = build_braess(False, n_per_source=5)
        prof = AggregateProfile.uniform(net)
        moved = prof.with_move(0, 0, 1)
        assert sum(moved.counts[0]) == 5
        assert moved.counts[1] == prof.counts[1]
        validate_profile(net, moved)

    def test_with_move_from_empty_strategy_rejected(self):
        net = build_braess(False, n_per_source=3)
        prof = AggregateProfile.from_counts(net, {"S1": (3, 0), "S2": (0, 3)})
        with pytest.raises(ProfileMismatch):
            prof.with_move(0, 1, 0)


class TestCosts:
    def test_loads_count_every_traversal(self):
        net = build_braess(True, n_per_source=10)
        prof = AggregateProfile.from_counts(
            net, {"S1": (2, 3, 5), "S2": (0, 0, 10)}
        )
        loads = edge_loads(net, prof)
        assert loads["s1_c1"] == 7          # Up + Cross both enter C1
        assert loads["d1_b"] == 8           # Down + Cross both leave D1
        assert loads["c1_d1"] == 5

    def test_self_inclusive_strategy_cost(self):
        # one edge, cost 1 + x: a lone agent pays its own contribution
        net = _two_group_net((1, 1, 1), (1, 1, 1), (1, 1))
        prof = AggregateProfile.from_counts(net, [(1, 0, 0), (0, 1, 0)])
        assert strategy_cost(net, prof, "G1", 0) == 2

    @given(net_and_profile())
    @settings(max_examples=60, deadline=None)
    def test_accounting_identity(self, np_pair):
        # total cost == sum over groups of size-weighted average cost
        net, prof = np_pair
        total = social_cost(net, prof)
        avgs = group_average_costs(net, prof)
        recomposed = sum(
            g.size * avgs[g.name] for g in net.groups
        )
        assert total == recomposed

    @given(net_and_profile())
    @settings(max_examples=60, deadline=None)
    def test_social_cost_matches_oracle(self, np_pair):
        net, prof = np_pair
        assert social_cost(net, prof) == oracle.social_cost(net, prof)

    def test_source_disparity_sign_and_antisymmetry(self):
        net = build_braess(False, n_per_source=4)
        prof = AggregateProfile.from_counts(net, {"S1": (4, 0), "S2": (2, 2)})
        d12 = source_disparity(net, prof, "S1", "S2")
        d21 = source_disparity(net, prof, "S2", "S1")
        assert d12 == -d21
        avgs = group_average_costs(net, prof)
        # positive disparity means the second-listed group is better off
        assert (d12 > 0) == (avgs["S1"] > avgs["S2"])


class TestPotential:
    @given(net_and_profile())
    @settings(max_examples=60, deadline=None)
    def test_closed_form_matches_summed_definition(self, np_pair):
        net, prof = np_pair
        assert rosenthal_potential(net, prof) == oracle.potential(net, prof)

    @given(net_and_profile(), st.data())
    @settings(max_examples=60, deadline=None)
    def test_potential_difference_equals_mover_cost_change(self, np_pair, data):
        net, prof = np_pair
        g = data.draw(st.integers(0, len(net.groups) - 1))
        occupied = [s for s in range(3) if prof.counts[g][s] > 0]
        i = data.draw(st.sampled_from(occupied))
        j = data.draw(st.integers(0, 2))
        moved = prof.with_move(g, i, j)
        gname = net.groups[g].name
        delta_phi = rosenthal_potential(net, moved) - rosenthal_potential(net, prof)
        cost_after = strategy_cost(net, moved, gname, j)
        cost_before = strategy_cost(net, prof, gname, i)
        assert delta_phi == cost_after - cost_before


class TestCompiledGame:
    def test_scaled_costs_match_exact_costs(self):
        net = build_braess(True, n_per_source=9)
        game = CompiledGame.build(net)
        prof = AggregateProfile.from_counts(net, {"S1": (4, 3, 2), "S2": (1, 1, 7)})
        flat = game.flat_counts(prof)
        loads = game.loads_from_counts(flat)
        scaled = game.social_cost_scaled(loads)
        assert Fraction(int(scaled), game.denom) == social_cost(net, prof)

    def test_scaled_potential_is_twice_exact_potential(self):
        net = build_braess(True, n_per_source=6)
        game = CompiledGame.build(net)
        prof = AggregateProfile.uniform(net)
        loads = game.loads_from_counts(game.flat_counts(prof))
        phi2 = game.potential_scaled2(loads)
        assert Fraction(int(phi2), 2 * game.denom) == rosenthal_potential(net, prof)

    def test_round_trip_profile_flat_profile(self):
        net = build_braess(False, n_per_source=8)
        game = CompiledGame.build(net)
        prof = AggregateProfile.from_counts(net, {"S1": (5, 3), "S2": (0, 8)})
        again = game.profile_from_flat(game.flat_counts(prof))
        assert again == prof

    def test_strategy_costs_scaled_match_exact(self):
        net = build_braess(True, n_per_source=5)
        game = CompiledGame.build(net)
        prof = AggregateProfile.from_counts(net, {"S1": (2, 2, 1), "S2": (5, 0, 0)})
        loads = game.loads_from_counts(game.flat_counts(prof))
        lat = game.edge_latency_scaled(loads)
        scaled = game.strategy_costs_scaled(lat)
        for g, group in enumerate(net.groups):
            for s in range(group.n_strategies):
                exact = strategy_cost(net, prof, group.name, s)
                got = Fraction(int(scaled[game.group_slices[g]][s]), game.denom)
                assert got == exact


class TestCostReport:
    def test_report_text_lists_groups_and_loads(self):
        net = build_braess(False, n_per_source=4)
        prof = AggregateProfile.uniform(net)
        text = cost_report(net, prof).to_text(net)
        assert "social cost" in text
        assert "S1" in text and "S2" in text
        assert "edge loads" in text

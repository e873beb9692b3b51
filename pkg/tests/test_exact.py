import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agilecsma.exact import (
    ChannelConfig,
    StateSpaceTooLarge,
    enumerate_feasible_states,
    expected_channels,
    generator_matrix,
    ising_limit_check,
    link_channel_sets,
    link_throughput_exact,
    mcs_analysis,
    partition_polynomial,
    stationary_distribution,
    throughput_Z_identity_check,
    write_distribution_csv,
)
from agilecsma.graph import ContentionGraph, make_topology
from oracle import airtime, feasible_states, z_poly

K3 = make_topology("complete", n=3)
C4 = make_topology("ring", n=4)
ONE = make_topology("empty", n=1)
PAIR = ContentionGraph.from_edges(2, [(0, 1)])
CONFIGS = [ChannelConfig(1, 1), ChannelConfig(2, 1), ChannelConfig(3, 1), ChannelConfig(2, 2), ChannelConfig(3, 2)]


@st.composite
def small_graphs(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return ContentionGraph.from_edges(n, chosen)


class TestChannelConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelConfig(0, 1)
        with pytest.raises(ValueError):
            ChannelConfig(2, 3)
        assert str(ChannelConfig(2, 1)) == "(2,1)"

    def test_link_sets(self):
        assert link_channel_sets(ChannelConfig(3, 2)) == [(), (1,), (2,), (3,), (1, 2), (1, 3), (2, 3)]


class TestEnumeration:
    def test_k3_single_channel(self):
        sp = enumerate_feasible_states(K3, ChannelConfig(1, 1))
        on = {tuple(int(bool(c)) for c in s) for s in sp.states()}
        assert on == {(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0)}

    def test_k3_two_channels(self):
        assert len(enumerate_feasible_states(K3, ChannelConfig(2, 1))) == 13

    def test_single_vertex(self):
        assert len(enumerate_feasible_states(ONE, ChannelConfig(2, 1))) == 3

    def test_packed_sorted_and_indexable(self):
        sp = enumerate_feasible_states(C4, ChannelConfig(2, 2))
        assert np.all(np.diff(sp.packed) > 0)
        for j in (0, 5, len(sp) - 1):
            assert sp.index_of(int(sp.packed[j])) == j
        with pytest.raises(KeyError):
            sp.index_of(-1)

    def test_size_guard(self):
        with pytest.raises(StateSpaceTooLarge):
            enumerate_feasible_states(make_topology("ring", n=13), ChannelConfig(2, 2))

    @settings(max_examples=60, deadline=None)
    @given(small_graphs(), st.sampled_from(CONFIGS))
    def test_matches_brute_force(self, g, cc):
        sp = enumerate_feasible_states(g, cc)
        ours = {s for s in sp.states()}
        ref = {tuple(tuple(sorted(x)) for x in s) for s in feasible_states(g.n_vertices, g.edges, cc.q, cc.k)}
        assert ours == ref
        assert partition_polynomial(sp).tolist() == z_poly(g.n_vertices, g.edges, cc.q, cc.k)

    @settings(max_examples=40, deadline=None)
    @given(small_graphs(max_n=7))
    def test_single_channel_is_independent_sets(self, g):
        sp = enumerate_feasible_states(g, ChannelConfig(1, 1))
        for row in sp.link_codes:
            on = np.nonzero(row)[0]
            assert not any(g.has_edge(int(u), int(v)) for u in on for v in on if u < v)
        assert len(sp) == sum(z_poly(g.n_vertices, g.edges))

    @settings(max_examples=30, deadline=None)
    @given(small_graphs(), st.sampled_from(CONFIGS))
    def test_feasibility_invariants(self, g, cc):
        for s in enumerate_feasible_states(g, cc).states():
            assert all(len(x) <= cc.k for x in s)
            assert all(not set(s[u]) & set(s[v]) for u, v in g.edges)


class TestStationary:
    def test_isolated(self):
        d = stationary_distribution(ONE, ChannelConfig(), 1.0)
        assert d.Z == 2
        assert d.probs.tolist() == [0.5, 0.5]

    def test_k3_rho2(self):
        d = stationary_distribution(K3, ChannelConfig(), 2.0)
        assert d.Z == 7
        assert d.prob_of([(1,), (), ()]) == pytest.approx(2 / 7, abs=1e-15)
        assert d.prob_of([(1,), (1,), ()]) == 0.0

    def test_c4_z(self):
        assert stationary_distribution(C4, ChannelConfig(), 1.0).Z == 7

    def test_probabilities(self):
        d = stationary_distribution(C4, ChannelConfig(2, 1), 3.0)
        assert d.probs.sum() == pytest.approx(1, abs=1e-12)
        assert np.allclose(d.probs, 3.0 ** d.space.n_active / d.Z, rtol=1e-14)

    def test_huge_rho_uses_log_path(self):
        d = stationary_distribution(make_topology("ring", n=10), ChannelConfig(3, 1), 1e80)
        assert math.isinf(d.Z)
        assert d.probs.sum() == pytest.approx(1, abs=1e-12)

    def test_bad_rho(self):
        with pytest.raises(ValueError):
            stationary_distribution(C4, ChannelConfig(), 0.0)

    def test_throughputs(self):
        assert link_throughput_exact(stationary_distribution(C4, ChannelConfig(), 1.0), 0) == pytest.approx(2 / 7, abs=1e-15)
        assert link_throughput_exact(stationary_distribution(ONE, ChannelConfig(), 9.0), 0) == pytest.approx(0.9, abs=1e-15)
        d = stationary_distribution(PAIR, ChannelConfig(2, 1), 1.0)
        assert link_throughput_exact(d, 0) == pytest.approx(4 / 7, abs=1e-15)
        assert link_throughput_exact(d, 1) == pytest.approx(4 / 7, abs=1e-15)

    def test_unknown_link(self):
        with pytest.raises(IndexError):
            link_throughput_exact(stationary_distribution(C4, ChannelConfig(), 1.0), 4)

    def test_expected_channels_vs_airtime(self):
        d = stationary_distribution(ONE, ChannelConfig(2, 2), 1.0)
        # Z = 1 + 2 rho + rho^2; airtime 3/4, channels (2 + 2)/4
        assert link_throughput_exact(d, 0) == pytest.approx(0.75)
        assert expected_channels(d, 0) == pytest.approx(1.0)
        d1 = stationary_distribution(C4, ChannelConfig(3, 1), 2.0)
        assert expected_channels(d1, 2) == pytest.approx(link_throughput_exact(d1, 2))

    @settings(max_examples=30, deadline=None)
    @given(small_graphs(max_n=5), st.sampled_from(CONFIGS), st.sampled_from([0.5, 1.0, 3.0]))
    def test_airtime_matches_oracle(self, g, cc, rho):
        r = Fraction(rho)
        d = stationary_distribution(g, cc, rho)
        for i in range(g.n_vertices):
            ref = airtime(g.n_vertices, g.edges, r, i, cc.q, cc.k)
            assert link_throughput_exact(d, i) == pytest.approx(float(ref), rel=1e-12)

    @pytest.mark.parametrize("g", [C4, K3, make_topology("ring", n=7, L=2), make_topology("torus", m=3, n=3)])
    @pytest.mark.parametrize("cc", CONFIGS[:4])
    def test_throughput_monotone_in_rho(self, g, cc):
        grid = np.geomspace(0.05, 50, 25)
        th = np.array([[link_throughput_exact(stationary_distribution(g, cc, r), i) for i in range(g.n_vertices)] for r in grid])
        assert np.all(np.diff(th, axis=0) >= -1e-12)


def test_star_center_is_not_monotone():
    # the center loses airtime to its leaves as rho grows
    g = make_topology("star", leaves=4)
    th = [link_throughput_exact(stationary_distribution(g, ChannelConfig(), r), 0) for r in (0.5, 1.0, 5.0)]
    assert th[1] > th[2]
    assert th[1] == pytest.approx(1 / 17)


class TestIdentity:
    def test_isolated(self):
        assert throughput_Z_identity_check(ONE, ChannelConfig(), 1.0) <= 1e-6
        assert stationary_distribution(ONE, ChannelConfig(), 1.0).mean_active() == 0.5

    def test_c4(self):
        assert stationary_distribution(C4, ChannelConfig(), 1.0).mean_active() == pytest.approx(8 / 7, abs=1e-14)
        assert throughput_Z_identity_check(C4, ChannelConfig(), 1.0) <= 1e-6

    def test_k3_two_channels(self):
        assert throughput_Z_identity_check(K3, ChannelConfig(2, 1), 2.0) <= 1e-6

    @settings(max_examples=20, deadline=None)
    @given(small_graphs(), st.sampled_from(CONFIGS), st.floats(0.1, 30))
    def test_random(self, g, cc, rho):
        assert throughput_Z_identity_check(g, cc, rho) <= 1e-6 * max(1.0, g.n_vertices)


class TestDetailedBalance:
    @pytest.mark.parametrize(
        "g",
        [C4, K3, make_topology("ring", n=7, L=2), make_topology("star", leaves=4),
         make_topology("linear", n=10), make_topology("ring", n=10)],
    )
    @pytest.mark.parametrize("cc", [ChannelConfig(1, 1), ChannelConfig(2, 1), ChannelConfig(2, 2)])
    def test_generator_is_reversible(self, g, cc):
        if g.n_vertices == 10 and cc != ChannelConfig(1, 1):
            pytest.skip("dense generator too large")
        sp = enumerate_feasible_states(g, cc)
        d = stationary_distribution(g, cc, 2.5, sp)
        G = generator_matrix(sp, 2.5)
        flow = d.probs[:, None] * G
        off = ~np.eye(len(G), dtype=bool)
        assert np.allclose(flow[off], flow.T[off], atol=1e-15)
        assert np.abs(d.probs @ G).max() < 1e-12


class TestMCS:
    def test_c4(self):
        r = mcs_analysis(C4, ChannelConfig(2, 1))
        assert (r.max_transmitting, r.num_mcs, r.all_links_in_every_mcs) == (4, 2, True)

    def test_c5(self):
        r = mcs_analysis(make_topology("ring", n=5), ChannelConfig(2, 1))
        assert r.max_transmitting == 4
        assert not r.all_links_in_every_mcs

    def test_k3(self):
        assert mcs_analysis(K3, ChannelConfig(2, 1)).max_transmitting == 2

    def test_needs_k1(self):
        with pytest.raises(ValueError):
            mcs_analysis(C4, ChannelConfig(2, 2))


class TestIsing:
    def test_ring_decreases(self):
        tv5, tv10 = ising_limit_check(3, 0.0, [-5, -10])
        assert tv5 > tv10

    def test_limit(self):
        tv = ising_limit_check(5, 0.3, [-1, -5, -10, -20, -40])
        assert tv[-1] < 1e-12
        # past K = -10 the distance sits at the round-off floor
        assert all(a >= b - 1e-14 for a, b in zip(tv, tv[1:]))

    def test_torus(self):
        (tv,) = ising_limit_check(3, math.log(2), [-6], lattice="torus")
        assert tv < 1e-3

    def test_guards(self):
        with pytest.raises(StateSpaceTooLarge):
            ising_limit_check(17, 0.0, [-1])
        with pytest.raises(StateSpaceTooLarge):
            ising_limit_check(5, 0.0, [-1], lattice="torus")
        with pytest.raises(ValueError):
            ising_limit_check(3, 0.0, [-1], lattice="cube")


def test_distribution_csv():
    buf = io.StringIO()
    write_distribution_csv(stationary_distribution(K3, ChannelConfig(), 2.0), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "state_code,n_active,probability"
    assert len(lines) == 5
    assert lines[1] == "0,0,0.14285714285714285"

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import enumerate_four_cycles
from hkgkit.core import Triple
from hkgkit.topology import (
    SimpleGraph, all_curvatures, balanced_forman, brute_force_curvature, build_simple_graph, curvature_report,
    distribution_to_csv, report_to_csv, squares, triangles,
)


def cycle(n):
    return SimpleGraph.from_edges([(i, (i + 1) % n) for i in range(n)])


def complete(n):
    return SimpleGraph.from_edges([(i, j) for i in range(n) for j in range(i + 1, n)])


def random_graph(rng, n, p):
    return SimpleGraph.from_edges([(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p],
                                  num_nodes=n)


def exact_ric(edges, s, o):
    """Curvature straight from the definition, written over a dict adjacency."""
    adj = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    ds, do = len(adj[s]), len(adj[o])
    if min(ds, do) == 1:
        return Fraction(0)
    tri = len(adj[s] & adj[o])
    cyc = enumerate_four_cycles(adj, s, o)
    through = {}
    for k, w in cyc:
        for u in (k, w):
            through[u] = through.get(u, 0) + 1
    gamma = max(through.values(), default=0)
    val = Fraction(2, ds) + Fraction(2, do) - 2 + Fraction(2 * tri, max(ds, do)) + Fraction(tri, min(ds, do))
    if gamma:
        val += Fraction(len({k for k, _ in cyc}) + len({w for _, w in cyc}), gamma * max(ds, do))
    return val


class TestBuild:
    def test_symmetrized(self):
        g = build_simple_graph([Triple(0, 0, 1), Triple(1, 1, 0)])
        assert g.edges() == [(0, 1)]
        assert g.duplicates_dropped == 1

    def test_self_loop_dropped(self):
        g = build_simple_graph([Triple(0, 0, 0)])
        assert g.num_edges == 0 and g.self_loops_dropped == 1

    def test_triangle(self):
        g = build_simple_graph([Triple(0, 0, 1), Triple(1, 0, 2), Triple(2, 0, 0)])
        assert g.num_edges == 3 and g.degrees == [2, 2, 2]


class TestComponents:
    def test_triangles(self):
        assert triangles(complete(3), (0, 1)) == 1
        assert triangles(cycle(4), (0, 1)) == 0
        assert triangles(complete(4), (0, 1)) == 2

    def test_squares(self):
        # cycle 0-1-2-3: edge (0,1) closes through 3 on the 0 side and 2 on the 1 side
        assert squares(cycle(4), (0, 1)) == (1, 1, 1)
        assert squares(complete(3), (0, 1)) == (0, 0, 0)
        assert squares(cycle(5), (0, 1)) == (0, 0, 0)

    def test_missing_edge(self):
        with pytest.raises(KeyError):
            balanced_forman(cycle(4), (0, 2))
        with pytest.raises(KeyError):
            triangles(cycle(4), (0, 2))

    def test_gamma_counts_cycles_through_one_node(self):
        # K_{2,3} plus edge (s, o): s=0, o=1, k in {2}, w in {3, 4}
        g = SimpleGraph.from_edges([(0, 1), (0, 2), (1, 3), (1, 4), (2, 3), (2, 4)])
        assert squares(g, (0, 1)) == (1, 2, 2)


class TestFixedValues:
    def test_k3(self):
        assert balanced_forman(complete(3), (0, 1)).ric == 1.5

    def test_c4(self):
        assert balanced_forman(cycle(4), (0, 1)).ric == 1.0

    def test_c5(self):
        assert balanced_forman(cycle(5), (0, 1)).ric == 0.0

    def test_isolated_edge(self):
        rec = balanced_forman(SimpleGraph.from_edges([(0, 1)]), (0, 1))
        assert rec.ric == 0.0 and rec.degree_one

    def test_k4_positive(self):
        ric = balanced_forman(complete(4), (0, 1)).ric
        assert ric == pytest.approx(4 / 3, abs=1e-15)
        assert exact_ric(complete(4).edges(), 0, 1) == Fraction(4, 3)


class TestOracle:
    def test_200_random_graphs(self):
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(200):
            n = int(rng.integers(2, 21))
            g = random_graph(rng, n, 0.3)
            for e in g.edges():
                got = balanced_forman(g, e)
                rec, exact = brute_force_curvature(g, e)
                assert abs(got.ric - float(exact)) <= 1e-12
                assert (got.n_triangles, got.n_sq_s, got.n_sq_o, got.gamma_max) == \
                       (rec.n_triangles, rec.n_sq_s, rec.n_sq_o, rec.gamma_max)
                checked += 1
        assert checked > 1000

    def test_definition_oracle_agrees(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            g = random_graph(rng, int(rng.integers(4, 16)), 0.35)
            for s, o in g.edges():
                assert balanced_forman(g, (s, o)).ric == pytest.approx(float(exact_ric(g.edges(), s, o)), abs=1e-12)

    def test_brute_force_size_limit(self):
        with pytest.raises(ValueError):
            brute_force_curvature(SimpleGraph.from_edges([(0, 1)], num_nodes=65), (0, 1))


graphs = st.builds(lambda seed, n, p: random_graph(np.random.default_rng(seed), n, p),
                   st.integers(0, 2**31), st.integers(2, 18), st.floats(0.1, 0.8))


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(graphs)
    def test_symmetry(self, g):
        for s, o in g.edges():
            assert balanced_forman(g, (s, o)).ric == balanced_forman(g, (o, s)).ric

    @settings(max_examples=60, deadline=None)
    @given(graphs)
    def test_range(self, g):
        for e in g.edges():
            rec = balanced_forman(g, e)
            if not rec.degree_one:
                assert rec.ric > -2

    @settings(max_examples=40, deadline=None)
    @given(graphs)
    def test_sorted_export_and_proportion(self, g):
        rep = curvature_report(g)
        vals = rep.sorted_ric
        assert all(a <= b for a, b in zip(vals, vals[1:]))
        if vals:
            last = max((i + 1 for i, v in enumerate(vals) if v <= 0), default=0)
            assert rep.proportion == last / len(vals)


class TestReport:
    def test_c5_all_zero(self):
        rep = curvature_report(cycle(5))
        assert rep.sorted_ric == [0.0] * 5
        assert rep.proportion == 1.0
        assert rep.n_negative == 0

    def test_k4_none(self):
        rep = curvature_report(complete(4))
        assert all(v > 0 for v in rep.sorted_ric) and rep.proportion == 0.0

    def test_empty(self):
        rep = curvature_report(SimpleGraph.from_edges([]))
        assert rep.sorted_ric == [] and math.isnan(rep.proportion)

    def test_thread_invariance(self):
        g = random_graph(np.random.default_rng(3), 120, 0.08)
        one = report_to_csv(curvature_report(g, threads=1))
        four = report_to_csv(curvature_report(g, threads=4))
        assert one == four
        assert [r.edge for r in all_curvatures(g, 3)] == g.edges()

    def test_csv_layout(self):
        text = report_to_csv(curvature_report(cycle(4)))
        lines = text.splitlines()
        assert lines[0] == "s,o,d_s,d_o,triangles,sq_s,sq_o,gamma_max,ric"
        assert len(lines) == 1 + 4 + 1
        assert lines[-1].startswith("# over_squashing_proportion=0")
        dist = distribution_to_csv(curvature_report(cycle(4))).splitlines()
        assert dist[0] == "rank,ric" and len(dist) == 5

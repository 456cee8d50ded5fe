"""Balanced Forman curvature on the undirected simplification of a triple set.

For an edge ``(s, o)`` with degrees ``d_s, d_o``::

    ric = 2/d_s + 2/d_o - 2
          + 2 * tri / max(d_s, d_o) + tri / min(d_s, d_o)
          + (sq_s + sq_o) / (gamma_max * max(d_s, d_o))

where ``tri`` counts common neighbours, ``sq_s`` counts neighbours of ``s``
that start a diagonal-free 4-cycle through ``(s, o)`` (likewise ``sq_o``) and
``gamma_max`` is the largest number of such 4-cycles through a single square
node.  Edges with a degree-1 endpoint get curvature 0 and the square term is
dropped when ``gamma_max == 0``; both cases are flagged on the result.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import Triple


@dataclass
class SimpleGraph:
    """Undirected graph without self-loops or parallel edges."""

    adjacency: list[frozenset]
    self_loops_dropped: int = 0
    duplicates_dropped: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.adjacency)

    @property
    def degrees(self) -> list[int]:
        return [len(a) for a in self.adjacency]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def neighbors(self, v: int) -> list[int]:
        return sorted(self.adjacency[v])

    def has_edge(self, u: int, v: int) -> bool:
        return 0 <= u < len(self.adjacency) and v in self.adjacency[u]

    def edges(self) -> list[tuple[int, int]]:
        """Canonical edge list: ``(u, v)`` with ``u < v``, lexicographic."""
        return [(u, v) for u in range(len(self.adjacency)) for v in sorted(self.adjacency[u]) if u < v]

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], num_nodes: int | None = None) -> "SimpleGraph":
        edges = list(edges)
        n = num_nodes if num_nodes is not None else 1 + max((max(e) for e in edges), default=-1)
        adj: list[set] = [set() for _ in range(n)]
        loops = dups = 0
        for u, v in edges:
            if u == v:
                loops += 1
                continue
            if v in adj[u]:
                dups += 1
                continue
            adj[u].add(v)
            adj[v].add(u)
        return cls([frozenset(a) for a in adj], loops, dups)


def build_simple_graph(triples: Iterable[Triple], num_nodes: int | None = None) -> SimpleGraph:
    """Forget relation labels and direction; drop self-loops and repeats."""
    return SimpleGraph.from_edges(((t[0], t[2]) for t in triples), num_nodes)


@dataclass(frozen=True)
class EdgeCurvature:
    edge: tuple[int, int]
    ric: float
    d_s: int
    d_o: int
    n_triangles: int
    n_sq_s: int
    n_sq_o: int
    gamma_max: int

    @property
    def degree_one(self) -> bool:
        return min(self.d_s, self.d_o) == 1

    @property
    def no_squares(self) -> bool:
        return self.gamma_max == 0


def _require_edge(g: SimpleGraph, edge) -> tuple[int, int]:
    s, o = edge
    if not g.has_edge(s, o):
        raise KeyError(f"edge {edge!r} is not in the graph")
    return s, o


def triangles(g: SimpleGraph, edge) -> int:
    s, o = _require_edge(g, edge)
    return len(g.adjacency[s] & g.adjacency[o])


def _square_counts(adj: Sequence[frozenset], s: int, o: int) -> tuple[int, int, int]:
    ns, no = adj[s], adj[o]
    k_side = ns - no - {o}
    w_side = no - ns - {s}
    gamma = 0
    sq_s = 0
    for k in k_side:
        c = len(adj[k] & w_side)
        if c:
            sq_s += 1
            gamma = max(gamma, c)
    sq_o = 0
    for w in w_side:
        c = len(adj[w] & k_side)
        if c:
            sq_o += 1
            gamma = max(gamma, c)
    return sq_s, sq_o, gamma


def squares(g: SimpleGraph, edge) -> tuple[int, int, int]:
    """Return ``(n_sq_s, n_sq_o, gamma_max)`` for ``edge``."""
    s, o = _require_edge(g, edge)
    return _square_counts(g.adjacency, s, o)


def ric_from_components(d_s: int, d_o: int, tri: int, sq_s: int, sq_o: int, gamma: int) -> float:
    d_min, d_max = min(d_s, d_o), max(d_s, d_o)
    if d_min == 1:
        return 0.0
    ric = 2.0 / d_s + 2.0 / d_o - 2.0 + 2.0 * tri / d_max + tri / d_min
    if gamma > 0:
        ric += (sq_s + sq_o) / (gamma * d_max)
    return ric


def _curvature(adj: Sequence[frozenset], s: int, o: int) -> EdgeCurvature:
    d_s, d_o = len(adj[s]), len(adj[o])
    tri = len(adj[s] & adj[o])
    sq_s, sq_o, gamma = _square_counts(adj, s, o)
    return EdgeCurvature((s, o), ric_from_components(d_s, d_o, tri, sq_s, sq_o, gamma),
                         d_s, d_o, tri, sq_s, sq_o, gamma)


def balanced_forman(g: SimpleGraph, edge) -> EdgeCurvature:
    s, o = _require_edge(g, edge)
    return _curvature(g.adjacency, s, o)


BRUTE_FORCE_MAX_NODES = 64


def brute_force_curvature(g: SimpleGraph, edge) -> tuple[EdgeCurvature, Fraction]:
    """Exhaustive-enumeration oracle for :func:`balanced_forman`.

    Works on a dense adjacency matrix, enumerates every candidate triangle
    apex and every ordered ``(k, w)`` pair closing a 4-cycle, and evaluates
    the curvature in exact rational arithmetic.

    Returns:
        The curvature record (``ric`` rounded from the exact value) and the
        exact value as a :class:`~fractions.Fraction`.
    """
    n = g.num_nodes
    if n > BRUTE_FORCE_MAX_NODES:
        raise ValueError(f"brute-force oracle limited to {BRUTE_FORCE_MAX_NODES} nodes, got {n}")
    s, o = _require_edge(g, edge)
    A = np.zeros((n, n), dtype=bool)
    for u, v in g.edges():
        A[u, v] = A[v, u] = True
    d_s, d_o = int(A[s].sum()), int(A[o].sum())
    tri = sum(1 for v in range(n) if A[v, s] and A[v, o])

    cycles = []
    for k in range(n):
        for w in range(n):
            if len({s, o, k, w}) < 4:
                continue
            # s - o - w - k - s with neither diagonal s-w nor o-k
            if A[o, w] and A[w, k] and A[k, s] and not A[s, w] and not A[o, k]:
                cycles.append((k, w))
    sq_s_nodes = {k for k, _ in cycles}
    sq_o_nodes = {w for _, w in cycles}
    per_node = {}
    for k, w in cycles:
        per_node[k] = per_node.get(k, 0) + 1
        per_node[w] = per_node.get(w, 0) + 1
    gamma = max(per_node.values(), default=0)

    d_min, d_max = min(d_s, d_o), max(d_s, d_o)
    if d_min == 1:
        exact = Fraction(0)
    else:
        exact = (Fraction(2, d_s) + Fraction(2, d_o) - 2 + Fraction(2 * tri, d_max) + Fraction(tri, d_min))
        if gamma > 0:
            exact += Fraction(len(sq_s_nodes) + len(sq_o_nodes), gamma * d_max)
    rec = EdgeCurvature((s, o), float(exact), d_s, d_o, tri, len(sq_s_nodes), len(sq_o_nodes), gamma)
    return rec, exact


_WORKER_ADJ: list[frozenset] | None = None


def _init_worker(adj):
    global _WORKER_ADJ
    _WORKER_ADJ = adj


def _curvature_chunk(edges: list[tuple[int, int]]) -> list[EdgeCurvature]:
    return [_curvature(_WORKER_ADJ, s, o) for s, o in edges]


def all_curvatures(g: SimpleGraph, threads: int = 1) -> list[EdgeCurvature]:
    """Curvature of every edge, in canonical edge order."""
    edges = g.edges()
    if threads <= 1 or len(edges) < 2:
        return [_curvature(g.adjacency, s, o) for s, o in edges]
    n_chunks = threads * 4
    size = math.ceil(len(edges) / n_chunks)
    chunks = [edges[i:i + size] for i in range(0, len(edges), size)]
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(g.adjacency,)) as pool:
        parts = list(pool.map(_curvature_chunk, chunks))
    return [rec for part in parts for rec in part]


@dataclass
class CurvatureReport:
    records: list[EdgeCurvature]
    sorted_ric: list[float]
    proportion: float
    n_nonpositive: int
    n_negative: int
    n_degree_one: int
    n_no_squares: int

    @property
    def num_edges(self) -> int:
        return len(self.records)


def curvature_report(g: SimpleGraph, threads: int = 1) -> CurvatureReport:
    """Per-edge curvatures plus the share of edges with ``ric <= 0``.

    The proportion is NaN for an edge-less graph.
    """
    records = all_curvatures(g, threads)
    ordered = sorted(r.ric for r in records)
    nonpos = sum(1 for r in ordered if r <= 0)
    neg = sum(1 for r in ordered if r < 0)
    return CurvatureReport(
        records=records,
        sorted_ric=ordered,
        proportion=nonpos / len(ordered) if ordered else math.nan,
        n_nonpositive=nonpos,
        n_negative=neg,
        n_degree_one=sum(r.degree_one for r in records),
        n_no_squares=sum(r.no_squares and not r.degree_one for r in records),
    )


CSV_COLUMNS = ("s", "o", "d_s", "d_o", "triangles", "sq_s", "sq_o", "gamma_max", "ric")


def report_to_csv(report: CurvatureReport, labels: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.records:
        s, o = r.edge
        if labels is not None:
            s, o = labels[s], labels[o]
        writer.writerow([s, o, r.d_s, r.d_o, r.n_triangles, r.n_sq_s, r.n_sq_o, r.gamma_max, repr(r.ric)])
    prop = "nan" if math.isnan(report.proportion) else repr(report.proportion)
    buf.write(f"# over_squashing_proportion={prop} nonpositive={report.n_nonpositive} "
              f"negative={report.n_negative} edges={report.num_edges} "
              f"degree_one_edges={report.n_degree_one} no_square_edges={report.n_no_squares}\n")
    return buf.getvalue()


def distribution_to_csv(report: CurvatureReport) -> str:
    lines = ["rank,ric"]
    lines += [f"{i},{v!r}" for i, v in enumerate(report.sorted_ric, 1)]
    return "\n".join(lines) + "\n"

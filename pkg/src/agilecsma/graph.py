"""Contention graphs: regular topologies, unit-disk graphs, coloring and cliques.

Vertices are links; an edge joins two links whose transmitters sense each
other.  Graphs are immutable and vertex indices are dense ``0..n-1``.

The text file format is line oriented: the first line holds the vertex
count, every further line one edge ``u v`` with ``u < v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

__all__ = [
    "ContentionGraph",
    "Coloring",
    "ColoringReport",
    "NodeLayout",
    "coloring_tools",
    "from_unit_disk",
    "greedy_coloring",
    "make_topology",
    "max_clique",
    "read_graph",
    "verify_coloring",
    "write_graph",
]


@dataclass(frozen=True)
class ContentionGraph:
    """Undirected simple graph over links ``0..n_vertices-1``.

    ``unit_disk`` records whether the graph came from :func:`from_unit_disk`;
    only then does the ``6W - 6`` chromatic bound apply.
    """

    n_vertices: int
    edges: frozenset[tuple[int, int]]
    unit_disk: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_vertices < 0:
            raise ValueError("n_vertices must be non-negative")
        normalized = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ValueError(f"edge ({u}, {v}) outside 0..{self.n_vertices - 1}")
            normalized.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def from_edges(cls, n_vertices: int, edges: Iterable[Sequence[int]], *, unit_disk: bool = False) -> ContentionGraph:
        return cls(n_vertices, frozenset((int(u), int(v)) for u, v in edges), unit_disk=unit_disk)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return tuple(tuple(sorted(n)) for n in nbrs)

    @property
    def degrees(self) -> list[int]:
        return [len(n) for n in self.adjacency]

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_vertices, self.n_vertices), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor lists in compressed-row form ``(indptr, indices)``."""
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.degrees)
        indices = np.array([v for n in self.adjacency for v in n], dtype=np.int64)
        return indptr, indices

    def __len__(self) -> int:
        return self.n_vertices


@dataclass(frozen=True)
class NodeLayout:
    """Transmitter positions in the plane and a common carrier-sensing range."""

    positions: np.ndarray
    cs_range: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not self.cs_range > 0:
            raise ValueError("cs_range must be positive")
        object.__setattr__(self, "positions", pos)


# --- topology generators ----------------------------------------------------


def _ring(n: int, L: int = 1) -> ContentionGraph:
    if n < 2:
        raise ValueError("ring needs N >= 2")
    if L < 1 or L >= math.ceil(n / 2):
        raise ValueError(f"ring(N={n}) needs 1 <= L < ceil(N/2), got L={L}")
    edges = {(min(i, (i + d) % n), max(i, (i + d) % n)) for i in range(n) for d in range(1, L + 1)}
    return ContentionGraph(n, frozenset(edges))


def _linear(n: int, L: int = 1) -> ContentionGraph:
    if n < 1:
        raise ValueError("linear needs N >= 1")
    if L < 1 or (n > 1 and L >= n):
        raise ValueError(f"linear(N={n}) needs 1 <= L < N, got L={L}")
    edges = {(i, j) for i in range(n) for j in range(i + 1, min(n, i + L + 1))}
    return ContentionGraph(n, frozenset(edges))


def _torus(m: int, n: int) -> ContentionGraph:
    if m < 3 or n < 3:
        raise ValueError(f"torus needs both dimensions >= 3, got {m}x{n}")
    edges = set()
    for i in range(m):
        for j in range(n):
            v = i * n + j
            for w in (i * n + (j + 1) % n, ((i + 1) % m) * n + j):
                edges.add((min(v, w), max(v, w)))
    return ContentionGraph(m * n, frozenset(edges))


def _strip(
    n_units: int,
    unit: ContentionGraph,
    coupling: Sequence[tuple[int, int]],
    closed: bool = True,
) -> ContentionGraph:
    """Repeat ``unit`` ``n_units`` times; ``(a, b)`` in ``coupling`` joins
    vertex ``a`` of unit ``u`` to vertex ``b`` of unit ``u + 1``."""
    if n_units < 2:
        raise ValueError("strip needs n_units >= 2")
    m = unit.n_vertices
    for a, b in coupling:
        if not (0 <= a < m and 0 <= b < m):
            raise ValueError(f"coupling pair ({a}, {b}) outside unit of {m} vertices")
    edges = set()
    for u in range(n_units):
        base = u * m
        edges.update((base + a, base + b) for a, b in unit.edges)
        if u + 1 < n_units or closed:
            nxt = ((u + 1) % n_units) * m
            for a, b in coupling:
                x, y = base + a, nxt + b
                if x == y:
                    raise ValueError("coupling produces a self-loop")
                edges.add((min(x, y), max(x, y)))
    return ContentionGraph(n_units * m, frozenset(edges))


def make_topology(kind: str, **params) -> ContentionGraph:
    """Build a regular contention graph.

    Parameters
    ----------
    kind : {"ring", "linear", "torus", "strip", "complete", "star", "empty"}
        ``ring``/``linear`` take ``n`` and ``L`` (default 1); ``torus`` takes
        ``m`` and ``n``; ``strip`` takes ``n_units``, ``unit`` (a
        :class:`ContentionGraph`), ``coupling`` pairs and ``closed``.
        ``complete``/``empty`` take ``n``; ``star`` takes ``leaves``.
    """
    if kind == "ring":
        return _ring(int(params["n"]), int(params.get("L", 1)))
    if kind == "linear":
        return _linear(int(params["n"]), int(params.get("L", 1)))
    if kind == "torus":
        return _torus(int(params["m"]), int(params["n"]))
    if kind == "strip":
        return _strip(int(params["n_units"]), params["unit"], list(params["coupling"]), bool(params.get("closed", True)))
    if kind == "complete":
        n = int(params["n"])
        return ContentionGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    if kind == "star":
        leaves = int(params["leaves"])
        return ContentionGraph.from_edges(leaves + 1, [(0, j) for j in range(1, leaves + 1)])
    if kind == "empty":
        return ContentionGraph(int(params["n"]), frozenset())
    raise ValueError(f"unknown topology kind {kind!r}")


def from_unit_disk(layout: NodeLayout) -> ContentionGraph:
    """Join two links iff their transmitters are strictly closer than ``cs_range``."""
    pos = layout.positions
    n = len(pos)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    iu, ju = np.nonzero(np.triu(dist < layout.cs_range, k=1))
    return ContentionGraph.from_edges(n, zip(iu.tolist(), ju.tolist()), unit_disk=True)


# --- file format ------------------------------------------------------------


def write_graph(graph: ContentionGraph, path: str | Path | TextIO) -> None:
    lines = [str(graph.n_vertices)] + [f"{u} {v}" for u, v in graph.sorted_edges()]
    text = "\n".join(lines) + "\n"
    if not isinstance(path, (str, Path)):
        path.write(text)
        return
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def read_graph(path: str | Path) -> ContentionGraph:
    with open(path) as fh:
        rows = [ln.split() for ln in fh.read().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 1:
        raise ValueError(f"{path}: first line must hold the vertex count")
    n = int(rows[0][0])
    edges = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v'")
        u, v = int(row[0]), int(row[1])
        if not u < v:
            raise ValueError(f"{path}:{lineno}: edges must satisfy u < v")
        edges.append((u, v))
    if len(set(edges)) != len(edges):
        raise ValueError(f"{path}: duplicate edge")
    return ContentionGraph.from_edges(n, edges)


# --- coloring and cliques ---------------------------------------------------

UNCOLORED = -1


@dataclass(frozen=True)
class Coloring:
    """Per-vertex color index, ``UNCOLORED`` (-1) for an uncolored vertex."""

    color_of: tuple[int, ...]

    @property
    def n_colors(self) -> int:
        used = {c for c in self.color_of if c != UNCOLORED}
        return len(used)


def greedy_coloring(graph: ContentionGraph) -> Coloring:
    """First-fit coloring in descending-degree order, ties by vertex index."""
    order = sorted(range(graph.n_vertices), key=lambda v: (-len(graph.adjacency[v]), v))
    colors = [UNCOLORED] * graph.n_vertices
    for v in order:
        taken = {colors[w] for w in graph.adjacency[v]}
        c = 0
        while c in taken:
            c += 1
        colors[v] = c
    return Coloring(tuple(colors))


def verify_coloring(graph: ContentionGraph, coloring: Coloring, q: int) -> bool:
    """True iff ``coloring`` is proper and every color index lies in ``0..q-1``."""
    cols = coloring.color_of
    if len(cols) != graph.n_vertices:
        return False
    if any(c != UNCOLORED and not 0 <= c < q for c in cols):
        return False
    return all(cols[u] == UNCOLORED or cols[u] != cols[v] for u, v in graph.edges)


def max_clique(graph: ContentionGraph) -> list[int]:
    """Exact maximum clique by branch and bound.

    Candidates are expanded in descending-degree order and a branch is cut
    when the clique plus all remaining candidates cannot beat the incumbent.
    Meant for graphs of a few dozen vertices.
    """
    n = graph.n_vertices
    if n == 0:
        return []
    nbr_mask = [0] * n
    for u, v in graph.edges:
        nbr_mask[u] |= 1 << v
        nbr_mask[v] |= 1 << u
    order = sorted(range(n), key=lambda v: (-len(graph.adjacency[v]), v))
    best: list[int] = [order[0]]

    def expand(clique: list[int], cand: list[int]) -> None:
        nonlocal best
        if len(clique) > len(best):
            best = clique[:]
        for idx, v in enumerate(cand):
            if len(clique) + len(cand) - idx <= len(best):
                return
            rest = [w for w in cand[idx + 1:] if nbr_mask[v] >> w & 1]
            clique.append(v)
            expand(clique, rest)
            clique.pop()

    expand([], order)
    return sorted(best)


@dataclass(frozen=True)
class ColoringReport:
    greedy_coloring: Coloring
    max_clique_size: int
    chromatic_upper_bound: int

    def verify(self, coloring: Coloring, q: int, graph: ContentionGraph) -> bool:
        return verify_coloring(graph, coloring, q)


def coloring_tools(graph: ContentionGraph) -> ColoringReport:
    """Greedy coloring, clique number and a chromatic upper bound.

    For unit-disk graphs the bound is ``6 * clique - 6``, floored at the
    clique size so an edgeless layout still reports one color.  Any other
    graph reports the greedy color count.
    """
    col = greedy_coloring(graph)
    w = len(max_clique(graph))
    bound = max(6 * w - 6, w) if graph.unit_disk else col.n_colors
    return ColoringReport(col, w, bound)

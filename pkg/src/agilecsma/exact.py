"""Exact stationary analysis of (q, k) frequency-agile CSMA networks.

A link's state is the set of channels it currently transmits on, at most
``k`` of the ``q`` channels.  Neighbors never share a channel.  Under the
idealized CSMA dynamics the stationary law is product form,

    P(s) = rho ** n(s) / Z,

where ``n(s)`` counts active (link, channel) pairs.  Everything here works by
enumerating the feasible states, so it is limited to small networks.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
from scipy.special import logsumexp

from agilecsma.graph import ContentionGraph, make_topology

__all__ = [
    "ChannelConfig",
    "MCSReport",
    "StateSpace",
    "StateSpaceTooLarge",
    "StationaryDistribution",
    "enumerate_feasible_states",
    "expected_channels",
    "generator_matrix",
    "ising_limit_check",
    "link_channel_sets",
    "link_throughput_exact",
    "mcs_analysis",
    "partition_polynomial",
    "stationary_distribution",
    "throughput_Z_identity_check",
    "write_distribution_csv",
]

MAX_STATE_BITS = 24


class StateSpaceTooLarge(ValueError):
    """Raised when a packed state index would need more than ``MAX_STATE_BITS`` bits."""


@dataclass(frozen=True)
class ChannelConfig:
    """``q`` channels, at most ``k`` held by one link at a time."""

    q: int = 1
    k: int = 1

    def __post_init__(self) -> None:
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not 1 <= self.k <= self.q:
            raise ValueError(f"need 1 <= k <= q, got q={self.q}, k={self.k}")

    def __str__(self) -> str:
        return f"({self.q},{self.k})"


def link_channel_sets(config: ChannelConfig) -> list[tuple[int, ...]]:
    """Per-link states as channel tuples (channels numbered from 1).

    Index 0 is idle; the rest are ordered by size, then lexicographically, so
    for ``k = 1`` the index equals the channel number.
    """
    sets: list[tuple[int, ...]] = [()]
    for size in range(1, config.k + 1):
        sets.extend(itertools.combinations(range(1, config.q + 1), size))
    return sets


def _set_masks(config: ChannelConfig) -> np.ndarray:
    return np.array([sum(1 << (f - 1) for f in s) for s in link_channel_sets(config)], dtype=np.int64)


def _compat_table(config: ChannelConfig) -> np.ndarray:
    masks = _set_masks(config)
    return (masks[:, None] & masks[None, :]) == 0


def _check_size(n_links: int, n_link_states: int) -> None:
    bits = n_links * math.ceil(math.log2(n_link_states))
    if bits > MAX_STATE_BITS:
        raise StateSpaceTooLarge(
            f"state space too large: {n_links} links x {n_link_states} link states "
            f"needs {bits} bits, bound is {MAX_STATE_BITS}"
        )


@dataclass(frozen=True)
class StateSpace:
    """All feasible states of a graph under a channel config.

    ``link_codes[s, i]`` is the per-link state index of link ``i`` in state
    ``s``; ``packed[s]`` is the mixed-radix code ``sum(code_i * M**i)`` and the
    rows are sorted by it.
    """

    graph: ContentionGraph
    config: ChannelConfig
    link_codes: np.ndarray

    @cached_property
    def n_link_states(self) -> int:
        return len(link_channel_sets(self.config))

    @cached_property
    def packed(self) -> np.ndarray:
        radix = self.n_link_states ** np.arange(self.graph.n_vertices, dtype=np.int64)
        return self.link_codes.astype(np.int64) @ radix

    @cached_property
    def channel_counts(self) -> np.ndarray:
        sizes = np.array([len(s) for s in link_channel_sets(self.config)], dtype=np.int64)
        return sizes[self.link_codes]

    @cached_property
    def n_active(self) -> np.ndarray:
        return self.channel_counts.sum(axis=1)

    def __len__(self) -> int:
        return len(self.link_codes)

    def states(self) -> list[tuple[tuple[int, ...], ...]]:
        sets = link_channel_sets(self.config)
        return [tuple(sets[c] for c in row) for row in self.link_codes]

    def index_of(self, packed_code: int) -> int:
        i = int(np.searchsorted(self.packed, packed_code))
        if i == len(self.packed) or self.packed[i] != packed_code:
            raise KeyError(packed_code)
        return i


def enumerate_feasible_states(graph: ContentionGraph, config: ChannelConfig = ChannelConfig()) -> StateSpace:
    """Every channel assignment in which no two neighbors share a channel."""
    n_link = len(link_channel_sets(config))
    n = graph.n_vertices
    _check_size(max(n, 1), n_link)
    compat = _compat_table(config)
    rows = np.zeros((1, 0), dtype=np.int8)
    for v in range(n):
        earlier = [u for u in graph.adjacency[v] if u < v]
        blocks = []
        for c in range(n_link):
            keep = np.ones(len(rows), dtype=bool)
            for u in earlier:
                keep &= compat[c, rows[:, u]]
            sel = rows[keep]
            blocks.append(np.column_stack([sel, np.full(len(sel), c, dtype=np.int8)]))
        rows = np.concatenate(blocks, axis=0)
    space = StateSpace(graph, config, rows)
    order = np.argsort(space.packed, kind="stable")
    return StateSpace(graph, config, rows[order])


def partition_polynomial(space: StateSpace) -> np.ndarray:
    """Integer coefficients ``c[m]`` of ``Z(rho) = sum_m c[m] rho**m``."""
    return np.bincount(space.n_active, minlength=1).astype(np.int64)


def _log_z(coeffs: np.ndarray, rho: float) -> float:
    m = np.nonzero(coeffs)[0]
    return float(logsumexp(m * math.log(rho), b=coeffs[m].astype(float)))


@dataclass(frozen=True)
class StationaryDistribution:
    rho: float
    space: StateSpace
    probs: np.ndarray
    Z: float
    log_Z: float

    @property
    def graph(self) -> ContentionGraph:
        return self.space.graph

    @property
    def config(self) -> ChannelConfig:
        return self.space.config

    def prob_of(self, state: Sequence[Sequence[int]]) -> float:
        """Probability of a state given as per-link channel tuples."""
        sets = {s: i for i, s in enumerate(link_channel_sets(self.config))}
        codes = [sets[tuple(sorted(ch))] for ch in state]
        packed = sum(c * self.space.n_link_states**i for i, c in enumerate(codes))
        try:
            return float(self.probs[self.space.index_of(packed)])
        except KeyError:
            return 0.0

    def mean_active(self) -> float:
        """``E[n_s]``, the expected number of active (link, channel) pairs."""
        return float(self.probs @ self.space.n_active)


def stationary_distribution(
    graph: ContentionGraph,
    config: ChannelConfig = ChannelConfig(),
    rho: float = 1.0,
    space: StateSpace | None = None,
) -> StationaryDistribution:
    if not rho > 0:
        raise ValueError("rho must be positive")
    if space is None:
        space = enumerate_feasible_states(graph, config)
    log_w = space.n_active * math.log(rho)
    log_z = float(logsumexp(log_w))
    if log_z < 700:
        weights = float(rho) ** space.n_active.astype(float)
        Z = float(np.polynomial.polynomial.polyval(rho, partition_polynomial(space).astype(float)))
        probs = weights / Z
    else:
        Z = math.inf
        probs = np.exp(log_w - log_z)
    return StationaryDistribution(float(rho), space, probs, Z, log_z)


def _check_link(dist: StationaryDistribution, i: int) -> None:
    if not 0 <= i < dist.graph.n_vertices:
        raise IndexError(f"unknown link {i}; graph has {dist.graph.n_vertices} links")


def link_throughput_exact(dist: StationaryDistribution, i: int) -> float:
    """Fraction of time link ``i`` transmits on at least one channel."""
    _check_link(dist, i)
    return float(dist.probs[dist.space.link_codes[:, i] != 0].sum())


def expected_channels(dist: StationaryDistribution, i: int) -> float:
    """Expected number of channels link ``i`` holds; equals the airtime when k = 1."""
    _check_link(dist, i)
    return float(dist.probs @ dist.space.channel_counts[:, i])


def throughput_Z_identity_check(graph: ContentionGraph, config: ChannelConfig, rho: float) -> float:
    """``|E[n_s] - rho * dlnZ/drho|`` with a central difference of step ``1e-5 * rho``."""
    space = enumerate_feasible_states(graph, config)
    coeffs = partition_polynomial(space)
    mean_active = stationary_distribution(graph, config, rho, space).mean_active()
    h = 1e-5 * rho
    deriv = (_log_z(coeffs, rho + h) - _log_z(coeffs, rho - h)) / (2 * h)
    return abs(mean_active - rho * deriv)


def generator_matrix(space: StateSpace, rho: float) -> np.ndarray:
    """CTMC generator of the exponential-timer dynamics on ``space``.

    A link holding fewer than ``k`` channels starts on a free channel ``f`` at
    rate ``rho`` (no neighbor and not itself on ``f``); each transmission
    ends at rate 1.
    """
    sets = link_channel_sets(space.config)
    index = {s: i for i, s in enumerate(sets)}
    n_link = len(sets)
    k = space.config.k
    q = space.config.q
    graph = space.graph
    pos = {int(p): j for j, p in enumerate(space.packed)}
    radix = [n_link**i for i in range(graph.n_vertices)]
    G = np.zeros((len(space), len(space)))
    for s, row in enumerate(space.link_codes.tolist()):
        for i, c in enumerate(row):
            chans = sets[c]
            for f in chans:
                smaller = tuple(x for x in chans if x != f)
                t = pos[int(space.packed[s]) + (index[smaller] - c) * radix[i]]
                G[s, t] += 1.0
            if len(chans) >= k:
                continue
            for f in range(1, q + 1):
                if f in chans or any(f in sets[row[j]] for j in graph.adjacency[i]):
                    continue
                bigger = tuple(sorted(chans + (f,)))
                t = pos[int(space.packed[s]) + (index[bigger] - c) * radix[i]]
                G[s, t] += rho
    G[np.diag_indices_from(G)] = -G.sum(axis=1)
    return G


@dataclass(frozen=True)
class MCSReport:
    max_transmitting: int
    num_mcs: int
    all_links_in_every_mcs: bool


def mcs_analysis(graph: ContentionGraph, config: ChannelConfig) -> MCSReport:
    """Maximum channel states: the feasible states with most links on air.

    With ``q`` channels every link is on in every such state exactly when the
    graph is ``q``-colorable.
    """
    if config.k != 1:
        raise ValueError("mcs_analysis needs k = 1")
    space = enumerate_feasible_states(graph, config)
    on = (space.link_codes != 0).sum(axis=1)
    top = int(on.max())
    return MCSReport(top, int((on == top).sum()), top == graph.n_vertices)


def write_distribution_csv(dist: StationaryDistribution, out: str | Path | TextIO) -> None:
    """CSV rows ``state_code,n_active,probability`` in packed-code order."""
    buf = io.StringIO()
    buf.write("state_code,n_active,probability\n")
    for code, n, p in zip(dist.space.packed, dist.space.n_active, dist.probs):
        buf.write(f"{int(code)},{int(n)},{p:.17g}\n")
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="\n") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())


# --- Ising correspondence ---------------------------------------------------


def ising_limit_check(
    n: int,
    r: float,
    K_values: Sequence[float],
    lattice: str = "ring",
    m: int | None = None,
) -> list[float]:
    """Total-variation distance between the mapped Ising law and the CSMA law.

    The Ising model on a ring of ``n`` spins (or an ``m x n`` torus) with
    coupling ``K`` and field ``h`` maps onto 0/1 occupations by
    ``s = (spin + 1) / 2``.  Holding ``2h - 2*degree*K = r`` fixed, the mapped
    law tends to the hard-core CSMA law with ``rho = exp(r)`` as ``K -> -inf``.
    One distance is returned per entry of ``K_values``.
    """
    if lattice == "ring":
        if n > 16:
            raise StateSpaceTooLarge("ring Ising check limited to n <= 16")
        graph = make_topology("ring", n=n, L=1)
    elif lattice == "torus":
        m = n if m is None else m
        if m > 4 or n > 4:
            raise StateSpaceTooLarge("torus Ising check limited to 4x4")
        graph = make_topology("torus", m=m, n=n)
    else:
        raise ValueError(f"unknown lattice {lattice!r}")
    degree = 2 if lattice == "ring" else 4
    size = graph.n_vertices
    occ = ((np.arange(2**size)[:, None] >> np.arange(size)) & 1).astype(float)
    spins = 2 * occ - 1
    edges = np.array(graph.sorted_edges())
    bond = (spins[:, edges[:, 0]] * spins[:, edges[:, 1]]).sum(axis=1)
    field_sum = spins.sum(axis=1)
    occ_bond = (occ[:, edges[:, 0]] * occ[:, edges[:, 1]]).sum(axis=1)

    # hard-core law on the same 2**size grid
    feasible = occ_bond == 0
    log_w = np.where(feasible, r * occ.sum(axis=1), -np.inf)
    hard = np.exp(log_w - logsumexp(log_w))

    out = []
    for K in K_values:
        h = (r + 2 * degree * K) / 2
        log_i = h * field_sum + K * bond
        ising = np.exp(log_i - logsumexp(log_i))
        out.append(0.5 * float(np.abs(ising - hard).sum()))
    return out

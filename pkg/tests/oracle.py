"""Brute-force reference computations, written independently of the package.

Everything here loops over plain Python tuples and uses exact rationals
where feasible, so it shares no code path with the vectorized versions.
"""

from __future__ import annotations

import itertools
from fractions import Fraction


def channel_subsets(q: int, k: int) -> list[frozenset[int]]:
    chans = range(1, q + 1)
    return [frozenset(c) for r in range(k + 1) for c in itertools.combinations(chans, r)]


def feasible_states(n: int, edges, q: int = 1, k: int = 1) -> list[tuple[frozenset[int], ...]]:
    subsets = channel_subsets(q, k)
    out = []
    for s in itertools.product(subsets, repeat=n):
        if all(not (s[u] & s[v]) for u, v in edges):
            out.append(s)
    return out


def z_poly(n: int, edges, q: int = 1, k: int = 1) -> list[int]:
    """Integer coefficients of Z(rho), lowest power first."""
    coeffs: dict[int, int] = {}
    for s in feasible_states(n, edges, q, k):
        m = sum(len(x) for x in s)
        coeffs[m] = coeffs.get(m, 0) + 1
    return [coeffs.get(i, 0) for i in range(max(coeffs) + 1)]


def z_value(n: int, edges, rho, q: int = 1, k: int = 1):
    return sum(c * rho**i for i, c in enumerate(z_poly(n, edges, q, k)))


def airtime(n: int, edges, rho, i: int, q: int = 1, k: int = 1):
    """Probability that link ``i`` holds at least one channel."""
    states = feasible_states(n, edges, q, k)
    w = [rho ** sum(len(x) for x in s) for s in states]
    on = sum(wi for wi, s in zip(w, states) if s[i])
    return on / sum(w)


def ring_edges(n: int, L: int = 1) -> set[tuple[int, int]]:
    return {tuple(sorted((i, (i + d) % n))) for i in range(n) for d in range(1, L + 1)}


def path_edges(n: int) -> set[tuple[int, int]]:
    return {(i, i + 1) for i in range(n - 1)}


def ladder_edges(units: int, closed: bool = True) -> set[tuple[int, int]]:
    """Two-leg ladder: rungs inside a unit, rails between consecutive units."""
    e = {(2 * u, 2 * u + 1) for u in range(units)}
    for u in range(units if closed else units - 1):
        v = (u + 1) % units
        for a in (0, 1):
            x, y = 2 * u + a, 2 * v + a
            e.add((min(x, y), max(x, y)))
    return e


def max_clique_size(n: int, edges) -> int:
    adj = {(u, v) for u, v in edges} | {(v, u) for u, v in edges}
    best = 1 if n else 0
    for r in range(2, n + 1):
        if any(all((a, b) in adj for a, b in itertools.combinations(c, 2)) for c in itertools.combinations(range(n), r)):
            best = r
        else:
            break
    return best


def exact_fraction(x: float, limit: int = 10**6) -> Fraction:
    return Fraction(x).limit_denominator(limit)

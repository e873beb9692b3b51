"""Transfer-matrix analysis of ring, linear and thin-strip CSMA networks.

A network built from repeating units has partition function
``Z = Tr A**N`` on a ring and ``1^T A**N e_idle`` on an open chain, with

    A[s, s'] = psi(s, s') * rho ** n(s),

``psi`` being 1 when neighboring units in states ``s`` and ``s'`` share no
channel across a coupling edge.  Two unit shapes are supported:

* disjoint units (a small contention graph repeated, coupled by explicit
  vertex pairs), used for single-vertex rings and thin strips;
* sliding windows of ``L`` consecutive vertices, used for rings whose
  vertices sense their ``L`` nearest neighbors on each side.

The module also carries the closed-form throughput formulas that the
transfer matrices reduce to.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np
from scipy.optimize import brentq

from agilecsma.exact import ChannelConfig, _compat_table, _set_masks, enumerate_feasible_states, link_channel_sets
from agilecsma.graph import ContentionGraph

__all__ = [
    "PrecisionWarning",
    "TransferMatrix",
    "UnitStateSpace",
    "build_transfer_matrix",
    "build_unit_space",
    "closed_form_throughput",
    "dominant_eigenvalue",
    "linear_unit_marginals",
    "log_partition_linear",
    "log_partition_ring",
    "partition_linear",
    "partition_ring",
    "throughput_tm",
    "window_transfer_matrix",
    "write_formula_csv",
    "FAMILIES",
]


class PrecisionWarning(RuntimeWarning):
    """A partition function exceeds the double range; use the log variant."""


@dataclass(frozen=True)
class UnitStateSpace:
    """Feasible states of one repeating unit.

    ``link_codes[s, v]`` is the per-link state index (see
    :func:`agilecsma.exact.link_channel_sets`) of unit vertex ``v``.  State 0
    is the all-idle unit.
    """

    unit_graph: ContentionGraph
    config: ChannelConfig
    link_codes: np.ndarray
    rho: float | None = None

    @property
    def n_active(self) -> np.ndarray:
        sizes = np.array([len(s) for s in link_channel_sets(self.config)])
        return sizes[self.link_codes].sum(axis=1)

    @property
    def weights(self) -> np.ndarray:
        if self.rho is None:
            raise ValueError("unit space was built without rho")
        return float(self.rho) ** self.n_active.astype(float)

    @property
    def labels(self) -> list[str]:
        """State labels listing each vertex's channels, e.g. ``"12"`` or ``"0"``."""
        sets = link_channel_sets(self.config)
        fmt = lambda ch: "".join(map(str, ch)) or "0"  # noqa: E731
        if self.config.k == 1:
            return ["".join(fmt(sets[c]) for c in row) for row in self.link_codes]
        return ["|".join(fmt(sets[c]) for c in row) for row in self.link_codes]

    def __len__(self) -> int:
        return len(self.link_codes)


def build_unit_space(unit_graph: ContentionGraph, config: ChannelConfig = ChannelConfig(), rho: float | None = None) -> UnitStateSpace:
    space = enumerate_feasible_states(unit_graph, config)
    return UnitStateSpace(unit_graph, config, space.link_codes, rho)


@dataclass(frozen=True)
class TransferMatrix:
    """Symbolic transfer matrix ``mask[s, s'] * rho ** row_exponents[s]``.

    ``vertices_per_step`` is the number of network vertices one matrix
    factor accounts for (the unit size, or 1 for sliding windows).
    ``channel_counts[s, v]`` is the number of channels unit vertex ``v``
    holds in state ``s``.
    """

    mask: np.ndarray
    row_exponents: np.ndarray
    rho: float
    labels: tuple[str, ...] = ()
    vertices_per_step: int = 1
    channel_counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.mask)

    @property
    def values(self) -> np.ndarray:
        return self.mask * float(self.rho) ** self.row_exponents[:, None].astype(float)

    def exponent_table(self) -> np.ndarray:
        """Integer matrix of ``rho`` exponents, ``-1`` marking structural zeros."""
        return np.where(self.mask, self.row_exponents[:, None], -1)

    def at(self, rho: float) -> TransferMatrix:
        return TransferMatrix(self.mask, self.row_exponents, float(rho), self.labels, self.vertices_per_step, self.channel_counts)

    def permuted(self, labels: Sequence[str]) -> TransferMatrix:
        """The same matrix with states reordered to ``labels``."""
        idx = [self.labels.index(lab) for lab in labels]
        cc = None if self.channel_counts is None else self.channel_counts[idx]
        return TransferMatrix(self.mask[np.ix_(idx, idx)], self.row_exponents[idx], self.rho, tuple(labels), self.vertices_per_step, cc)


def build_transfer_matrix(
    space: UnitStateSpace,
    inter_unit_edges: Sequence[tuple[int, int]],
    rho: float | None = None,
) -> TransferMatrix:
    """Couple consecutive units; ``(a, b)`` joins vertex ``a`` of a unit to
    vertex ``b`` of the next one."""
    n_u = space.unit_graph.n_vertices
    for a, b in inter_unit_edges:
        if not (0 <= a < n_u and 0 <= b < n_u):
            raise ValueError(f"inter-unit edge ({a}, {b}) outside unit of {n_u} vertices")
    rho = space.rho if rho is None else rho
    if rho is None:
        raise ValueError("rho is required")
    compat = _compat_table(space.config)
    codes = space.link_codes
    mask = np.ones((len(codes), len(codes)), dtype=bool)
    for a, b in inter_unit_edges:
        mask &= compat[codes[:, a][:, None], codes[:, b][None, :]]
    sizes = np.array([len(s) for s in link_channel_sets(space.config)])
    return TransferMatrix(
        mask,
        space.n_active.astype(np.int64),
        float(rho),
        tuple(space.labels),
        n_u,
        sizes[codes],
    )


def window_transfer_matrix(L: int, config: ChannelConfig = ChannelConfig(), rho: float = 1.0) -> TransferMatrix:
    """Sliding-window matrix for a ring where each vertex senses ``L`` neighbors per side.

    A state is the joint state of vertices ``i .. i+L-1`` (all mutually
    sensing).  The next window drops vertex ``i`` and adds ``i+L``, which must
    avoid every channel in use by the other ``L`` vertices; the row weight
    counts only vertex ``i``'s channels, so each vertex is weighed once.
    For ``(1,1)`` this is the ``(L+1)``-state matrix with idle first and
    "vertex ``i+j`` on" in position ``j+1``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    window = ContentionGraph.from_edges(L, [(a, b) for a in range(L) for b in range(a + 1, L)])
    space = build_unit_space(window, config, rho)
    rows = space.link_codes.tolist()
    masks = _set_masks(config)
    d = len(rows)
    mask = np.zeros((d, d), dtype=bool)
    for s, row in enumerate(rows):
        for t, nxt in enumerate(rows):
            mask[s, t] = row[1:] == nxt[:-1] and not masks[row[0]] & masks[nxt[-1]]
    sizes = np.array([len(c) for c in link_channel_sets(config)])
    first = space.link_codes[:, :1]
    return TransferMatrix(mask, sizes[first[:, 0]].astype(np.int64), float(rho), tuple(space.labels), 1, sizes[first])


# --- partition functions ----------------------------------------------------


def _log_matrix_power(values: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """``A**n`` as ``(M, log_scale)`` with ``A**n = M * exp(log_scale)``, by
    repeated squaring in extended precision with per-step rescaling."""
    if n < 0:
        raise ValueError("power must be non-negative")
    base = np.asarray(values, dtype=np.longdouble)
    base_log = 0.0
    result = np.eye(len(base), dtype=np.longdouble)
    result_log = 0.0
    while n:
        if n & 1:
            result = result @ base
            result_log += base_log
            s = result.max()
            result /= s
            result_log += float(np.log(s))
        n >>= 1
        if n:
            base = base @ base
            base_log *= 2
            s = base.max()
            base /= s
            base_log += float(np.log(s))
    return result, result_log


def _as_values(A: TransferMatrix | np.ndarray) -> np.ndarray:
    return A.values if isinstance(A, TransferMatrix) else np.asarray(A, dtype=float)


def log_partition_ring(A: TransferMatrix | np.ndarray, N: int) -> float:
    """``ln Tr A**N``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    M, log_s = _log_matrix_power(_as_values(A), N)
    tr = M.trace()
    if not tr > 0:
        raise ValueError("trace of A**N is not positive")
    return float(np.log(tr)) + log_s


def log_partition_linear(A: TransferMatrix | np.ndarray, N: int) -> float:
    """``ln (1^T A**N e_idle)`` for an open chain of ``N`` units."""
    if N < 1:
        raise ValueError("N must be >= 1")
    M, log_s = _log_matrix_power(_as_values(A), N)
    return float(np.log(M[:, 0].sum())) + log_s


def _exp_checked(log_z: float, A: TransferMatrix | np.ndarray, N: int) -> float:
    z1 = max(abs(np.linalg.eigvals(_as_values(A))))
    if N * math.log(max(z1, 1.0)) > 700 or log_z > 700:
        warnings.warn(f"partition function exp({log_z:.1f}) exceeds double precision; use the log form", PrecisionWarning, stacklevel=3)
        return math.inf if log_z > 709 else math.exp(log_z)
    return math.exp(log_z)


def partition_ring(A: TransferMatrix | np.ndarray, N: int) -> float:
    """``Z = Tr A**N`` for a ring of ``N`` units."""
    if N < 2:
        raise ValueError("ring partition needs N >= 2")
    return _exp_checked(log_partition_ring(A, N), A, N)


def partition_linear(A: TransferMatrix | np.ndarray, N: int) -> float:
    """``Z = 1^T A**N e_idle``: an open chain whose (N+1)-th unit is idle."""
    return _exp_checked(log_partition_linear(A, N), A, N)


def linear_unit_marginals(A: TransferMatrix, N: int, i: int) -> np.ndarray:
    """Probability of each state of unit ``i`` (1-based) in an open chain of ``N`` units."""
    if not 1 <= i <= N:
        raise ValueError(f"unit index {i} outside 1..{N}")
    V = A.values.astype(np.longdouble)
    left, _ = _log_matrix_power(V, i - 1)
    right, _ = _log_matrix_power(V, N + 1 - i)
    head = left.sum(axis=0)
    tail = right[:, 0]
    joint = head * tail
    return np.asarray(joint / joint.sum(), dtype=float)


# --- eigenvalues and throughput ---------------------------------------------


def _perron(values: np.ndarray, tol: float = 1e-14, max_iter: int = 200_000) -> float:
    A = np.asarray(values, dtype=float)
    shifted = A + np.eye(len(A))
    v = np.ones(len(A)) / len(A)
    z = 0.0
    for _ in range(max_iter):
        w = shifted @ v
        z_new = w.sum() / v.sum()
        w /= w.sum()
        if np.abs(w - v).max() < tol and abs(z_new - z) <= tol * abs(z_new):
            return z_new - 1.0
        v, z = w, z_new
    raise RuntimeError("power iteration did not converge; matrix may be reducible or degenerate")


def dominant_eigenvalue(A: TransferMatrix, rel_step: float = 1e-6) -> tuple[float, float]:
    """Perron root ``z1`` and ``dz1/drho`` (central difference).

    The root comes from power iteration on ``A + I``.  A second eigenvalue of
    equal modulus is rejected rather than guessed.
    """
    if np.any(A.values < 0):
        raise ValueError("transfer matrix must be non-negative")
    z1 = _perron(A.values)
    mods = np.sort(np.abs(np.linalg.eigvals(A.values)))[::-1]
    if len(mods) > 1 and mods[1] >= mods[0] * (1 - 1e-9):
        raise ValueError("dominant eigenvalue is not unique in modulus")
    h = rel_step * A.rho
    dz = (_perron(A.at(A.rho + h).values) - _perron(A.at(A.rho - h).values)) / (2 * h)
    return z1, dz


def throughput_tm(A: TransferMatrix, N: int, rho: float | None = None, vertices_per_unit: int | None = None, rel_step: float = 1e-6) -> float:
    """Per-vertex throughput on a ring of ``N`` units: ``rho dlnZ/drho / (N * vertices)``.

    For ``k > 1`` this is the expected channel count per vertex, since each
    active channel contributes one factor of ``rho``.
    """
    rho = A.rho if rho is None else rho
    vpu = A.vertices_per_step if vertices_per_unit is None else vertices_per_unit
    h = rel_step * rho
    d = (log_partition_ring(A.at(rho + h), N) - log_partition_ring(A.at(rho - h), N)) / (2 * h)
    return rho * d / (N * vpu)


# --- closed forms -----------------------------------------------------------


def _ring11_roots(rho: float) -> tuple[float, float]:
    r = math.sqrt(1 + 4 * rho)
    return (1 + r) / 2, (1 - r) / 2


def _ring21_roots(rho: float) -> tuple[float, float, float]:
    r = math.sqrt((rho + 1) ** 2 + 4 * rho)
    return ((rho + 1) + r) / 2, ((rho + 1) - r) / 2, -rho


def _largest_real_root(coeffs: Sequence[float]) -> float:
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) < 1e-9 * np.maximum(1, np.abs(roots))].real
    return float(real.max())


def lring_z1(L: int, rho: float) -> float:
    """Positive root of ``z**(L+1) - z**L - rho``."""
    return brentq(lambda z: z ** (L + 1) - z**L - rho, 1.0, 1.0 + rho, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _ring11_finite(rho, N):
    z1, z2 = _ring11_roots(rho)
    return (-z2 * z1**N + z1 * z2**N) / ((z1 - z2) * (z1**N + z2**N))


def _ring11_inf(rho, N=None):
    return 0.5 - 0.5 / math.sqrt(1 + 4 * rho)


def _ring21_finite(rho, N):
    z1, z2, z3 = _ring21_roots(rho)
    num = (z1 - 1) * z1**N / (z1 - z2) + (1 - z2) * z2**N / (z1 - z2) + z3**N
    return num / (z1**N + z2**N + z3**N)


def _ring21_inf(rho, N=None):
    r = math.sqrt((rho + 1) ** 2 + 4 * rho)
    return (r + rho - 1) / (2 * r)


def _iso_link(rho, N=None):
    return rho / (1 + rho)


def _lring11(rho, N=None, L=2):
    z1 = lring_z1(L, rho)
    return 1 / (L + 1) - 1 / ((L + 1) * ((L + 1) * z1 - L))


def _lring11_approx(rho, N=None):
    c = rho ** (1 / 3)
    return 1 / 3 - 1 / (9 * c + 1 / c - 3)


def _lring21(rho, N=None):
    c = rho ** (1 / 3)
    return 2 / 3 - (c / 9 + 4 / 9) / (c * c + c / 3 + 2 / 3)


def _lring21_z1(rho: float) -> float:
    return _largest_real_root([1, -1, -rho, -(rho**2 + rho), -(rho**2)])


def _lring21_exact(rho, N=None):
    # rho * dln(z1)/drho with dz1/drho from implicit differentiation of the quartic
    z = _lring21_z1(rho)
    p_rho = -(z**2) - (2 * rho + 1) * z - 2 * rho
    p_z = 4 * z**3 - 3 * z**2 - 2 * rho * z - (rho**2 + rho)
    return rho * (-p_rho / p_z) / z


def _lring31_z1(rho: float) -> float:
    return _largest_real_root([1, -(1 + rho), -rho, -(2 * rho**2 + rho), -(rho**2)])


def _lring31(rho, N=None):
    z = _lring31_z1(rho)
    num = rho * (z**3 + z**2 + z + 4 * rho * z + 2 * rho)
    den = z * (4 * z**3 - 3 * rho * z**2 - 3 * z**2 - 2 * rho * z - rho - 2 * rho**2)
    return num / den


def _torus11(rho, N=None):
    return 0.5 * (rho / (1 + rho) + rho / (1 + 5 * rho + 6 * rho**2 + 4 * rho**3 + rho**4))


def _linear11_vertex(rho, N, i=1):
    if not 1 <= i <= N:
        raise ValueError(f"vertex {i} outside 1..{N}")
    z1, z2 = _ring11_roots(rho)
    num = -z1 * z2 * (z1**i - z2**i) * (z1 ** (N + 1 - i) - z2 ** (N + 1 - i))
    return num / ((z1 - z2) * (z1 ** (N + 2) - z2 ** (N + 2)))


def _linear11_edge(rho, N=None):
    r = math.sqrt(1 + 4 * rho)
    return (r - 1) / (r + 1)


def _linear11_middle(rho, N=None):
    r = math.sqrt(1 + 4 * rho)
    return (r - 1) / (2 * r)


def _linear11_Z(rho, N):
    z1, z2 = _ring11_roots(rho)
    return (z1 ** (N + 2) - z2 ** (N + 2)) / (z1 - z2)


def _strip11_inf(rho, N=None):
    return _ring21_inf(rho) / 2


def _strip21_inf(rho, N=None):
    return 1 - (rho + 2) / (rho**2 + 2 * rho + 2)


# family -> (function, needs N)
FAMILIES: dict[str, tuple[Callable[..., float], bool]] = {
    "ring11_finite": (_ring11_finite, True),
    "ring11_inf": (_ring11_inf, False),
    "ring21_finite": (_ring21_finite, True),
    "ring21_inf": (_ring21_inf, False),
    "iso_link": (_iso_link, False),
    "Lring11": (_lring11, False),
    "Lring11_approx": (_lring11_approx, False),
    "Lring21": (_lring21, False),
    "Lring21_exact": (_lring21_exact, False),
    "Lring31": (_lring31, False),
    "torus11": (_torus11, False),
    "torus21": (_iso_link, False),
    "linear11_vertex_i": (_linear11_vertex, True),
    "linear11_edge": (_linear11_edge, False),
    "linear11_middle": (_linear11_middle, False),
    "linear11_Z": (_linear11_Z, True),
    "strip11_inf": (_strip11_inf, False),
    "strip21_inf": (_strip21_inf, False),
}


def closed_form_throughput(family: str, rho: float, N: int | None = None, **kw) -> float:
    """Evaluate a closed-form per-vertex throughput.

    ``Lring11`` takes an optional ``L`` (default 2) and uses the exact
    positive root; ``Lring11_approx`` and ``Lring21`` use the series
    approximations of the dominant root for ``L = 2`` and ``Lring21_exact``
    the exact quartic root; ``Lring31`` solves
    its quartic numerically.  ``linear11_vertex_i`` takes ``i`` (1-based).
    ``linear11_Z`` returns the open-chain partition function, not a
    throughput.
    """
    try:
        fn, needs_n = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None
    if not rho > 0:
        raise ValueError("rho must be positive")
    if needs_n and N is None:
        raise ValueError(f"family {family!r} needs N")
    return float(fn(rho, N, **kw)) if kw else float(fn(rho, N))


def write_formula_csv(rows: Sequence[tuple[str, float, int | None, float]], out: str | Path | TextIO) -> None:
    """CSV ``family,rho,N,throughput``; ``N`` is blank for infinite-N forms."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "rho", "N", "throughput"])
    for family, rho, N, th in rows:
        w.writerow([family, f"{rho:g}", "" if N is None else N, f"{th:.17g}"])
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="\n") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())

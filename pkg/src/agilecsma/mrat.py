"""Mean residual access time (MRAT) from passage-time moments.

With ``Y`` the time between the starts of two successive transmissions of a
link, a random observer waits on average

    MRAT = E[Y**2] / (2 E[Y])

until the link's next transmission starts.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

__all__ = [
    "BirthDeathChain",
    "PassageMoments",
    "center_star_mrat_rational",
    "closed_form_mrat",
    "isolated_mrat",
    "mrat_from_moments",
    "passage_moments",
    "star_center_chain",
    "write_mrat_csv",
    "MRAT_FAMILIES",
]


@dataclass(frozen=True)
class BirthDeathChain:
    """Birth-death CTMC on states ``0..n_states-1``.

    ``up_rates[i]`` is the rate ``i -> i+1`` and ``down_rates[i]`` the rate
    ``i -> i-1``; ``up_rates[-1]`` and ``down_rates[0]`` must be zero.
    """

    up_rates: np.ndarray
    down_rates: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        up = np.asarray(self.up_rates, dtype=float)
        down = np.asarray(self.down_rates, dtype=float)
        if up.shape != down.shape or up.ndim != 1:
            raise ValueError("up_rates and down_rates must be 1-D and equally long")
        if np.any(up < 0) or np.any(down < 0):
            raise ValueError("rates must be non-negative")
        if up[-1] != 0 or down[0] != 0:
            raise ValueError("chain ends must not leave the state space")
        object.__setattr__(self, "up_rates", up)
        object.__setattr__(self, "down_rates", down)

    @property
    def n_states(self) -> int:
        return len(self.up_rates)

    def generator(self) -> np.ndarray:
        n = self.n_states
        Q = np.zeros((n, n))
        Q[np.arange(n - 1), np.arange(1, n)] = self.up_rates[:-1]
        Q[np.arange(1, n), np.arange(n - 1)] = self.down_rates[1:]
        Q[np.diag_indices(n)] = -Q.sum(axis=1)
        return Q

    def stationary(self) -> np.ndarray:
        """Stationary law from the birth-death balance ``pi[i] up[i] = pi[i+1] down[i+1]``."""
        w = np.ones(self.n_states)
        for i in range(self.n_states - 1):
            w[i + 1] = w[i] * self.up_rates[i] / self.down_rates[i + 1]
        return w / w.sum()

    def index(self, state: int | str) -> int:
        if isinstance(state, str):
            return self.names.index(state)
        return int(state)


@dataclass(frozen=True)
class PassageMoments:
    mean: float
    second: float

    @property
    def var(self) -> float:
        return self.second - self.mean**2


def passage_moments(chain: BirthDeathChain, start: int | str, target: int | str) -> PassageMoments:
    """First two moments of the first-passage time ``start -> target``.

    First-step analysis: with holding mean ``h_x = 1/q_x`` and jump
    probabilities ``p_xy``,

        m1[x] = h_x + sum_y p_xy m1[y]
        m2[x] = 2 h_x m1[x] + sum_y p_xy m2[y]

    and ``m1 = m2 = 0`` at the target.
    """
    Q = chain.generator()
    a, c = chain.index(start), chain.index(target)
    if a == c:
        return PassageMoments(0.0, 0.0)
    n = len(Q)
    others = [x for x in range(n) if x != c]
    rates = -np.diag(Q)[others]
    if np.any(rates <= 0):
        raise ValueError("absorbing state other than the target; passage time is infinite")
    P = Q[np.ix_(others, others)] / rates[:, None]
    P[np.diag_indices_from(P)] = 0.0
    hold = 1.0 / rates
    M = np.eye(len(others)) - P
    if abs(np.linalg.det(M)) < 1e-300 or np.linalg.cond(M) > 1e14:
        raise ValueError(f"target {target!r} is not reachable from {start!r}")
    m1 = np.linalg.solve(M, hold)
    m2 = np.linalg.solve(M, 2 * hold * m1)
    i = others.index(a)
    return PassageMoments(float(m1[i]), float(m2[i]))


def mrat_from_moments(mean_y: float, second_y: float) -> float:
    return second_y / (2 * mean_y)


def star_center_chain(rho: float, leaves: int = 4) -> BirthDeathChain:
    """Chain seen by the center of a star with ``leaves`` outer links.

    States in order: ``c`` (center on), ``i`` (all idle), then ``1..leaves``
    outer links on.  The center finishes at rate 1 and starts at rate
    ``rho`` from ``i``; with ``j`` outer links on, each finishes at rate 1 and
    each of the ``leaves - j`` idle ones starts at rate ``rho``.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    n = leaves + 2
    up = np.zeros(n)
    down = np.zeros(n)
    up[0] = 1.0  # c -> i
    down[1] = rho  # i -> c
    for j in range(leaves):
        up[j + 1] = (leaves - j) * rho
        down[j + 2] = j + 1
    names = ("c", "i") + tuple(str(j) for j in range(1, leaves + 1))
    return BirthDeathChain(up, down, names)


def _star_mrat_first_step(rho: float) -> float:
    chain = star_center_chain(rho)
    t = passage_moments(chain, "i", "c")
    # Y = T(c->i) + T(i->c); T(c->i) ~ Exp(1)
    mean_y = 1.0 + t.mean
    second_y = 2.0 + t.second + 2.0 * t.mean
    return mrat_from_moments(mean_y, second_y)


_STAR_NUM = (12, 108, 444, 924, 1156, 891, 429, 121, 15)
_STAR_DEN = (1, 5, 6, 4, 1)


def _horner(coeffs: Sequence[float], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def center_star_mrat_rational(rho: float) -> float:
    """Rational-function MRAT of the five-link star's center."""
    return _horner(_STAR_NUM, rho) / (12 * rho * _horner(_STAR_DEN, rho))


def isolated_mrat(rho: float) -> float:
    return (rho * rho + rho + 1) / (rho * rho + rho)


MRAT_FAMILIES = ("isolated", "torus21", "torus11", "center_star")


def closed_form_mrat(family: str, rho: float, method: str = "first_step") -> float:
    """Closed-form MRAT.

    ``center_star`` (and the star half of ``torus11``) comes from the
    passage-time solve by default; ``method="rational"`` evaluates the
    rational function instead.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if method not in ("first_step", "rational"):
        raise ValueError(f"unknown method {method!r}")
    star = _star_mrat_first_step if method == "first_step" else center_star_mrat_rational
    if family in ("isolated", "torus21"):
        return isolated_mrat(rho)
    if family == "center_star":
        return star(rho)
    if family == "torus11":
        return 0.5 * isolated_mrat(rho) + 0.5 * star(rho)
    raise ValueError(f"unknown MRAT family {family!r}; choose from {MRAT_FAMILIES}")


def write_mrat_csv(rows: Sequence[tuple[str, float, float]], out: str | Path | TextIO) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "rho", "mrat"])
    for family, rho, m in rows:
        w.writerow([family, f"{rho:g}", f"{m:.17g}"])
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="\n") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())

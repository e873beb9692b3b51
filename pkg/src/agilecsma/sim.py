"""Event-driven simulation of the frequency-agile CSMA MAC.

Each link runs one backoff timer per channel.  Time is measured in mean
packet durations, so the transmission mean is 1 and the countdown mean is
``1 / rho``.  Statistics cover ``[warmup, horizon]``, split into equal
batches for batch-means confidence intervals.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
from scipy import stats

from agilecsma import _engine
from agilecsma.exact import ChannelConfig, StateSpace, link_channel_sets
from agilecsma.graph import ContentionGraph

__all__ = [
    "DISTRIBUTIONS",
    "LinkStats",
    "SimConfig",
    "SimResult",
    "Trace",
    "TraceViolation",
    "insensitivity_experiment",
    "mrat_from_samples",
    "simulate",
    "validate_trace",
    "write_stats_csv",
    "write_trace_csv",
]

DISTRIBUTIONS = {
    "exponential": _engine.EXPONENTIAL,
    "deterministic": _engine.DETERMINISTIC,
    "uniform": _engine.UNIFORM,
}

MAX_TRACKED_CODES = 1 << 20


@dataclass(frozen=True)
class SimConfig:
    graph: ContentionGraph
    channels: ChannelConfig = ChannelConfig()
    rho: float = 1.0
    countdown: str = "exponential"
    transmission: str = "exponential"
    horizon: float = 1e6
    warmup: float | None = None
    seed: int = 0
    n_batches: int = 20

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        for name in (self.countdown, self.transmission):
            if name not in DISTRIBUTIONS:
                raise ValueError(f"unknown distribution {name!r}; choose from {sorted(DISTRIBUTIONS)}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.05 * self.horizon)
        if not self.horizon > self.warmup >= 0:
            raise ValueError("need horizon > warmup >= 0")
        if self.n_batches < 2:
            raise ValueError("need at least two batches")

    @property
    def measured_time(self) -> float:
        return self.horizon - self.warmup


@dataclass(frozen=True)
class LinkStats:
    """Per-link results.  ``mrat_estimate`` is NaN when fewer than two
    transmissions started after the warmup."""

    throughput: float
    ci90: float
    mrat_estimate: float
    n_samples: int
    mean_channels: float
    inter_access_samples: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Trace:
    """Transmission intervals ``(link, channel, start, end)``, sorted by start.

    Channels are numbered from 1.  Intervals running at the horizon are
    cut there.
    """

    link: np.ndarray
    channel: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def __len__(self) -> int:
        return len(self.link)

    def for_link(self, i: int) -> list[tuple[float, float, int]]:
        sel = self.link == i
        return list(zip(self.start[sel].tolist(), self.end[sel].tolist(), self.channel[sel].tolist()))


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    links: list[LinkStats]
    batch_airtime: np.ndarray
    n_events: int
    trace: Trace | None = None
    state_occupancy: np.ndarray | None = field(default=None, repr=False)

    @property
    def throughputs(self) -> np.ndarray:
        return np.array([s.throughput for s in self.links])

    @property
    def mrats(self) -> np.ndarray:
        return np.array([s.mrat_estimate for s in self.links])

    def state_frequencies(self, space: StateSpace) -> np.ndarray:
        """Per-batch time fractions of each state in ``space``, shape ``(batches, states)``.

        Needs ``track_states=True`` when simulating.
        """
        if self.state_occupancy is None:
            raise ValueError("simulate with track_states=True to record state occupancy")
        batch_len = self.config.measured_time / self.config.n_batches
        occ = self.state_occupancy[:, space.packed] / batch_len
        return occ


def _t90(n_batches: int) -> float:
    return float(stats.t.ppf(0.95, n_batches - 1))


def batch_ci90(batch_values: np.ndarray) -> np.ndarray:
    """Half-width of the 90% Student-t interval over the first axis."""
    b = len(batch_values)
    return _t90(b) * batch_values.std(axis=0, ddof=1) / math.sqrt(b)


def _mask_to_code(config: ChannelConfig) -> np.ndarray:
    table = np.full(1 << config.q, -1, dtype=np.int64)
    for idx, chans in enumerate(link_channel_sets(config)):
        table[sum(1 << (f - 1) for f in chans)] = idx
    return table


def _engine_seed(seed: int) -> int:
    return int(np.random.SeedSequence(seed).generate_state(1, dtype=np.uint32)[0])


def simulate(
    config: SimConfig,
    *,
    record_trace: bool = False,
    record_samples: bool = False,
    track_states: bool = False,
) -> SimResult:
    """Run one replication.

    Simultaneous events are ordered completions first, then by link index,
    then channel index.  Timers start from the countdown's stationary
    residual law.  Identical config and seed give identical output.
    """
    g = config.graph
    cc = config.channels
    indptr, indices = g.csr()
    mask_to_code = _mask_to_code(cc)
    n_codes = len(link_channel_sets(cc)) ** g.n_vertices
    if track_states and n_codes > MAX_TRACKED_CODES:
        raise ValueError(f"state tracking limited to {MAX_TRACKED_CODES} packed codes, need {n_codes}")
    out = _engine.run(
        g.n_vertices, cc.q, cc.k, indptr, indices,
        DISTRIBUTIONS[config.countdown], 1.0 / config.rho,
        DISTRIBUTIONS[config.transmission], 1.0,
        float(config.horizon), float(config.warmup), int(config.n_batches), _engine_seed(config.seed),
        mask_to_code, int(n_codes if track_states else 1), bool(track_states),
        bool(record_trace), bool(record_samples),
    )
    (airtime, chan_time, _n_starts, y_count, y_sum, y_sumsq, occ,
     tr_link, tr_chan, tr_a, tr_b, smp_link, smp_val, n_events) = out

    T = config.measured_time
    batch_len = T / config.n_batches
    batch_th = airtime / batch_len
    ci = batch_ci90(batch_th)
    links = []
    for i in range(g.n_vertices):
        n_y = int(y_count[i])
        m = y_sumsq[i] / (2 * y_sum[i]) if n_y > 0 else math.nan
        samples = smp_val[smp_link == i].copy() if record_samples else None
        links.append(LinkStats(float(airtime[:, i].sum() / T), float(ci[i]), float(m), n_y, float(chan_time[i] / T), samples))

    trace = None
    if record_trace:
        order = np.lexsort((tr_chan, tr_link, tr_a))
        trace = Trace(tr_link[order], tr_chan[order] + 1, tr_a[order], tr_b[order])
    return SimResult(config, links, batch_th, int(n_events), trace, occ if track_states else None)


def mrat_from_samples(samples: Sequence[float] | np.ndarray) -> float:
    """``E[Y^2] / (2 E[Y])`` from inter-access samples."""
    y = np.asarray(samples, dtype=float)
    if y.size == 0:
        raise ValueError("link never transmitted twice; no inter-access samples")
    if y.size < 100:
        warnings.warn(f"MRAT from only {y.size} samples is low-confidence", RuntimeWarning, stacklevel=2)
    return float((y**2).mean() / (2 * y.mean()))


class TraceViolation(AssertionError):
    pass


def validate_trace(trace: Trace, graph: ContentionGraph, k: int) -> None:
    """Raise :class:`TraceViolation` if the trace breaks carrier sensing.

    Checks that a link never overlaps itself on one channel, never holds
    more than ``k`` channels and never shares a channel with a neighbor.
    """
    eps = 1e-12
    by_link: dict[int, list[tuple[float, float, int]]] = {}
    for i, c, a, b in zip(trace.link.tolist(), trace.channel.tolist(), trace.start.tolist(), trace.end.tolist()):
        if b < a:
            raise TraceViolation(f"link {i}: interval ends before it starts")
        by_link.setdefault(i, []).append((a, b, c))

    for i, ivs in by_link.items():
        events = sorted([(a, 1) for a, _, _ in ivs] + [(b, -1) for _, b, _ in ivs], key=lambda e: (e[0], e[1]))
        held = 0
        for _, d in events:
            held += d
            if held > k:
                raise TraceViolation(f"link {i} holds more than {k} channels")

    def overlaps(x: list, y: list, same_link: bool) -> tuple | None:
        x = sorted(x)
        y = sorted(y)
        j = 0
        for a, b in x:
            while j < len(y) and y[j][1] <= a + eps:
                j += 1
            jj = j
            while jj < len(y) and y[jj][0] < b - eps:
                if not (same_link and y[jj] == (a, b)) and min(b, y[jj][1]) - max(a, y[jj][0]) > eps:
                    return (a, b), y[jj]
                jj += 1
        return None

    per_lc: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for i, ivs in by_link.items():
        for a, b, c in ivs:
            per_lc.setdefault((i, c), []).append((a, b))
    for (i, c), ivs in per_lc.items():
        hit = overlaps(ivs, ivs, True)
        if hit:
            raise TraceViolation(f"link {i} overlaps itself on channel {c}: {hit}")
    for u, v in graph.edges:
        for c in {c for (i, c) in per_lc if i == u}:
            if (v, c) in per_lc:
                hit = overlaps(per_lc[(u, c)], per_lc[(v, c)], False)
                if hit:
                    raise TraceViolation(f"neighbors {u},{v} share channel {c}: {hit}")


_INSENSITIVITY_PAIRS = (
    ("exponential", "exponential"),
    ("deterministic", "deterministic"),
    ("uniform", "exponential"),
)


@dataclass(frozen=True)
class InsensitivityReport:
    """Per-link throughputs, one array per (countdown, transmission) pair."""

    throughputs: dict[tuple[str, str], np.ndarray]
    ci90: dict[tuple[str, str], np.ndarray]


def insensitivity_experiment(
    graph: ContentionGraph,
    channels: ChannelConfig,
    rho: float,
    horizon: float = 1e6,
    seed: int = 0,
    pairs: Sequence[tuple[str, str]] = _INSENSITIVITY_PAIRS,
) -> InsensitivityReport:
    """Simulate the same network under several timer distributions with equal means."""
    th, ci = {}, {}
    base = SimConfig(graph, channels, rho, horizon=horizon, seed=seed)
    for cd, tr in pairs:
        res = simulate(replace(base, countdown=cd, transmission=tr))
        th[(cd, tr)] = res.throughputs
        ci[(cd, tr)] = np.array([s.ci90 for s in res.links])
    return InsensitivityReport(th, ci)


def _write(buf: io.StringIO, out: str | Path | TextIO) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="\n") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())


def write_trace_csv(trace: Trace, out: str | Path | TextIO) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["link", "channel", "start", "end"])
    for row in zip(trace.link.tolist(), trace.channel.tolist(), trace.start.tolist(), trace.end.tolist()):
        w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    _write(buf, out)


def write_stats_csv(result: SimResult, out: str | Path | TextIO) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["link", "throughput", "ci90", "mrat", "n_samples"])
    for i, s in enumerate(result.links):
        w.writerow([i, f"{s.throughput:.10g}", f"{s.ci90:.10g}", f"{s.mrat_estimate:.10g}", s.n_samples])
    _write(buf, out)

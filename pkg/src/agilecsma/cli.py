"""Command-line front end.

Subcommands::

    topology   write a contention graph file
    exact      per-link throughput by state enumeration
    tm         per-link throughput from a ring transfer matrix
    formula    evaluate a closed-form throughput
    simulate   run the event simulator
    mrat       evaluate a closed-form MRAT
    sweep      run a preset grid and write ResultRow CSV

Tabular output is CSV with a header row and LF line endings.  The worker
count for sweeps defaults to ``$AGILECSMA_WORKERS`` (else the CPU count).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from agilecsma import exact, mrat, sim, transfer
from agilecsma.exact import ChannelConfig
from agilecsma.graph import ContentionGraph, make_topology, read_graph, write_graph

WORKERS_ENV = "AGILECSMA_WORKERS"
DEFAULT_HORIZON = 1e6

RESULT_FIELDS = ("topology", "q", "k", "rho", "N", "link_id", "metric", "value", "ci90", "source", "note")


@dataclass(frozen=True)
class ResultRow:
    topology: str
    q: int
    k: int
    rho: float
    N: int
    link_id: str
    metric: str
    value: float
    ci90: float | None = None
    source: str = "sim"
    note: str = ""

    def sort_key(self) -> tuple:
        lid = (0, int(self.link_id), "") if self.link_id.isdigit() else (1, 0, self.link_id)
        return (self.topology, self.q, self.k, self.rho, self.N, lid, self.metric, self.source)

    def cells(self) -> list[str]:
        fmt = lambda x: "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.10g}"  # noqa: E731
        return [self.topology, str(self.q), str(self.k), f"{self.rho:g}", str(self.N), self.link_id,
                self.metric, fmt(self.value), fmt(self.ci90), self.source, self.note]


def write_rows(rows: Iterable[ResultRow], out) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in sorted(rows, key=ResultRow.sort_key):
        w.writerow(r.cells())
    _emit(buf.getvalue(), out)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


# --- topology specs ---------------------------------------------------------


@dataclass(frozen=True)
class Topology:
    """Named topology plus the parameters ``make_topology`` needs."""

    kind: str
    params: tuple[tuple[str, int], ...] = ()

    @property
    def label(self) -> str:
        p = dict(self.params)
        if self.kind == "ring":
            return f"ring_L{p.get('L', 1)}"
        if self.kind == "torus":
            return "torus"
        return self.kind

    def build(self) -> ContentionGraph:
        return make_topology(self.kind, **dict(self.params))


def _topology_from_args(args: argparse.Namespace) -> tuple[ContentionGraph, str, Topology | None]:
    if args.graph:
        g = read_graph(args.graph)
        return g, os.path.basename(args.graph), None
    if not args.topology:
        raise ValueError("give --graph FILE or --topology KIND")
    topo = Topology(args.topology, tuple(_params_for(args.topology, args)))
    return topo.build(), topo.label, topo


def _params_for(kind: str, args: argparse.Namespace) -> list[tuple[str, int]]:
    need = {
        "ring": ("n", "L"), "linear": ("n", "L"), "torus": ("m", "n"),
        "complete": ("n",), "empty": ("n",), "star": ("leaves",),
    }
    if kind not in need:
        raise ValueError(f"unknown topology {kind!r}; choose from {sorted(need)}")
    out = []
    for name in need[kind]:
        val = getattr(args, name.lower() if name != "L" else "l")
        if val is None:
            if name == "L":
                val = 1
            elif name == "m" and kind == "torus":
                val = args.n
            else:
                raise ValueError(f"topology {kind} needs --{name.lower()}")
        out.append((name, int(val)))
    return out


# --- single-point evaluators --------------------------------------------------


def exact_rows(graph: ContentionGraph, label: str, cc: ChannelConfig, rho: float) -> list[ResultRow]:
    dist = exact.stationary_distribution(graph, cc, rho)
    N = graph.n_vertices
    vals = [exact.link_throughput_exact(dist, i) for i in range(N)]
    rows = [ResultRow(label, cc.q, cc.k, rho, N, str(i), "throughput", v, None, "exact") for i, v in enumerate(vals)]
    rows.append(ResultRow(label, cc.q, cc.k, rho, N, "mean", "throughput", float(np.mean(vals)), None, "exact"))
    return rows


def ring_tm_throughput(N: int, L: int, cc: ChannelConfig, rho: float) -> float:
    """Per-link throughput of an ``N``-link ring with sensing range ``L``."""
    if cc.k != 1:
        raise ValueError("tm throughput is an airtime fraction only for k = 1")
    if L == 1:
        unit = transfer.build_unit_space(ContentionGraph(1, frozenset()), cc, rho)
        A = transfer.build_transfer_matrix(unit, [(0, 0)])
    else:
        A = transfer.window_transfer_matrix(L, cc, rho)
    return transfer.throughput_tm(A, N)


def sim_rows(graph: ContentionGraph, label: str, cc: ChannelConfig, rho: float, horizon: float, seed: int,
             metrics: Sequence[str] = ("throughput", "mrat"), countdown: str = "exponential",
             transmission: str = "exponential") -> list[ResultRow]:
    cfg = sim.SimConfig(graph, cc, rho, countdown=countdown, transmission=transmission, horizon=horizon, seed=seed)
    res = sim.simulate(cfg)
    N = graph.n_vertices
    rows = []
    if "throughput" in metrics:
        mean_ci = float(sim.batch_ci90(res.batch_airtime.mean(axis=1)))
        for i, s in enumerate(res.links):
            rows.append(ResultRow(label, cc.q, cc.k, rho, N, str(i), "throughput", s.throughput, s.ci90, "sim"))
        rows.append(ResultRow(label, cc.q, cc.k, rho, N, "mean", "throughput", float(res.throughputs.mean()), mean_ci, "sim"))
    if "mrat" in metrics:
        for i, s in enumerate(res.links):
            note = "" if s.n_samples >= 100 else f"low-confidence: {s.n_samples} samples"
            rows.append(ResultRow(label, cc.q, cc.k, rho, N, str(i), "mrat", s.mrat_estimate, None, "sim", note))
        rows.append(ResultRow(label, cc.q, cc.k, rho, N, "mean", "mrat", float(np.nanmean(res.mrats)), None, "sim"))
    return rows


# --- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """A grid of topologies, channel configs and ``rho`` values.

    ``closed_form`` maps ``(q, k, metric)`` to a formula family; ``tm_L``
    enables transfer-matrix rows for rings with that sensing range.
    ``sim_links`` limits which per-link sim rows are kept (the link-average
    row is always kept).
    """

    name: str
    topologies: tuple[Topology, ...]
    channel_configs: tuple[tuple[int, int], ...]
    rhos: tuple[float, ...]
    modes: tuple[str, ...]
    metrics: tuple[str, ...] = ("throughput",)
    closed_form: dict = field(default_factory=dict)
    tm_L: int | None = None
    sim_links: tuple[str, ...] = ("0",)

    def __post_init__(self) -> None:
        if not self.modes:
            raise ValueError("a sweep needs at least one mode")
        if any(not r > 0 for r in self.rhos):
            raise ValueError("rho grid values must be positive")

    def points(self) -> list[tuple[Topology, ChannelConfig, float]]:
        return [(t, ChannelConfig(q, k), float(r)) for t in self.topologies for q, k in self.channel_configs for r in self.rhos]


_GRID_RHO = (5.0, 10.0, 15.0, 20.0)
_GRID_N = (16, 36, 64)


def _rings(L: int) -> tuple[Topology, ...]:
    return tuple(Topology("ring", (("n", n), ("L", L))) for n in _GRID_N)


def _tori(sides: Sequence[int]) -> tuple[Topology, ...]:
    return tuple(Topology("torus", (("m", s), ("n", s))) for s in sides)


PRESETS: dict[str, SweepSpec] = {
    "fig4": SweepSpec("fig4", _rings(1), ((1, 1), (2, 1)), _GRID_RHO, ("sim", "closed_form", "tm"), ("throughput", "mrat"),
                      {(1, 1, "throughput"): "ring11_inf", (2, 1, "throughput"): "ring21_inf"}, tm_L=1),
    "fig5": SweepSpec("fig5", _rings(2), ((1, 1), (2, 1), (3, 1)), _GRID_RHO, ("sim", "closed_form", "tm"), ("throughput",),
                      {(1, 1, "throughput"): "Lring11_approx", (2, 1, "throughput"): "Lring21", (3, 1, "throughput"): "Lring31"}, tm_L=2),
    "fig6": SweepSpec("fig6", _tori((4, 6, 8)), ((1, 1), (2, 1)), _GRID_RHO, ("sim", "closed_form"), ("throughput",),
                      {(1, 1, "throughput"): "torus11", (2, 1, "throughput"): "torus21"}),
    "fig8": SweepSpec("fig8", _rings(1), ((1, 1), (2, 1)), _GRID_RHO, ("sim", "closed_form"), ("mrat",),
                      {(2, 1, "mrat"): "isolated"}),
    "fig9": SweepSpec("fig9", _rings(2), ((1, 1), (2, 1), (3, 1)), _GRID_RHO, ("sim", "closed_form"), ("mrat",),
                      {(3, 1, "mrat"): "isolated"}),
    "fig10": SweepSpec("fig10", _tori((6,)), ((1, 1),), _GRID_RHO, ("sim", "closed_form"), ("mrat",),
                       {(1, 1, "mrat"): "torus11"}),
    "fig11": SweepSpec("fig11", _tori((6,)), ((2, 1),), _GRID_RHO, ("sim", "closed_form"), ("mrat",),
                       {(2, 1, "mrat"): "torus21"}),
    "trivial": SweepSpec("trivial", (Topology("empty", (("n", 1),)),), ((1, 1),), (1.0,), ("exact", "tm", "closed_form", "sim"),
                         ("throughput",), {(1, 1, "throughput"): "iso_link"}, tm_L=0, sim_links=()),
}


def _point_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1, dtype=np.uint64)[0] >> 1)


def _run_point(spec: SweepSpec, topo: Topology, cc: ChannelConfig, rho: float, horizon: float, seed: int) -> list[ResultRow]:
    label = topo.label
    N = 0
    try:
        g = topo.build()
        N = g.n_vertices
    except Exception as e:  # noqa: BLE001
        return [ResultRow(label, cc.q, cc.k, rho, N, "mean", m, math.nan, None, "-", f"error: {e}") for m in spec.metrics]
    rows: list[ResultRow] = []

    def guard(source: str, metric: str, fn) -> None:
        try:
            rows.extend(fn())
        except Exception as e:  # noqa: BLE001
            rows.append(ResultRow(label, cc.q, cc.k, rho, N, "mean", metric, math.nan, None, source, f"error: {e}"))

    if "sim" in spec.modes:
        def _sim():
            out = sim_rows(g, label, cc, rho, horizon, seed, spec.metrics)
            return [r for r in out if r.link_id == "mean" or r.link_id in spec.sim_links]
        guard("sim", spec.metrics[0], _sim)
    for metric in spec.metrics:
        if "exact" in spec.modes and metric == "throughput":
            guard("exact", metric, lambda: [r for r in exact_rows(g, label, cc, rho) if r.link_id == "mean"])
        if "tm" in spec.modes and metric == "throughput" and spec.tm_L is not None:
            def _tm():
                if spec.tm_L == 0:  # a lone link: 1x1 ring unit with no coupling
                    unit = transfer.build_unit_space(ContentionGraph(1, frozenset()), cc, rho)
                    val = _lone_link_tm(transfer.build_transfer_matrix(unit, []), rho)
                else:
                    val = ring_tm_throughput(N, spec.tm_L, cc, rho)
                return [ResultRow(label, cc.q, cc.k, rho, N, "mean", metric, val, None, "tm")]
            guard("tm", metric, _tm)
        fam = spec.closed_form.get((cc.q, cc.k, metric))
        if "closed_form" in spec.modes and fam:
            def _cf(fam=fam, metric=metric):
                if metric == "mrat":
                    val = mrat.closed_form_mrat(fam, rho)
                else:
                    val = transfer.closed_form_throughput(fam, rho)
                return [ResultRow(label, cc.q, cc.k, rho, N, "mean", metric, val, None, "closed_form", fam)]
            guard("closed_form", metric, _cf)
    return rows


def _lone_link_tm(A: transfer.TransferMatrix, rho: float) -> float:
    h = 1e-6 * rho
    d = (transfer.log_partition_linear(A.at(rho + h), 1) - transfer.log_partition_linear(A.at(rho - h), 1)) / (2 * h)
    return rho * d


def _run_point_star(payload):
    return _run_point(*payload)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, horizon: float = DEFAULT_HORIZON, seed: int = 0, workers: int | None = None) -> list[ResultRow]:
    """Evaluate every grid point.  Failures become rows with an ``error:`` note."""
    payloads = [(spec, t, cc, r, horizon, _point_seed(seed, i)) for i, (t, cc, r) in enumerate(spec.points())]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(payloads) <= 1:
        results = [_run_point_star(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_point_star, payloads))
    rows = [r for chunk in results for r in chunk]
    return sorted(rows, key=ResultRow.sort_key)


# --- argument parsing -------------------------------------------------------------


def _common(p: argparse.ArgumentParser, fmt_default: str = "csv") -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "text"), default=fmt_default)


def _topology_opts(p: argparse.ArgumentParser, positional: bool = False) -> None:
    if positional:
        p.add_argument("topology", choices=("ring", "linear", "torus", "complete", "empty", "star"))
    else:
        p.add_argument("--topology", choices=("ring", "linear", "torus", "complete", "empty", "star"))
        p.add_argument("--graph", help="graph file written by the topology subcommand")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--l", type=int, help="sensing range L for rings and linear networks")
    p.add_argument("--leaves", type=int)


def _channel_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--rho", type=float, required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agilecsma", description="Throughput and access-delay analysis of frequency-agile CSMA networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="write a contention graph file")
    _topology_opts(p, positional=True)
    _common(p)

    p = sub.add_parser("exact", help="per-link throughput by exhaustive enumeration")
    _topology_opts(p)
    _channel_opts(p)
    p.add_argument("--distribution", action="store_true", help="write the stationary law instead")
    _common(p)

    p = sub.add_parser("tm", help="ring throughput from the transfer matrix")
    p.add_argument("--n", type=int, required=True, help="number of links on the ring")
    p.add_argument("--l", type=int, default=1)
    _channel_opts(p)
    _common(p)

    p = sub.add_parser("formula", help="closed-form throughput")
    p.add_argument("--family", required=True, choices=sorted(transfer.FAMILIES))
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--i", type=int, help="link position for linear11_vertex_i")
    _common(p, "text")

    p = sub.add_parser("simulate", help="run the event simulator")
    _topology_opts(p)
    _channel_opts(p)
    p.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    p.add_argument("--warmup", type=float)
    p.add_argument("--countdown", choices=sorted(sim.DISTRIBUTIONS), default="exponential")
    p.add_argument("--transmission", choices=sorted(sim.DISTRIBUTIONS), default="exponential")
    p.add_argument("--trace", help="also write the transmission trace CSV here")
    _common(p)

    p = sub.add_parser("mrat", help="closed-form mean residual access time")
    p.add_argument("--family", required=True, choices=mrat.MRAT_FAMILIES)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--method", choices=("first_step", "rational"), default="first_step")
    _common(p, "text")

    p = sub.add_parser("sweep", help="run a preset grid")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    p.add_argument("--workers", type=int)
    _common(p)
    return ap


def _cmd_topology(args) -> None:
    topo = Topology(args.topology, tuple(_params_for(args.topology, args)))
    g = topo.build()
    if args.out in (None, "-"):
        buf = io.StringIO()
        write_graph(g, buf)
        sys.stdout.write(buf.getvalue())
    else:
        write_graph(g, args.out)


def _cmd_exact(args) -> None:
    g, label, _ = _topology_from_args(args)
    cc = ChannelConfig(args.q, args.k)
    if args.distribution:
        dist = exact.stationary_distribution(g, cc, args.rho)
        buf = io.StringIO()
        exact.write_distribution_csv(dist, buf)
        _emit(buf.getvalue(), args.out)
        return
    write_rows(exact_rows(g, label, cc, args.rho), args.out)


def _cmd_tm(args) -> None:
    cc = ChannelConfig(args.q, args.k)
    val = ring_tm_throughput(args.n, args.l, cc, args.rho)
    write_rows([ResultRow(f"ring_L{args.l}", cc.q, cc.k, args.rho, args.n, "mean", "throughput", val, None, "tm")], args.out)


def _cmd_formula(args) -> None:
    kw = {}
    if args.l is not None:
        kw["L"] = args.l
    if args.i is not None:
        kw["i"] = args.i
    val = transfer.closed_form_throughput(args.family, args.rho, args.n, **kw)
    if args.format == "text":
        _emit(f"{val:.12g}\n", args.out)
    else:
        buf = io.StringIO()
        transfer.write_formula_csv([(args.family, args.rho, args.n, val)], buf)
        _emit(buf.getvalue(), args.out)


def _cmd_simulate(args) -> None:
    g, _, _ = _topology_from_args(args)
    cfg = sim.SimConfig(g, ChannelConfig(args.q, args.k), args.rho, args.countdown, args.transmission,
                        args.horizon, args.warmup, args.seed)
    res = sim.simulate(cfg, record_trace=bool(args.trace))
    if args.trace:
        sim.validate_trace(res.trace, g, args.k)
        sim.write_trace_csv(res.trace, args.trace)
    buf = io.StringIO()
    sim.write_stats_csv(res, buf)
    _emit(buf.getvalue(), args.out)


def _cmd_mrat(args) -> None:
    val = mrat.closed_form_mrat(args.family, args.rho, args.method)
    if args.format == "text":
        _emit(f"{val:.12g}\n", args.out)
    else:
        buf = io.StringIO()
        mrat.write_mrat_csv([(args.family, args.rho, val)], buf)
        _emit(buf.getvalue(), args.out)


def _cmd_sweep(args) -> None:
    rows = run_sweep(PRESETS[args.preset], args.horizon, args.seed, args.workers)
    write_rows(rows, args.out)


COMMANDS = {
    "topology": _cmd_topology, "exact": _cmd_exact, "tm": _cmd_tm, "formula": _cmd_formula,
    "simulate": _cmd_simulate, "mrat": _cmd_mrat, "sweep": _cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError, IndexError) as e:
        print(f"agilecsma {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

import csv
import io
import subprocess
import sys

import pytest

from agilecsma.cli import PRESETS, ResultRow, SweepSpec, Topology, main, ring_tm_throughput, run_sweep
from agilecsma.exact import ChannelConfig
from agilecsma.graph import read_graph


def run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_topology_file(tmp_path, capsys):
    p = tmp_path / "ring.txt"
    rc, _, _ = run(capsys, "topology", "ring", "--n", "16", "--l", "1", "--out", str(p))
    assert rc == 0
    g = read_graph(p)
    assert g.n_vertices == 16 and len(g.edges) == 16


def test_topology_stdout(capsys):
    rc, out, _ = run(capsys, "topology", "torus", "--m", "3", "--n", "3")
    assert rc == 0
    assert out.splitlines()[0] == "9"
    assert len(out.splitlines()) == 19


def test_formula_text(capsys):
    rc, out, _ = run(capsys, "formula", "--family", "ring11_inf", "--rho", "2")
    assert (rc, out) == (0, "0.333333333333\n")


def test_formula_csv(capsys):
    rc, out, _ = run(capsys, "formula", "--family", "ring11_finite", "--rho", "1", "--n", "4", "--format", "csv")
    assert rc == 0
    assert float(rows(out)[0]["throughput"]) == pytest.approx(2 / 7)


def test_mrat_text(capsys):
    rc, out, _ = run(capsys, "mrat", "--family", "center_star", "--rho", "1")
    assert (rc, out) == (0, "20.0980392157\n")


def test_exact_rows(capsys):
    rc, out, _ = run(capsys, "exact", "--topology", "ring", "--n", "4", "--rho", "1")
    assert rc == 0
    r = rows(out)
    assert [x["link_id"] for x in r] == ["0", "1", "2", "3", "mean"]
    assert all(float(x["value"]) == pytest.approx(2 / 7) for x in r)
    assert {x["source"] for x in r} == {"exact"}


def test_exact_from_graph_file(tmp_path, capsys):
    p = tmp_path / "g.txt"
    p.write_text("3\n0 1\n0 2\n1 2\n")
    rc, out, _ = run(capsys, "exact", "--graph", str(p), "--rho", "2", "--q", "2")
    assert rc == 0
    assert len(rows(out)) == 4


def test_exact_distribution(capsys):
    rc, out, _ = run(capsys, "exact", "--topology", "complete", "--n", "3", "--rho", "2", "--distribution")
    assert rc == 0
    assert out.splitlines()[0] == "state_code,n_active,probability"


def test_tm(capsys):
    rc, out, _ = run(capsys, "tm", "--n", "8", "--rho", "2")
    assert rc == 0
    (r,) = rows(out)
    assert (r["source"], r["N"]) == ("tm", "8")
    assert float(r["value"]) == pytest.approx(ring_tm_throughput(8, 1, ChannelConfig(), 2.0))


def test_simulate_with_trace(tmp_path, capsys):
    tr = tmp_path / "trace.csv"
    rc, out, _ = run(capsys, "simulate", "--topology", "ring", "--n", "4", "--rho", "1",
                     "--horizon", "2000", "--trace", str(tr), "--seed", "3")
    assert rc == 0
    stats = rows(out)
    assert len(stats) == 4
    assert all(0 < float(s["throughput"]) < 1 for s in stats)
    assert tr.read_text().splitlines()[0] == "link,channel,start,end"


def test_simulate_is_reproducible(capsys):
    argv = ["simulate", "--topology", "ring", "--n", "6", "--q", "2", "--rho", "3", "--horizon", "3000", "--seed", "7"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert a == b


def test_sweep_trivial(capsys):
    rc, out, _ = run(capsys, "sweep", "--preset", "trivial", "--horizon", "20000")
    assert rc == 0
    r = rows(out)
    assert sorted(x["source"] for x in r) == ["closed_form", "exact", "sim", "tm"]
    for x in r:
        assert float(x["value"]) == pytest.approx(0.5, abs=0.03)


def test_fig4_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "--preset", "fig4", "--horizon", "2000", "--out", str(a), "--seed", "1"]) == 0
    assert main(["sweep", "--preset", "fig4", "--horizon", "2000", "--out", str(b), "--seed", "1", "--workers", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()
    r = rows(a.read_text())
    assert sum(x["source"] == "sim" for x in r) == 96
    assert not any(x["note"].startswith("error") for x in r)


def test_rows_are_sorted():
    out = run_sweep(PRESETS["trivial"], horizon=1000, workers=1)
    keys = [r.sort_key() for r in out]
    assert keys == sorted(keys)


def test_sort_key_numeric_links():
    mk = lambda lid: ResultRow("t", 1, 1, 1.0, 12, lid, "throughput", 0.0)  # noqa: E731
    assert [r.link_id for r in sorted(map(mk, ["mean", "10", "2"]), key=ResultRow.sort_key)] == ["2", "10", "mean"]


def test_sweep_records_errors_as_rows():
    spec = SweepSpec("big", (Topology("ring", (("n", 40),)), Topology("ring", (("n", 4), ("L", 3)))),
                     ((3, 1),), (1.0,), ("exact",))
    out = run_sweep(spec, workers=1)
    assert len(out) == 2
    assert all(r.note.startswith("error:") for r in out)
    assert any("state space too large" in r.note for r in out)


def test_error_exit(capsys):
    rc, _, err = run(capsys, "exact", "--topology", "ring", "--n", "40", "--q", "3", "--rho", "1")
    assert rc == 1
    assert err.startswith("agilecsma exact: error:")
    rc, _, err = run(capsys, "tm", "--n", "8", "--q", "2", "--k", "2", "--rho", "1")
    assert rc == 1


def test_usage_errors():
    with pytest.raises(SystemExit) as e:
        main(["sweep", "--preset", "fig99"])
    assert e.value.code == 2


def test_console_entry():
    p = subprocess.run([sys.executable, "-m", "agilecsma.cli", "formula", "--family", "iso_link", "--rho", "1"],
                       capture_output=True, text=True, check=True)
    assert float(p.stdout) == 0.5

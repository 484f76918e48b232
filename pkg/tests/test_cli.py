import csv
import io
import os

import numpy as np
import pytest

from lotsize.cli import main
from lotsize.experiment import average, run_experiment, summarize
from lotsize.fileio import InstanceFileError, format_instance, load_instance, parse_instance
from lotsize.simulate import optimality_gap
from lotsize.testset import PATTERNS, large_grid, pattern, small_grid

EX1 = """\
# four-period Poisson example
demand = poisson
rates = 20 40 60 40
K = 100
z = 0
h = 1
b = 10
"""

EX2 = """\
name = ex2
demand = poisson
rates = 2 1 5 3
K = 5
z = 0
h = 1
b = 3
qmax = 9
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_load_example(tmp_path):
    inst = load_instance(_write(tmp_path, "ex1.inst", EX1))
    assert inst.name == "ex1"
    assert inst.T == 4
    assert tuple(inst.demand.means) == (20, 40, 60, 40)
    assert (inst.costs.K, inst.costs.b) == (100, 10)


def test_negative_holding_cost_rejected():
    with pytest.raises(InstanceFileError, match="line 6: field 'h'"):
        parse_instance(EX1.replace("h = 1", "h = -1"))


def test_horizon_mismatch_rejected():
    with pytest.raises(InstanceFileError, match="T"):
        parse_instance(EX1.replace("rates = 20 40 60 40", "T = 4\nrates = 1 2 3"))


def test_unknown_field_reports_line():
    with pytest.raises(InstanceFileError, match="line 8: field 'colour'"):
        parse_instance(EX1 + "colour = blue\n")


def test_all_problems_listed():
    with pytest.raises(InstanceFileError) as err:
        parse_instance(EX1.replace("K = 100", "K = y").replace("b = 10", "b = x"))
    assert len(err.value.problems) >= 2


def test_duplicate_and_missing_fields():
    with pytest.raises(InstanceFileError, match="duplicate"):
        parse_instance(EX1 + "K = 3\n")
    with pytest.raises(InstanceFileError, match="'b'"):
        parse_instance(EX1.replace("b = 10\n", ""))


@pytest.mark.parametrize("grid", [small_grid(), large_grid()])
def test_format_round_trip(grid):
    for i, (_, _, inst) in enumerate(grid.cells()):
        if i % 7:
            continue
        back = parse_instance(format_instance(inst))
        assert format_instance(back) == format_instance(inst)
        assert np.array_equal(back.demand.means, inst.demand.means)
        assert back.costs == inst.costs
        assert back.q_max == inst.q_max


def test_empirical_round_trip():
    text = "demand = empirical\npmf.1 = 0.5 0.5\npmf.2 = 0.25 0 0.75\nK = 1\nz = 0\nh = 1\nb = 2\n"
    inst = parse_instance(text)
    assert inst.T == 2
    assert format_instance(parse_instance(format_instance(inst))) == format_instance(inst)


def test_patterns_in_range():
    for name in PATTERNS:
        for T, lo, hi in ((6, 1, 7), (25, 0, 200)):
            v = np.asarray(pattern(name, T, lo, hi))
            assert len(v) == T
            assert np.all(v >= lo - 1e-9) and np.all(v <= hi + 1e-9)
    assert len(set(pattern("STAT", 6, 1, 7))) == 1


def test_gen_small_set(tmp_path, capsys):
    out = str(tmp_path / "small")
    assert main(["gen", "--set", "small", "--out", out]) == 0
    files = sorted(os.listdir(out))
    assert len(files) == 60 == len(small_grid())
    first = load_instance(os.path.join(out, "LCY1_K5_b3_z0.inst"))
    assert (first.costs.K, first.costs.b, first.q_max) == (5, 3, 9)
    stat = load_instance(os.path.join(out, "STAT_K10_b7_z1.inst"))
    assert len(set(stat.demand.means)) == 1
    # a second run refuses to overwrite, unless forced
    assert main(["gen", "--set", "small", "--out", out]) == 2
    assert main(["gen", "--set", "small", "--out", out, "--force"]) == 0


def test_large_set_size():
    assert len(large_grid()) == 540
    assert len(list(large_grid().cells())) == 540


def test_solve_cli(tmp_path, capsys):
    path = _write(tmp_path, "ex1.inst", EX1)
    assert main(["solve", path, "--method", "sQ-SDP"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert [int(r["s"]) for r in rows] == [13, 33, 54, 24]
    assert {int(r["Q"]) for r in rows} == {83}


def test_simulate_explicit_policy(tmp_path, capsys):
    path = _write(tmp_path, "ex2.inst", EX2)
    assert main(["simulate", path, "--s", "1,0,4,1", "--Q", "3,3,8,5", "--runs", "200000"]) == 0
    rec = _rows(capsys.readouterr().out)[0]
    assert abs(float(rec["mean"]) - 22.51) < float(rec["ci_halfwidth"])


def test_invalid_file_exit_code(tmp_path, capsys):
    path = _write(tmp_path, "bad.inst", EX1.replace("h = 1", "h = -1"))
    assert main(["solve", path]) == 2
    assert "field 'h'" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "missing.inst")]) == 2


def test_budget_exit_code(tmp_path, capsys):
    text = "demand = poisson\nrates = 1 1 1 1 1 1 1 1\nK = 4\nz = 0\nh = 1\nb = 5\nqmax = 9\n"
    path = _write(tmp_path, "long.inst", text)
    assert main(["solve", path, "--method", "sQt-SDP"]) == 3
    assert "budget" in capsys.readouterr().err


def _small_cells():
    return [c for i, c in enumerate(small_grid().cells()) if i in (0, 13, 41)]


def test_bench_deterministic(tmp_path, capsys):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        paths = []
        for cid, _, inst in _small_cells():
            p = tmp_path / f"{cid}.inst"
            p.write_text(format_instance(inst))
            paths.append(str(p))
        assert main(["bench", *paths, "--runs", "2000", "--seed", "7", "--out", str(out)]) == 0
        outs.append((out / "results.csv").read_bytes())
        assert (out / "timings.csv").exists()
    assert outs[0] == outs[1]


def test_bench_gaps_recompute(tmp_path, capsys):
    rows = run_experiment(_small_cells(), ["sS-SDP", "sQt-SDP", "sQt-H"], str(tmp_path),
                          runs=2000, seed=3)
    table = _rows((tmp_path / "results.csv").read_text())
    assert len(table) == len(rows) == 9
    for cell in {r["instance"] for r in table}:
        mine = {r["method"]: r for r in table if r["instance"] == cell}
        bench = float(mine["sS-SDP"]["etc"])
        for r in mine.values():
            assert float(r["gap"]) == pytest.approx(optimality_gap(bench, float(r["etc"])))
        # the exact sS benchmark is the best of the exact methods
        assert float(mine["sQt-SDP"]["gap"]) >= -1e-9
    summary = _rows((tmp_path / "summary.csv").read_text())
    overall = next(r for r in summary if r["pivot"] == "all")
    gaps = [float(r["gap"]) for r in table if r["method"] == "sQt-H"]
    assert float(overall["sQt-H"]) == pytest.approx(average(gaps))


def test_summarize_average():
    rows = [{"instance": str(i), "pattern": "P", "K": "5", "b": "3", "z": "0", "rho": "",
             "method": "sQt-H", "gap": repr(g)} for i, g in enumerate((1.0, 2.0, 3.0))]
    out = summarize(rows, ("sQt-H",))
    assert float(out[0]["sQt-H"]) == 2.0
    assert out[0]["n_sQt-H"] == 3


def test_curve_delta_crossing(tmp_path, capsys):
    path = _write(tmp_path, "ex2.inst", EX2)
    assert main(["curve", path, "--kind", "DeltaJ_vs_c", "--q", "3,3,8,5", "--x-range", "-2", "6"]) == 0
    rows = {int(r["x"]): r for r in _rows(capsys.readouterr().out)}
    assert float(rows[0]["DeltaJ"]) > float(rows[0]["c"]) >= float(rows[1]["DeltaJ"])


def test_curve_q_scan(tmp_path, capsys):
    path = _write(tmp_path, "ex1.inst", EX1)
    assert main(["curve", path, "--kind", "Q_scan", "--qmax", "100"]) == 0
    values = [float(r["V"]) for r in _rows(capsys.readouterr().out)]
    assert int(np.argmin(values)) == 83


def test_curve_G(tmp_path, capsys):
    path = _write(tmp_path, "ex1.inst", EX1)
    assert main(["curve", path, "--kind", "G_t", "--x-range", "-5", "5"]) == 0
    rows = {int(r["x"]): float(r["G"]) for r in _rows(capsys.readouterr().out)}
    assert rows[0] == pytest.approx(481, abs=0.5)


def test_curve_needs_range(tmp_path, capsys):
    path = _write(tmp_path, "ex2.inst", EX2)
    assert main(["curve", path, "--kind", "J_vs_Jhat", "--q", "3,3,8,5"]) == 2

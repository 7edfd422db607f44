import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from wpmec.cli import main
from wpmec.config import InstanceConfig
from wpmec.experiments import (COLUMNS, EXPERIMENT_IDS, ExperimentSpec, ResultTable, check_rows, emit_plot,
                               load_spec, preset, run, timing_csv, timing_suite)

GOLDEN = Path(__file__).parent / "golden"


def small_spec(**kw):
    d = dict(experiment="custom", grid={"d_mean": [3.0, 4.0]}, methods=("PI", "NC", "LC"), n_seeds=2,
             base=InstanceConfig(n_devices=4))
    d.update(kw)
    return ExperimentSpec(**d)


# -- spec ----------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(experiment="fig99"), dict(grid={}), dict(grid={"N": []}),
                                dict(methods=()), dict(methods=("XX",)), dict(n_seeds=0),
                                dict(methods=("PM",)),
                                dict(grid={"N": [10]}, methods=("EX",))])
def test_spec_rejects(kw):
    with pytest.raises(ValueError):
        small_spec(**kw)


def test_spec_ex_cap_can_be_raised():
    s = small_spec(grid={"N": [9]}, methods=("EX",), ex_cap=9)
    assert s.ex_cap == 9


def test_spec_roundtrip_yaml_json(tmp_path):
    import yaml
    s = small_spec(seed=4)
    for name, dump in (("s.yaml", yaml.safe_dump), ("s.json", json.dumps)):
        p = tmp_path / name
        p.write_text(dump(s.to_dict()))
        assert load_spec(p) == s


def test_shipped_config_loads():
    s = load_spec(Path(__file__).parents[1] / "configs" / "fig6_small.yaml")
    assert s.points()


@pytest.mark.parametrize("name", EXPERIMENT_IDS[:-1])
def test_presets_valid(name):
    s = preset(name, n_seeds=1)
    assert s.experiment == name and s.n_seeds == 1


# -- running -------------------------------------------------------------------

def test_single_point_single_seed():
    spec = small_spec(grid={"d_mean": [3.0]}, methods=("NC",), n_seeds=1)
    a, b = run(spec), run(spec)
    assert len(a.rows) == 1
    ha = hashlib.sha256(a.to_csv().encode()).hexdigest()
    assert ha == hashlib.sha256(b.to_csv().encode()).hexdigest()


def test_identical_spec_identical_bytes(tmp_path):
    spec1 = small_spec(out=str(tmp_path / "a.csv"))
    spec2 = small_spec(out=str(tmp_path / "b.csv"))
    run(spec1)
    run(spec2)
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    # only the embedded output path differs
    assert a.replace(b"a.csv", b"b.csv") == b


def test_csv_layout():
    t = run(small_spec())
    lines = t.to_csv().splitlines()
    assert lines[0].startswith("# wpmec-results v1 experiment=custom spec=")
    assert lines[1].split(",") == ["d_mean", *COLUMNS]
    assert len(lines) == 2 + 2 * 2 * 3
    # timing stays out of the file unless asked for
    idx = lines[1].split(",").index("solve_ms")
    assert all(l.split(",")[idx] == "" for l in lines[2:])
    timed = t.to_csv(timing=True).splitlines()
    assert all(float(l.split(",")[idx]) >= 0 for l in timed[2:])


def test_rows_are_validated_and_ordered():
    t = run(small_spec(n_seeds=3), strict=True)
    assert not t.failures
    for r in t.rows:
        if r["feasible"]:
            assert r["worst_violation"] <= 1e-8


def test_check_rows_flags_order_break():
    rows = [dict(point=0, seed=0, method="NC", effective_wscr=2.0, feasible=1, worst_violation=0.0),
            dict(point=0, seed=0, method="PI", effective_wscr=1.0, feasible=1, worst_violation=0.0),
            dict(point=0, seed=1, method="PI", effective_wscr=1.0, feasible=1, worst_violation=1e-6)]
    fails = check_rows(rows, [])
    assert len(fails) == 2
    assert any("NC=" in f for f in fails) and any("violation" in f for f in fails)


def test_aggregate_and_series():
    t = run(small_spec(n_seeds=3))
    xs, ys = t.series("PI", "d_mean")
    assert xs == [3.0, 4.0]
    for x, y in zip(xs, ys):
        rs = t.select(method="PI", d_mean=x)
        assert y == pytest.approx(np.mean([r["effective_wscr"] for r in rs]))


def test_pm_rows_carry_grid_m():
    spec = ExperimentSpec("custom", {"m": [0, 1, 2]}, ("PM",), n_seeds=2, base=InstanceConfig(n_devices=4))
    t = run(spec)
    assert [r["m"] for r in t.rows] == [0, 0, 1, 1, 2, 2]


# -- timing --------------------------------------------------------------------

def test_timing_skips_ex_above_cap():
    res = timing_suite([3, 5], methods=("EX", "PI"), n_seeds=1, ex_cap=4)
    assert res["skipped"] == [(5, "EX")]
    assert {(r["N"], r["method"]) for r in res["rows"]} == {(3, "EX"), (3, "PI"), (5, "PI")}
    text = timing_csv(res)
    assert text.splitlines()[1] == "N,method,seed,decision_ms,n_solves,feasible"


def test_timing_counts_solves():
    res = timing_suite([6], methods=("PI", "DL"), n_seeds=2, train_samples=8, repeats=2)
    for r in res["rows"]:
        assert r["n_solves"] == (4 if r["method"] == "PI" else 1)
        assert r["decision_ms"] > 0


# -- plots ---------------------------------------------------------------------

def test_empty_table_plot_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_plot(ResultTable(small_spec(), []), tmp_path / "x.svg")


def test_one_series_one_polyline(tmp_path):
    t = run(small_spec(methods=("NC",)))
    svg = emit_plot(t, tmp_path / "p.svg").read_text()
    assert svg.count('id="line2d_') >= 1
    data_lines = [l for l in svg.split("<g id=\"line2d_") if "clip-path" in l and "stroke-linecap: square" in l]
    assert len(data_lines) == 1


def _golden_table():
    spec = small_spec(methods=("PI", "LC"))
    rows = []
    for pidx, (d, pi, lc) in enumerate([(3.0, 5.0e5, 4.0e4), (4.0, 2.0e5, 2.5e4)]):
        for m, v in (("PI", pi), ("LC", lc)):
            rows.append({"d_mean": d, "point": pidx, "seed": 0, "method": m, "m": 0, "effective_wscr": v,
                         "feasible": 1, "solve_ms": 1.0})
    return ResultTable(spec, rows)


def test_golden_svg(tmp_path):
    out = emit_plot(_golden_table(), tmp_path / "g.svg")
    assert out.read_bytes() == (GOLDEN / "custom_two_series.svg").read_bytes()


# -- command line --------------------------------------------------------------

def test_cli_run_and_plot(tmp_path, capsys):
    spec = tmp_path / "s.yaml"
    spec.write_text("experiment: custom\ngrid: {d_mean: [3.0]}\nmethods: [PI, NC]\nn_seeds: 1\n"
                    "base: {n_devices: 4}\n")
    assert main(["run", str(spec), "--out", str(tmp_path / "res"), "--plot"]) == 0
    assert (tmp_path / "res" / "custom.csv").exists() and (tmp_path / "res" / "custom.svg").exists()
    assert "mean_wscr=" in capsys.readouterr().out


def test_cli_unknown_spec(tmp_path, capsys):
    assert main(["run", "no_such_thing"]) == 2
    assert "preset" in capsys.readouterr().err


def test_cli_ex_above_cap(capsys):
    assert main(["run", "fig9_wscr_vs_N", "--ex-cap", "6", "--n-seeds", "1"]) == 2
    assert "cap" in capsys.readouterr().err


def test_cli_solve_one(capsys):
    assert main(["solve-one", "--N", "4", "--seed", "2", "--methods", "EX,PI,NC,LC,SC"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [l.split()[0] for l in out] == ["EX", "PI", "NC", "LC", "SC"]


def test_cli_train_then_solve(tmp_path, capsys):
    model = tmp_path / "m.txt"
    assert main(["train-dnn", "--N", "4", "--samples", "12", "--epochs", "3", "--out", str(model),
                 "--dataset-out", str(tmp_path / "ds.csv")]) == 0
    assert main(["solve-one", "--N", "4", "--methods", "DL", "--model", str(model)]) == 0
    assert "DL " in capsys.readouterr().out


def test_cli_timing(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["timing", "--N", "4", "--n-seeds", "1", "--methods", "PI", "--repeats", "1",
                 "--out", str(out)]) == 0
    assert out.read_text().startswith("# wpmec-timing v1")

import csv
import json
import os

import pytest

from stitlab import cli
from stitlab.directions import direction_preset
from stitlab.engine import run_construction
from stitlab.io import write_construction_json, write_obj


def test_construction_json_is_byte_identical(tmp_path, unit_window):
    dist = direction_preset("isotropic")
    paths = []
    for k in (1, 2):
        res = run_construction(unit_window, dist, 7.0, seed=909, stream=4)
        path = tmp_path / f"run{k}.json"
        write_construction_json(res, path)
        paths.append(path.read_bytes())
    assert paths[0] == paths[1]
    doc = json.loads(paths[0])
    assert doc["format"] == "stit-construction/1"
    assert doc["n_cells"] == doc["n_polygons"] + 1
    assert len(doc["polygons"]) == doc["n_polygons"]
    side_carriers = {tuple(s["carrier"]) for p in doc["polygons"]
                     for s in p["sides"]}
    assert all(kind in ("window", "polygon") for kind, _ in side_carriers)


def test_obj_export(tmp_path, small_result):
    path = tmp_path / "polys.obj"
    write_obj(small_result, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    n_v = sum(1 for l in lines if l.startswith("v "))
    n_f = sum(1 for l in lines if l.startswith("f "))
    assert n_f == len(small_result.polygons)
    assert n_v == sum(len(p.loop) for p in small_result.polygons)
    # all face indices are in range
    for line in lines:
        if line.startswith("f "):
            idx = [int(tok) for tok in line.split()[1:]]
            assert all(1 <= i <= n_v for i in idx)


def test_cli_tables_csv(tmp_path):
    out = tmp_path / "tables.csv"
    code = cli.main(["tables", "--series-terms", "1000",
                     "--out", str(out), "--format", "csv"])
    assert code == 0
    with open(out) as fh:
        comments = []
        while True:
            pos = fh.tell()
            line = fh.readline()
            if not line.startswith("#"):
                fh.seek(pos)
                break
            comments.append(line)
        rows = list(csv.DictReader(fh))
    assert any("seed" in c for c in comments)
    names = {r["quantity"] for r in rows}
    assert "p_0" in names and "p_T" in names
    p0 = next(r for r in rows if r["quantity"] == "p_0")
    assert float(p0["value"]) == pytest.approx(0.432888625, abs=1e-8)


def test_cli_tables_analytic_failure_exit_code(tmp_path):
    code = cli.main(["tables", "--series-terms", "10"])
    assert code == 2


def test_cli_simulate_deterministic_and_obj(tmp_path):
    base1 = tmp_path / "a"
    base2 = tmp_path / "b"
    args = ["simulate", "--time", "6", "--replicates", "2", "--seed", "77",
            "--export-obj"]
    assert cli.main(args + ["--out", str(base1)]) == 0
    assert cli.main(args + ["--out", str(base2)]) == 0
    for rep in range(2):
        a = (tmp_path / f"a_rep{rep:03d}.json").read_bytes()
        b = (tmp_path / f"b_rep{rep:03d}.json").read_bytes()
        assert a == b
        assert (tmp_path / f"a_rep{rep:03d}.obj").exists()


def test_cli_simulate_time_zero(capsys):
    assert cli.main(["simulate", "--time", "0", "--replicates", "2"]) == 0
    out = capsys.readouterr().out
    assert "1 cells, 0 polygons" in out


def test_cli_simulate_cap_exit_code():
    code = cli.main(["simulate", "--time", "20", "--replicates", "1",
                     "--cell-cap", "40"])
    assert code == 3


def test_cli_requires_exactly_one_time_spec():
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--replicates", "1"])
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--time", "1", "--target-cells", "10",
                  "--replicates", "1"])


def test_cli_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[stitlab]\ntime = 0.0\nreplicates = 3\nseed = 5\n')
    assert cli.main(["simulate", "--config", str(cfg), "--replicates", "2"]) == 0
    out = capsys.readouterr().out
    assert "replicate 1:" in out and "replicate 2:" not in out


def test_cli_sample_segment(tmp_path):
    out = tmp_path / "segments.json"
    code = cli.main(["sample-segment", "--replicates", "1", "--seed", "4",
                     "--time", "1.3", "--out", str(out), "--format", "json"])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["format"] == "stit-tables/1"
    rows = {r["quantity"]: r for r in doc["rows"]}
    assert abs(float(rows["p_L|T"]["empirical"]) - 0.5) < 0.01
    assert abs(float(rows["E[nu_T]"]["empirical"]) - 1.0) < 0.02


def test_cli_compare_smoke(tmp_path, capsys):
    out = tmp_path / "verify.csv"
    code = cli.main(["compare", "--time", "18", "--replicates", "4",
                     "--seed", "123", "--series-terms", "2000",
                     "--jobs", "1", "--out", str(out)])
    assert code in (0, 4)
    text = capsys.readouterr().out
    assert "adjudication: P1 equality-class label assignment" in text
    with open(out) as fh:
        while True:
            pos = fh.tell()
            if not fh.readline().startswith("#"):
                fh.seek(pos)
                break
        rows = list(csv.DictReader(fh))
    names = [r["quantity"] for r in rows]
    assert "eps_V[T]" in names
    assert any(name.startswith("[adjudication]") for name in names)

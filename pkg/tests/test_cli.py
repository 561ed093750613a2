import csv
import json

import numpy as np
import pytest

from modalbw.cli import main, read_dataset, write_dataset
from modalbw.density import Sample
from modalbw.errors import DatasetError


def test_geyser_fixture_shape(geyser):
    assert geyser.n == 299
    assert 40 <= geyser.x.min() and geyser.x.max() <= 110
    assert 0.5 <= geyser.y.min() and geyser.y.max() <= 6


def test_round_trip(tmp_path, rng):
    s = Sample(rng.normal(size=30), rng.normal(size=30) * 1e3)
    write_dataset(s, tmp_path / "d.csv", ("a", "b"))
    back, cols = read_dataset(tmp_path / "d.csv")
    assert back == s and cols == ("a", "b")


def test_columns_and_delimiters(tmp_path):
    (tmp_path / "t.tsv").write_text("id\ty\tx\n1\t2.0\t3.0\n2\t4.0\t5.0\n")
    s, cols = read_dataset(tmp_path / "t.tsv", ("x", "y"))
    assert list(s.x) == [3.0, 5.0] and list(s.y) == [2.0, 4.0]
    (tmp_path / "w.txt").write_text("x y\n1 2\n3 4\n")
    assert read_dataset(tmp_path / "w.txt")[0].n == 2


def test_bad_rows_reported_with_line_numbers(tmp_path):
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n3,nan\n4,five\n5,6\n")
    with pytest.raises(DatasetError, match="line\\(s\\) 3, 4"):
        read_dataset(tmp_path / "bad.csv")
    assert main(["select", str(tmp_path / "bad.csv"), "--method", "reference"]) == 3


def test_exit_codes(tmp_path, capsys):
    assert main(["select", "missing.csv", "--method", "reference"]) == 3
    assert "file not found" in capsys.readouterr().err
    assert main(["select", "geyser", "--method", "nonsense"]) == 2
    assert main(["simulate", "C9"]) == 4
    assert main(["modes", "geyser", "--h1", "-1", "--h2", "0.5"]) == 4
    (tmp_path / "cfg.json").write_text('{"selector": {"L": 0}}')
    assert main(["select", "geyser", "--method", "reference", "--config", str(tmp_path / "cfg.json")]) == 4
    (tmp_path / "broken.json").write_text("{")
    assert main(["select", "geyser", "--method", "reference", "--config", str(tmp_path / "broken.json")]) == 3
    # reference rule needs n >= 10
    (tmp_path / "tiny.csv").write_text("x,y\n1,2\n2,3\n3,5\n")
    assert main(["select", str(tmp_path / "tiny.csv"), "--method", "reference"]) == 4
    # numerical failure: every leave-one-out estimate undefined
    (tmp_path / "far.csv").write_text("x,y\n0,0\n1e6,1\n2e6,2\n")
    cfg = tmp_path / "narrow.json"
    cfg.write_text(json.dumps({"selector": {"search_lo": 1e-6, "search_hi": 1e-6}}))
    assert main(["select", str(tmp_path / "far.csv"), "--method", "cv_density", "--config", str(cfg)]) == 5


def test_select_reference_json(tmp_path):
    assert main(["select", "geyser", "--method", "reference", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "select_reference.json").read_text())
    assert doc["schema_version"] == 1 and doc["method"] == "reference"
    assert set(doc["h"]) == {"h1", "h2"} and "timing" in doc and doc["dataset"]["n"] == 299


def test_select_is_deterministic(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"selector": {"grid_points_per_axis": 5, "refine_rounds": 1, "L": 2}}))
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert main(["select", "geyser", "--method", "boot_density", "--seed", "3",
                     "--config", str(cfg), "--no-timing", "--out", str(d)]) == 0
        outs.append((d / "select_boot_density.json").read_bytes())
    assert outs[0] == outs[1]


def test_modes_rows_and_singleton(tmp_path):
    assert main(["modes", "geyser", "--h1", "2.68", "--h2", "0.6", "--x-grid", "45:100:23", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "modes.csv")))
    assert len(rows) == 23
    counts = [int(r["count"]) for r in rows if r["status"] == "ok"]
    assert counts and 1 <= min(counts) and max(counts) <= 3
    (tmp_path / "one.csv").write_text("x,y\n2.0,7.25\n")
    assert main(["modes", str(tmp_path / "one.csv"), "--h1", "1", "--h2", "1", "--x-grid", "0:4:5",
                 "--out", str(tmp_path / "s")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "modes.csv")))
    assert len(rows) == 5 and all(float(r["mode_1"]) == 7.25 and r["count"] == "1" for r in rows)


def test_modes_marks_failures(tmp_path):
    (tmp_path / "d.csv").write_text("x,y\n0,0\n0.1,1\n")
    assert main(["modes", str(tmp_path / "d.csv"), "--h1", "0.01", "--h2", "1", "--x-grid", "0:1000:2",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "modes.csv")))
    assert rows[0]["status"] == "ok" and rows[1]["status"] == "no kernel support" and rows[1]["count"] == ""


def test_simulate_smoke_and_determinism(tmp_path):
    args = ["simulate", "C1", "--method", "reference", "--replicates", "2", "--n", "100", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    name = "C1_n100_r2_s4_replicates.csv"
    rows = list(csv.DictReader(open(tmp_path / "a" / name)))
    assert len(rows) == 2 and all(r["failed"] == "False" for r in rows)
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    s = "C1_n100_r2_s4_summary.json"
    assert (tmp_path / "a" / s).read_bytes() == (tmp_path / "b" / s).read_bytes()

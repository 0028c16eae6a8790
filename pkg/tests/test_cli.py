import csv
import json

import numpy as np
import pytest

import swingby as sw
from swingby.cli import main


@pytest.fixture(scope="module")
def search_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("search")
    code = main(["search", "--problem", "earth_mars", "--seed", "1",
                 "--max-evals", "3000", "--out-dir", str(out)])
    assert code == 0
    return out


def test_search_writes_artifacts(search_out):
    assert (search_out / "archive.json").is_file()
    assert (search_out / "archive.csv").is_file()
    manifest = json.loads((search_out / "manifest.json").read_text())
    assert manifest["command"] == "search"
    assert manifest["evals_search"] <= 3000 + manifest["params"]["n_pop"]
    assert manifest["seed"] == 1
    assert manifest["best_kms"] > 0
    assert "finished_utc" in manifest


def test_archive_round_trips_objective(search_out):
    payload = json.loads((search_out / "archive.json").read_text())
    prob = sw.load_problem("earth_mars")
    assert payload["count"] == len(payload["entries"]) > 0
    for entry in payload["entries"][:50]:
        f = prob.objective(np.array(entry["y"]))
        assert abs(f - entry["f_kms"]) <= 1e-9


def test_archive_csv_well_formed(search_out):
    with open(search_out / "archive.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    assert header[:3] == ["rank", "dv_total_kms", "t0_mjd2000"]
    assert len(data) > 0
    fs = [float(r[1]) for r in data]
    assert fs == sorted(fs)
    assert all("." in r[1] for r in data)  # locale-free decimal point


def test_search_is_bit_reproducible(tmp_path):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["search", "--problem", "earth_mars", "--seed", "9",
                     "--max-evals", "2000", "--out-dir", str(out)]) == 0
        outs.append((out / "archive.json").read_bytes())
    assert outs[0] == outs[1]


def test_search_rejects_zero_budget(tmp_path, capsys):
    code = main(["search", "--problem", "earth_mars", "--max-evals", "0",
                 "--out-dir", str(tmp_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_search_rejects_missing_problem(tmp_path, capsys):
    code = main(["search", "--problem", "nope.json",
                 "--out-dir", str(tmp_path)])
    assert code == 2


def test_search_reports_invalid_json_line(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text('{\n  "sequence": [3, 4],\n  oops\n}')
    code = main(["search", "--problem", str(bad),
                 "--out-dir", str(tmp_path)])
    assert code == 2
    assert ":3:" in capsys.readouterr().err


def test_grid_command(tmp_path):
    out = tmp_path / "grid.csv"
    code = main(["grid", "--p1", "3", "--p2", "4",
                 "--t0", "7300", "7600", "--tof", "150", "350",
                 "--nt0", "2", "--ntof", "2", "--out", str(out)])
    assert code == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t0_mjd2000", "tof_days", "dv_total_kms"]
    assert len(rows) == 5
    cat = sw.default_catalog()
    t0s, tofs, grid = sw.grid_scan(cat, 3, 4, (7300, 7600), (150, 350),
                                   2, 2)
    for row in rows[1:]:
        t0, tof, val = (float(x) for x in row)
        i = int(np.argmin(np.abs(t0s - t0)))
        j = int(np.argmin(np.abs(tofs - tof)))
        assert val == grid[i, j]


def test_grid_rejects_unknown_body(capsys):
    assert main(["grid", "--p1", "3", "--p2", "99",
                 "--t0", "0", "10", "--tof", "50", "60"]) == 2


def test_characterize_merges_and_dedups(tmp_path):
    out1 = tmp_path / "one"
    code = main(["characterize", "--problem", "earth_mars", "--runs", "1",
                 "--seed", "5", "--max-evals", "2000",
                 "--out-dir", str(out1)])
    assert code == 0
    with open(out1 / "scatter.csv", newline="") as fh:
        rows1 = list(csv.reader(fh))
    assert rows1[0][:3] == ["t0_mjd2000", "dv_total_kms", "sequence"]
    assert len(rows1) > 1

    # two runs from the same seed produce identical minima, which must
    # collapse to the single-run set
    out2 = tmp_path / "two"
    code = main(["characterize", "--problem", "earth_mars", "--runs", "1",
                 "--seed", "5", "--max-evals", "2000",
                 "--out-dir", str(out2)])
    assert code == 0
    with open(out2 / "scatter.csv", newline="") as fh:
        rows2 = list(csv.reader(fh))
    assert rows1 == rows2


def test_baseline_command(tmp_path):
    out = tmp_path / "base"
    code = main(["baseline", "--problem", "earth_mars", "--samples", "40",
                 "--best", "2", "--runs", "2", "--seed", "3",
                 "--max-evals", "2500", "--out-dir", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "baseline"
    assert manifest["evals"] <= 2500
    assert manifest["minima"] <= 4
    payload = json.loads((out / "archive.json").read_text())
    assert payload["count"] >= 1


def test_baseline_validates_best(tmp_path, capsys):
    assert main(["baseline", "--problem", "earth_mars", "--samples", "2",
                 "--best", "5", "--runs", "1",
                 "--out-dir", str(tmp_path)]) == 2

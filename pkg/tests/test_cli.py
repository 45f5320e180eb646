import csv
import io
import json
import pathlib
import subprocess
import sys

import jsonschema
import pytest

from beamnf.cli import main, parse_set
from beamnf.config import THREADS_ENV

SCHEMA = json.loads((pathlib.Path(__file__).parents[1] / "docs" / "report.schema.json").read_text())
EX2 = ["-d", "2", "--set", "(0,1);(1,-1)"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    rep = json.loads(out)
    jsonschema.validate(rep, SCHEMA)
    return rep


def test_parse_set():
    assert parse_set("(0,1);(1,-1)") == [[0, 1], [1, -1]]
    assert parse_set("1;2") == [[1], [2]]
    assert parse_set(" ( 0 , 1 ) ; ") == [[0, 1]]
    for bad in ("(0,1", "(0.5,1)", "(0,1);(1,2,3)", "", "a"):
        with pytest.raises(ValueError):
            parse_set(bad)


def test_analyze_plane_example(capsys):
    rep = report(capsys, "analyze", *EX2, "-m", "1.0", "--rho", "1,1", "--nu", "1e-3")
    res = rep["result"]
    assert res["set"]["M"] == 5 and res["set"]["M_star"] == 4
    hyp = [b for b in res["spectral"]["blocks"] if b["hyperbolic"]]
    assert len(hyp) == 1 and hyp[0]["size"] == 4
    assert hyp[0]["two_site"]["discriminant"] < 0
    assert rep["inputs"]["nu"] == 1e-3 and rep["config"]["type_tol"] == 1e-9
    assert rep["timing"] is None


def test_analyze_line_example(capsys):
    rep = report(capsys, "analyze", "-d", "1", "-m", "1.5", "--set", "1;2", "--rho", "0.5,0.5")
    blocks = rep["result"]["spectral"]["blocks"]
    assert blocks and not any(b["hyperbolic"] for b in blocks)
    assert all(t == "a" for b in blocks for t in b["types"])


def test_analyze_space_example(capsys):
    rep = report(capsys, "analyze", "-d", "3", "-m", "1.0", "--set", "(0,1,0);(1,-1,0)", "--rho", "1,1")
    s = rep["result"]["set"]
    assert s["strongly_admissible"] is False and s["strong_witness"] is not None
    hyp = [b for b in rep["result"]["spectral"]["blocks"] if b["hyperbolic"]]
    assert len(hyp) == 3
    spectra = [sorted(map(tuple, b["eigenvalues"])) for b in hyp]
    for sp in spectra[1:]:
        assert sp == pytest.approx(spectra[0], abs=1e-12)
    assert rep["result"]["spectral"]["certificates"]["D_recipe"] == "admissible"


def test_analyze_without_rho_reports_set_only(capsys):
    rep = report(capsys, "analyze", *EX2)
    assert rep["result"]["normal_form"] is None and rep["result"]["set"]["admissible"]


def test_analyze_non_admissible_set(capsys):
    rep = report(capsys, "analyze", "-d", "2", "--set", "(0,1);(1,0)", "--rho", "1,1")
    assert rep["result"]["set"]["admissible"] is False and rep["result"]["spectral"] is None


def test_analyze_hypothesis_a1(capsys):
    rep = report(capsys, "analyze", *EX2, "--rho", "0.05,1", "--nu", "1e-3", "--a1-cutoff", "20")
    a1 = rep["result"]["hypothesis_a1"]
    assert a1["ok"] and all(v == "inf" or v > 0 for v in a1["margins"].values())


@pytest.mark.parametrize("argv", [
    ["analyze", "-d", "2", "--set", "(0,1", "--rho", "1,1"],
    ["analyze", *EX2, "--rho", "1,1", "--nu", "-1"],
    ["analyze", *EX2, "--rho", "1"],
    ["analyze", *EX2, "--rho", "1,-1"],
    ["analyze", "-d", "3", "--set", "(0,1)"],
    ["analyze", *EX2, "-m", "-1", "--rho", "1,1"],
    ["scan-m", *EX2, "--m-grid", "1:2"],
    ["sample-sets", "-d", "2", "-n", "3", "-R", "10"],
    ["divisors", *EX2, "--kind", "D1", "--k", "1,0,0"],
    ["spheres", "--format", "csv"],
])
def test_invalid_input_exit_code(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == "" and err.startswith("beamnf:")


def test_clustered_spectrum_exit_code(capsys, monkeypatch):
    from beamnf import cli
    from beamnf.spectral import ClusteredSpectrumError

    def boom(*a, **k):
        raise ClusteredSpectrumError("eigenvalues collide")
    monkeypatch.setattr(cli, "symplectic_diagonalize", boom)
    code, out, err = run(capsys, "analyze", *EX2, "--rho", "1,1")
    assert code == 3 and out == "" and "clustered" in err


def test_scan_csv_columns(capsys):
    code, out, _ = run(capsys, "scan-m", *EX2, "--kind", "D2plus", "--m-grid", "1:2:5",
                       "--k-cutoff", "3", "--index-cutoff", "5", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["m", "min_divisor", "kind", "k", "a", "b"]
    assert len(rows) == 6 and all(r[2] == "D2plus" for r in rows[1:])
    assert [float(r[0]) for r in rows[1:]] == [1.0, 1.25, 1.5, 1.75, 2.0]


def test_scan_golden(capsys):
    got = {}
    for kind in ("D0", "D1", "D2plus", "D2minus"):
        got[kind] = report(capsys, "scan-m", *EX2, "--kind", kind)["result"]["bad_fraction"]
    # the only flagged grid mass is m = 2, where 3 ω_(0,1) = λ for |a|² = 25 exactly
    assert got == {"D0": 0.0, "D1": 0.0005, "D2plus": 0.0005, "D2minus": 0.0}


def test_scan_flags_excluded_masses(capsys):
    res = report(capsys, "scan-m", *EX2, "--m-grid", "1:2:4", "--k-cutoff", "2", "--index-cutoff", "3")["result"]
    assert [r["excluded"] for r in res["rows"]] == [False, True, True, False]


def test_divisors(capsys):
    res = report(capsys, "divisors", *EX2)["result"]
    assert res["mode"] == "enumerate"
    assert res["trivial_resonance_counts"] == {"D0": 0, "D1": 6, "D2plus": 36, "D2minus": 805}
    res = report(capsys, "divisors", *EX2, "-m", "1.5", "--kind", "D2minus", "--k", "0,0",
                 "--a", "(2,0)", "--b", "(0,2)")["result"]
    assert res["classification"] == "trivial_resonance" and res["value"] == 0.0


def test_melnikov_golden(capsys):
    res = report(capsys, "melnikov", *EX2, "--rho", "1,1", "--nu", "1e-3")["result"]
    assert res["margin"] == pytest.approx(0.2362813661963914, rel=1e-9)
    assert res["k"] == [0, -1] and res["a"] == [-7, -7] and res["b"] == [-10, 0]


def test_sample_sets(capsys):
    res = report(capsys, "sample-sets", "-d", "2", "-n", "3", "-R", "10,20", "--trials", "4000",
                 "--seed", "1")["result"]
    r10, r20 = res["rows"]
    assert r10["p_admissible"] == r10["p_strongly_admissible"]
    assert r10["ci_method"] == "wilson-95"
    assert "admissible_failure_loglog_slope" in res


def test_spheres(capsys):
    res = report(capsys, "spheres", "-d", "3", "--rmax", "2")["result"]
    assert res["counts"][:4] == [1, 6, 12, 8]
    assert report(capsys, "spheres", "-d", "2", "--rmax", "5")["result"]["counts"][25] == 12


def test_byte_stable_and_round_trip(capsys, tmp_path):
    argv = ["analyze", *EX2, "--rho", "0.4,0.9", "--nu", "1e-3", "--a1-cutoff", "10"]
    first = run(capsys, *argv)[1]
    assert run(capsys, *argv)[1] == first
    path = tmp_path / "rep.json"
    assert main([*argv, "-o", str(path)]) == 0
    assert path.read_text() == first
    again = run(capsys, "analyze", "--from-report", str(path))[1]
    assert again == first
    code, _, err = run(capsys, "melnikov", "--from-report", str(path))
    assert code == 2 and "not 'melnikov'" in err


def test_threads_env_overrides_flag(capsys, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    rep = report(capsys, "sample-sets", "-d", "2", "-n", "2", "-R", "4", "--trials", "2000", "--seed", "5",
                 "--threads", "1", "--timing")
    assert rep["timing"]["threads"] == 3
    monkeypatch.delenv(THREADS_ENV)
    serial = report(capsys, "sample-sets", "-d", "2", "-n", "2", "-R", "4", "--trials", "2000", "--seed", "5")
    assert serial["result"] == rep["result"]


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "beamnf.cli", "spheres", "-d", "1", "--rmax", "2"],
                         capture_output=True, text=True, check=True).stdout
    assert json.loads(out)["result"]["counts"] == [1, 2, 0, 0, 2]

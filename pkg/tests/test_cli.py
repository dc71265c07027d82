import json
import subprocess
import sys

import pytest

from order_density import cli, fixtures

INDEX8 = json.dumps({"ell": 3, "level": 3, "mode": "preimage",
                     "generators": [[[1, 1], [0, 1]], [[-1, 0], [0, 1]]]})
SKIP_SLOW = ["--skip", "index8", "--skip", "normalizer13", "--skip", "cross", "--skip", "empirical"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr()


@pytest.mark.parametrize("ell,d,want", [(7, 0, "14071/16416"), (2, 0, "11/21"), (3, 1, "185/208")])
def test_exact(capsys, ell, d, want):
    code, out = run(capsys, "exact", "--image", "gl2", "--ell", str(ell), "--defect", str(d))
    assert code == 0
    data = json.loads(out.out)
    assert data["value"] == want and data["method"] == "closed" and data["denominator_audit"] is True


def test_exact_scale_and_csv(capsys):
    code, out = run(capsys, "--format", "csv", "exact", "--image", "normnonsplit", "--ell", "2", "--scale", "2")
    assert code == 0
    header, row = out.out.strip().splitlines()
    assert "value" in header.split(",") and row.split(",")[0] == "109/120"


def test_usage_errors(capsys):
    assert run(capsys, "exact", "--image", "borel", "--ell", "3")[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["exact", "--ell", "3"])
    assert exc.value.code == 2
    assert run(capsys, "measure", "--group-spec", "/nonexistent.json")[0] == 2


def test_size_guard_exit(capsys, monkeypatch):
    monkeypatch.setenv("ORDER_DENSITY_SIZE_GUARD", "100")
    spec = json.dumps({"ell": 3, "level": 4, "mode": "full"})
    assert run(capsys, "simulate", "--arboreal-spec", json.dumps({"ell": 3, "level": 4, "image": json.loads(spec)}))[0] == 3


def test_measure_index8(capsys, tmp_path):
    path = tmp_path / "g.json"
    path.write_text(INDEX8)
    code, out = run(capsys, "measure", "--group-spec", str(path))
    assert code == 0
    entries = {(e["a"], e["b"]): e["mu"] for e in json.loads(out.out)["entries"]}
    assert entries[(0, 0)] == "0" and entries[(0, 1)] == "5/9" and entries[(1, 0)] == "8/81"


def test_measure_fit_and_series(capsys):
    code, out = run(capsys, "measure", "--group-spec", INDEX8, "--level", "5", "--fit")
    assert code == 0 and json.loads(out.out)["tail"]["pieces"]
    code, out = run(capsys, "series", "--group-spec", INDEX8, "--defect", "1")
    assert code == 0 and json.loads(out.out)["value"] == "77/104"
    code, out = run(capsys, "series", "--image", "gl2", "--ell", "2", "--level", "6")
    assert json.loads(out.out)["value"] == "11/21"


def test_measure_split_cosets(capsys):
    spec = dict(fixtures.NORMALIZER13_SPEC)
    code, out = run(capsys, "measure", "--group-spec", json.dumps(spec), "--level", "2", "--split-cosets")
    assert code == 0
    data = json.loads(out.out)
    assert set(data) == {"C", "N-C"}


def test_simulate(capsys):
    spec = {"ell": 2, "level": 1, "image": {"mode": "full"}, "kummer": {"mode": "defect", "d": 0}}
    code, out = run(capsys, "simulate", "--arboreal-spec", json.dumps(spec))
    data = json.loads(out.out)
    assert code == 0 and data["value"] == "5/8" and data["method"] == "interval"


def test_empirical(capsys, tmp_path):
    spec = json.dumps({"label": "37.a1", "a": [0, 0, 1, -1, 0], "point": [0, 0]})
    rows = tmp_path / "rows.csv"
    code, out = run(capsys, "empirical", "--curve-spec", spec, "--ell", "2", "--bound", "3000", "--exact", "11/21",
                    "--rows", str(rows))
    data = json.loads(out.out)
    assert code == 0 and data["exact"] == "11/21" and data["primes_used"] > 400
    assert rows.read_text().startswith("p,N,ord,v_ell")


def test_verify_quick(capsys):
    code, out = run(capsys, "verify", *SKIP_SLOW)
    assert code == 0
    assert "FAIL" not in out.out and out.out.strip().endswith("0 failed")


def test_verify_detects_tampering(capsys, monkeypatch):
    tampered = list(fixtures.CLOSED)
    tampered[0] = ("gl2", 2, 0, "11/22")
    monkeypatch.setattr(fixtures, "CLOSED", tampered)
    code, out = run(capsys, "verify", *SKIP_SLOW)
    assert code == 4 and "FAIL  closed gl2 l=2 d=0" in out.out


def test_verify_unknown_suite(capsys):
    with pytest.raises(SystemExit):
        cli.main(["verify", "--skip", "nope"])


def test_deterministic_output(capsys):
    args = ["measure", "--group-spec", INDEX8]
    _, first = run(capsys, *args)
    _, second = run(capsys, *args)
    assert first.out == second.out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "order_density", "exact", "--image", "normsplit", "--ell", "5"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["value"] == "817/1152"

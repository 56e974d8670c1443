import json
import subprocess
import sys

import pytest

from oneshot_qsw.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def ghz_file(tmp_path, capsys):
    path = tmp_path / "ghz.json"
    assert main(["gen", "ghz", "--out", str(path)]) == 0
    capsys.readouterr()
    return path


def test_selftest_quick(capsys):
    code, out, _ = run(capsys, "selftest", "--quick")
    assert code == 0
    rep = json.loads(out)
    assert rep["schema"] == 1 and rep["passed"]


def test_entropy_on_ghz(capsys, ghz_file):
    code, out, _ = run(capsys, "entropy", "--in", str(ghz_file), "--pairs", "R:M,R:N", "--tri", "R:M:N")
    assert code == 0
    rep = json.loads(out)
    assert rep["mutual_information"]["I(R:M)"] == pytest.approx(1.0, abs=1e-9)
    assert rep["mutual_information"]["I(R:N)"] == pytest.approx(1.0, abs=1e-9)
    assert rep["tripartite"]["I(R:M:N)"] == pytest.approx(3.0, abs=1e-9)
    assert all(rep["checks"].values())


def test_region_iid_on_ghz(capsys, ghz_file):
    code, out, _ = run(capsys, "region", "iid", "--in", str(ghz_file))
    assert code == 0
    lines = out.splitlines()
    assert lines[:3] == ["R1,R2,kind", "0.5,1.0,corner", "1.0,0.5,corner"]


def test_region_json(capsys, ghz_file):
    code, out, _ = run(capsys, "region", "iid", "--in", str(ghz_file), "--format", "json")
    assert code == 0 and json.loads(out)["schema"] == 1


def test_usage_errors_exit_two(capsys, tmp_path):
    assert main(["frobnicate"]) == 2
    assert main(["entropy"]) == 2
    code, _, err = run(capsys, "entropy", "--in", str(tmp_path / "missing.json"))
    assert code == 2 and "error: [Errno 2]" in err


def test_region_iid_refuses_charlie_register(capsys, tmp_path):
    path = tmp_path / "s.json"
    assert main(["gen", "haar", "--seed", "1", "--out", str(path)]) == 0
    code, _, err = run(capsys, "region", "iid", "--in", str(path))
    assert code == 2 and "C register" in err


def test_failed_check_exits_one(capsys):
    # a negative slack demands more than any bound can give, so the report fails
    code, out, _ = run(capsys, "convex-split", "--tol", "-2")
    assert code == 1
    assert json.loads(out)["passed"] is False


def test_seed_reproducible_and_env_default(capsys, monkeypatch):
    _, a, _ = run(capsys, "gen", "haar", "--seed", "7")
    _, b, _ = run(capsys, "gen", "haar", "--seed", "7")
    assert a == b
    monkeypatch.setenv("ONESHOT_QSW_SEED", "7")
    _, c, _ = run(capsys, "gen", "haar")
    assert c == a
    _, d, _ = run(capsys, "gen", "haar", "--seed", "8")
    assert d != a


def test_protocol_run_micro_rates(capsys, tmp_path):
    path = tmp_path / "p.json"
    main(["gen", "near_product", "--seed", "3", "--out", str(path)])
    code, out, _ = run(capsys, "protocol", "run", "--in", str(path), "--rates", "1,1,0,0")
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert rep["task1_task2_gap"] <= 1e-8


def test_protocol_without_rates_is_capacity_error(capsys, tmp_path):
    path = tmp_path / "p.json"
    main(["gen", "near_product", "--seed", "3", "--out", str(path)])
    code, _, err = run(capsys, "protocol", "run", "--in", str(path))
    assert code == 2 and "R_A" in err


def test_decode_and_surgery(capsys, ghz_file):
    code, out, _ = run(capsys, "decode", "--seed", "1")
    assert code == 0 and json.loads(out)["passed"]
    code, out, _ = run(capsys, "surgery", "run", "--in", str(ghz_file), "--n", "2", "--delta", "0.3")
    assert code == 0 and json.loads(out)["flags"]["passed"]


def test_second_order_csv(capsys):
    code, out, _ = run(capsys, "surgery", "second-order", "--ns", "4:6")
    assert code == 0
    rows = out.splitlines()
    assert rows[0] == "n,exact,estimate,gap" and [r.split(",")[0] for r in rows[1:]] == ["4", "5", "6"]


def test_output_is_byte_reproducible(capsys, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        main(["convex-split", "--seed", "2", "--out", str(tmp_path / name)])
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "oneshot_qsw", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "oneshot-qsw" in res.stdout

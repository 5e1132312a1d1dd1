import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from spag.cli import main
from spag.data import load_libsvm

SMALL = "synthetic:d=10,N=1000,kind=logistic,decay=0.9"
HEADER = "iter,comm_rounds,gradient_evals,suboptimality,gain,gain_trials,inner_passes,wall_ms"


def _run(tmp_path, *extra, name="out.csv"):
    out = tmp_path / name
    code = main(["run", "--dataset", SMALL, "--lam", "1e-3", "--m", "2", "--n", "200",
                 "--mu", "0.0005", "--max-iters", "10", "--output", str(out), *extra])
    return code, out


def test_run_writes_csv_and_summary(tmp_path):
    code, out = _run(tmp_path)
    assert code == 0
    text = out.read_text()
    assert text.splitlines()[0] == HEADER
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 11 and rows[0]["iter"] == "0"
    assert all(r["wall_ms"] == "" for r in rows)
    summary = json.loads((tmp_path / "out.csv.json").read_text())
    assert summary["iterations"] == 10
    assert summary["total_rounds"] == int(rows[-1]["comm_rounds"])
    assert summary["final_suboptimality"] == float(rows[-1]["suboptimality"])
    assert summary["mu"] == 0.0005
    assert summary["config"]["algorithm"] == "spag"
    assert summary["reference_grad_norm"] <= 1e-12


def test_run_is_byte_deterministic(tmp_path):
    _, a = _run(tmp_path, name="a.csv")
    _, b = _run(tmp_path, name="b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_zero_iterations(tmp_path):
    code = main(["run", "--dataset", SMALL, "--lam", "1e-3", "--mu", "0.01", "--max-iters", "0",
                 "--output", str(tmp_path / "z.csv")])
    assert code == 0
    lines = (tmp_path / "z.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("0,0,0,")


def test_wall_clock_and_target(tmp_path):
    code, out = _run(tmp_path, "--wall-clock", "--target-subopt", "1e-6", "--max-iters", "200",
                     "--summary", str(tmp_path / "s.json"))
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert all(r["wall_ms"] != "" for r in rows)
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["rounds_to_target"] == int(rows[-1]["comm_rounds"])


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# small run\ndataset = {SMALL}\nlam = 1e-3\nmu = 0.0005\n"
                   "algorithm = dane\nmax_iters = 7\nm = 2\nn = 200\n")
    out = tmp_path / "c.csv"
    assert main(["run", "--config", str(cfg), "--max-iters", "3", "--output", str(out)]) == 0
    summary = json.loads((tmp_path / "c.csv.json").read_text())
    assert summary["config"]["algorithm"] == "dane"
    assert summary["iterations"] == 3
    js = tmp_path / "run.json"
    js.write_text(json.dumps({"dataset": SMALL, "lam": 1e-3, "mu": 0.0005, "max_iters": 2}))
    assert main(["run", "--config", str(js), "--output", str(tmp_path / "j.csv")]) == 0


@pytest.mark.parametrize("algo", ["dane", "hb-dane", "agd", "pgd"])
def test_run_other_algorithms(tmp_path, algo):
    code, out = _run(tmp_path, "--algorithm", algo, "--max-iters", "3")
    assert code == 0
    assert len(out.read_text().splitlines()) == 5


def test_auto_mu_records_trials(tmp_path):
    out = tmp_path / "auto.csv"
    code = main(["run", "--dataset", SMALL, "--lam", "1e-3", "--n", "100", "--max-iters", "3",
                 "--max-trials", "3", "--probe-iters", "5", "--output", str(out)])
    assert code == 0
    summary = json.loads((tmp_path / "auto.csv.json").read_text())
    assert summary["mu_trials"] == 3


def test_tune_mu_json(tmp_path):
    out = tmp_path / "mu.json"
    code = main(["tune-mu", "--dataset", SMALL, "--lam", "1e-3", "--n", "100",
                 "--max-trials", "4", "--probe-iters", "5", "--output", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["trace"][0]["mu"] == pytest.approx(0.1 / 100)
    assert len(rep["trace"]) == 4 and "5%" in rep["rule"]
    assert rep["mu"] in [t["mu"] for t in rep["trace"]]


def test_tune_mu_failure_exits_3(tmp_path):
    out = tmp_path / "fail.json"
    code = main(["tune-mu", "--dataset", "synthetic:d=100,N=4000,kind=logistic,decay=0.95",
                 "--lam", "1e-4", "--n", "50", "--max-trials", "1", "--output", str(out)])
    assert code == 3
    rep = json.loads(out.read_text())
    assert "no stable mu" in rep["error"] and len(rep["trace"]) == 1


def test_bounds(tmp_path, capsys):
    assert main(["bounds", "--regime", "hoeffding", "--n", "1000", "--d", "10",
                 "--delta", "0.1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["mu"] == pytest.approx(0.383882, abs=1e-6)
    assert [s["n"] for s in rep["sweep"]] == [1000, 2000, 4000]
    assert rep["sweep"][1]["mu"] == pytest.approx(rep["mu"] / np.sqrt(2))
    assert main(["bounds", "--regime", "all", "-o", str(tmp_path / "b.json")]) == 0
    rep = json.loads((tmp_path / "b.json").read_text())
    assert set(rep) == {"hoeffding", "quadratic", "bounded", "subgaussian"}


def test_verify_concentration(tmp_path):
    out = tmp_path / "v.json"
    code = main(["verify-concentration", "--N", "20000", "--n", "2000", "--draws", "5",
                 "--gap-draws", "5", "-o", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["sandwich_pass_rate"] == 1.0
    assert 0.3 < rep["median_gap_ratio_4n_over_n"] < 0.75
    code = main(["verify-concentration", "--N", "3000", "--full", "--draws", "2",
                 "--gap-draws", "2", "-o", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["sandwich_pass_rate"] == 1.0 and rep["median_gap"]["3000"] <= 1e-14


def test_make_synthetic_roundtrip(tmp_path):
    out = tmp_path / "s.svm"
    assert main(["make-synthetic", "--d", "6", "--N", "40", "--seed", "2", "-o", str(out)]) == 0
    ds = load_libsvm(str(out))
    assert ds.n_examples == 40 and ds.n_features <= 6
    assert set(np.unique(ds.labels)) <= {-1.0, 1.0}
    code = main(["run", "--dataset", str(out), "--lam", "1e-2", "--mu", "0.01", "--m", "2",
                 "--max-iters", "2", "--output", str(tmp_path / "r.csv")])
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["bounds", "--delta", "2"],
    ["bounds", "--n", "0"],
    ["run", "--dataset", SMALL, "--lam", "-1"],
    ["run", "--dataset", SMALL, "--mu", "lots"],
    ["run", "--dataset", "synthetic:d=10,bogus=1"],
    ["run", "--dataset", "/nonexistent/file.svm"],
    ["run", "--config", "/nonexistent/cfg"],
    ["verify-concentration", "--d", "201"],
])
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["-o", str(tmp_path / "x")]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lam = 1e-3\ncolour = blue\n")
    assert main(["run", "--config", str(cfg)]) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["run", "--algorithm", "newton"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "spag", "bounds", "--regime", "quadratic",
                           "--R", "1", "--n", "10"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "not met" in json.loads(proc.stdout)["validity_note"]

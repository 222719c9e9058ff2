import json

import pytest

from circadia import cli
from circadia.dataio import write_cohorts
from circadia.simulate import SimSetting, generate_datasets


@pytest.fixture()
def two_cohort_file(tmp_path):
    c1, c0 = generate_datasets(SimSetting(study="two-cohort", size="small", harmonics="K3"), 1, 0, 2)
    return write_cohorts([c1, c0], tmp_path / "data.csv")


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_fit_order_three_rts(tmp_path, two_cohort_file, capsys):
    out = tmp_path / "fit"
    assert cli.main(["fit", "--input", str(two_cohort_file), "--order", "3", "--method", "rts", "--out", str(out)]) == 0
    rep = _report(out)
    for cid in ("1", "0"):
        m = rep["estimates"][cid]["methods"]
        assert list(m) == ["rts"] and len(m["rts"]["coefficients"]) == 10
    assert rep["provenance"]["order"] == 3 and len(rep["provenance"]["input_sha256"]) == 64
    assert "estimates" in capsys.readouterr().out


def test_test_command_reports(tmp_path, two_cohort_file, capsys):
    out = tmp_path / "test"
    argv = ["test", "--input", str(two_cohort_file), "--order", "1", "--replicates", "19", "--seed", "4", "--out", str(out)]
    assert cli.main(argv) == 0
    tests = _report(out)["tests"]
    names = sorted({(t["test"], t["method"]) for t in tests})
    assert ("equal-rhythms", "rts") in names and ("zero-amplitudes", "sts") in names
    assert all(t["replicates"] == 19 and t["seed"] == 4 for t in tests)


def test_select_command(tmp_path, two_cohort_file):
    out = tmp_path / "sel"
    assert cli.main(["select", "--input", str(two_cohort_file), "--max-order", "2", "--replicates", "19", "--out", str(out)]) == 0
    rep = _report(out)
    assert 0 <= rep["selected_order"] <= 2
    assert rep["selected_order"] == max(t["selected"] for t in rep["selection"])


def test_simulate_writes_curves(tmp_path, capsys):
    out = tmp_path / "sim"
    argv = ["simulate", "--study", "two-cohort", "--setting", "K1,size=small", "--trials", "3",
            "--replicates", "9", "--datasets", "1,3", "--out", str(out)]
    assert cli.main(argv) == 0
    names = sorted(p.name for p in out.iterdir())
    assert "curve_dataset3-rts-equal-rhythms.csv" in names and "report.json" in names
    assert _report(out)["auc"]["dataset1-sts-equal-midlines"]["N"] == 3


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("cohort,subject,time,value\nA,1,0,NA\n")
    assert cli.main(["fit", "--input", str(bad), "--order", "1"]) == 1
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["fit", "--input", str(tmp_path / "missing.csv"), "--order", "1"]) == 1
    with pytest.raises(SystemExit):
        cli.main(["fit", "--input", str(bad)])

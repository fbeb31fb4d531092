import math
import subprocess
import sys
from pathlib import Path

import pytest

from qentropy.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def values(text):
    out = {}
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == 2:
            try:
                out[parts[0]] = float(parts[1])
            except ValueError:
                pass
    return out


def test_critical(capsys):
    code, out, _ = run(capsys, "critical")
    v = values(out)
    assert code == 0
    assert v["chi1_half"] == pytest.approx(6.532952, abs=1e-5)
    assert v["chi2_half"] == 6.75
    assert v["eta1"] == pytest.approx(7.258835, abs=1e-5)
    assert v["eta2"] == pytest.approx(7.5, abs=1e-8)


def test_calibrate(capsys):
    code, out, _ = run(capsys, "calibrate")
    assert code == 0
    assert values(out)["nu"] == pytest.approx(5 / 9, abs=1e-8)


def test_eval_isotropic(capsys):
    code, out, _ = run(capsys, "eval", "--group", "dinf", "--params-file", str(CONFIGS / "zero_dinf.tensor"))
    assert code == 0
    assert values(out)["quasi_entropy"] == pytest.approx(9 * math.log(3), abs=1e-6)


def test_eval_out_of_domain(capsys, tmp_path):
    f = tmp_path / "far.tensor"
    f.write_text("Q: 2; (2,0,0)=2; (0,2,0)=-1; (0,0,2)=-1\n")
    code, out, err = run(capsys, "eval", "--group", "Dinf", "--params-file", str(f))
    assert code == 1
    assert "in_domain false" in out and err.startswith("ERROR:")


def test_eval_bad_file(capsys, tmp_path):
    f = tmp_path / "bad.tensor"
    f.write_text("Q: 2; (2,0)=1\n")
    code, _, err = run(capsys, "eval", "--group", "Dinf", "--params-file", str(f))
    assert code == 2 and err.startswith("ERROR:")


def test_grad_check(capsys):
    code, out, _ = run(capsys, "grad-check", "--group", "d2", "--params-file", str(CONFIGS / "d2_sample.tensor"))
    assert code == 0 and out.strip().endswith("PASS")


def test_census(capsys):
    code, out, _ = run(capsys, "census", "--chi", "14")
    assert code == 0
    assert out.splitlines()[0] == "chi 14 roots 3"
    assert [ln.split()[-1] for ln in out.splitlines()[1:]] == ["minimizer", "maximizer", "minimizer"]


def test_census_bad_chi(capsys):
    code, _, err = run(capsys, "census", "--chi", "-1")
    assert code == 2 and "ERROR" in err


def test_counterexample(capsys):
    code, out, _ = run(capsys, "counterexample", "--a", "0.3333333333333333", "--c", "0.2")
    assert code == 0
    v = values(out)
    assert v["commutator_norm"] >= 0.01
    assert v["euler_lagrange_residual"] <= 1e-10


def test_counterexample_window(capsys):
    code, _, err = run(capsys, "counterexample", "--a", "0.2", "--c", "0.5")
    assert code == 2 and "window violated" in err


def test_minimize(capsys):
    code, out, _ = run(capsys, "minimize", "--model", "rod", "--set", "eta=8", "--n-starts", "4")
    assert code == 0
    assert out.startswith("point 0 ")
    assert "kind minimizer" in out.splitlines()[0]


def test_minimize_bad_override(capsys):
    code, _, err = run(capsys, "minimize", "--model", "rod", "--set", "eta")
    assert code == 2 and err.startswith("ERROR:")


def test_sweep(capsys, tmp_path):
    spec = tmp_path / "s.spec"
    spec.write_text("family = rod\naxis1 = eta 6 8 3\nnu = 0.5555555555555556\nn_starts = 2\n")
    code, out, _ = run(capsys, "sweep", "--spec-file", str(spec), "--out", str(tmp_path / "res"))
    assert code == 0
    assert (tmp_path / "res.csv").read_text().count("\n") == 4
    assert (tmp_path / "res.gp").exists()


def test_oracle_check(capsys):
    code, out, _ = run(capsys, "oracle-check", "--group", "C2", "--n", "5")
    assert code == 0 and out.strip().endswith("PASS")


def test_usage_errors_exit_two(capsys):
    for argv in ([], ["frobnicate"], ["census"], ["eval", "--group", "Dinf"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    assert "ERROR" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "qentropy", "critical"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "chi2_half 6.75" in res.stdout

import csv
import io

import numpy as np
import pytest

from gkpsense.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from gkpsense.config import parse_text
from gkpsense.experiments import HEADERS, run_experiment, threshold_from_rows


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config-hash: ")
    rows = list(csv.DictReader(lines[1:]))
    return lines, rows


GOLDEN = {
    "code-noise": "code,sigma,param,sigma_q,sigma_p",
    "threshold": "code,param,sigma,sigma_q,sigma_p,helps",
    "sensing-sweep": "eta,M,entangled,separable,qec1,qec2,lossless",
    "complex-sensing": "M,n_s,k_prior,delta_q,heisenberg,zeta,mc_delta_q_re,mc_delta_q_im,mc_rms_re,mc_rms_im",
    "channel-check": "check,param,quantity,expected,observed,stderr,z",
}


def test_golden_headers_table():
    assert {k: ",".join(v) for k, v in HEADERS.items()} == GOLDEN


# -- parsing and validation -------------------------------------------------


def test_validate_ok(tmp_path):
    p = write(tmp_path, "a.cfg", "kind = sensing-sweep\nM = 4, 16\neta = 1\n")
    code, out, err = run_cli("validate", "--config", p)
    assert code == EXIT_OK and err == ""
    assert "ok" in out


def test_validate_empty_range(tmp_path):
    p = write(tmp_path, "a.cfg", "kind = sensing-sweep\nM =\neta = 1\n")
    code, _, err = run_cli("validate", "--config", p)
    assert code == EXIT_INVALID
    assert "line 2 [M]: nonempty range required" in err


def test_validate_descending_range_is_empty(tmp_path):
    p = write(tmp_path, "a.cfg", "kind = threshold\ncode = tms\nsigma = 0.7:0.4:0.01\n")
    code, _, err = run_cli("validate", "--config", p)
    assert code == EXIT_INVALID and "nonempty range required" in err


def test_validate_perfect_square(tmp_path):
    p = write(tmp_path, "a.cfg", "kind = complex-sensing\nM = 5\nshots = 10000\nseed = 1\n")
    code, _, err = run_cli("validate", "--config", p)
    assert code == EXIT_INVALID
    assert "[M]: perfect square required" in err


def test_validate_reports_every_problem(tmp_path):
    text = "kind = complex-sensing\nM = 4, 5\nshots = 10\nbogus = 3\nnot a pair\n"
    p = write(tmp_path, "a.cfg", text)
    code, _, err = run_cli("validate", "--config", p)
    assert code == EXIT_INVALID
    for needle in ("line 4 [bogus]: unknown key", "line 5: expected 'key = value'"):
        assert needle in err
    cfg, diags = parse_text(text.replace("bogus = 3\nnot a pair\n", ""))
    msgs = {(d.field, d.message) for d in diags}
    assert ("M", "perfect square required") in msgs
    assert ("shots", "shots must be >= 10000") in msgs
    assert ("seed", "seed required for randomized experiments") in msgs
    assert cfg is None


@pytest.mark.parametrize(
    "text,needle",
    [
        ("M = 4\n", "[kind]: missing required key"),
        ("kind = warp-drive\n", "unknown experiment kind"),
        ("kind = sensing-sweep\nM = 4\neta = 1\neta = 0.5\n", "duplicate key"),
        ("kind = sensing-sweep\nM = 4.5\neta = 1\n", "[M]: expected an integer"),
        ("kind = sensing-sweep\nM = 4\neta = 1.5\n", "[eta]: values must lie in (0, 1]"),
        ("kind = sensing-sweep\nM = 4\neta = 1\ncode = tms\n", "[code]: not a setting of sensing-sweep"),
        ("kind = sensing-sweep\nM = 4\n", "[eta]: missing required key"),
        ("kind = threshold\ncode = steane\nsigma = 0.1\n", "[code]: code must be"),
        ("kind = threshold\ncode = tms\nsigma = 0.1:0.2\n", "range must be start:stop:step"),
    ],
)
def test_validation_messages(tmp_path, text, needle):
    p = write(tmp_path, "a.cfg", text)
    code, _, err = run_cli("validate", "--config", p)
    assert code == EXIT_INVALID
    assert needle in err


def test_seed_from_command_line(tmp_path):
    p = write(tmp_path, "a.cfg", "kind = channel-check\nshots = 10000\n")
    assert run_cli("validate", "--config", p)[0] == EXIT_INVALID
    assert run_cli("validate", "--config", p, "--seed", 5)[0] == EXIT_OK


def test_missing_config_and_bad_args(tmp_path):
    assert run_cli("validate", "--config", tmp_path / "nope.cfg")[0] == EXIT_INVALID
    assert run_cli("frobnicate")[0] == EXIT_INVALID
    assert run_cli("run", "--config", tmp_path / "x", "--seed", -1)[0] == EXIT_INVALID


def test_range_parsing_inclusive():
    cfg, diags = parse_text("kind = threshold\ncode = tms\nsigma = 0.40:0.70:0.01\n")
    assert not diags
    s = cfg["sigma"]
    assert len(s) == 31 and s[0] == 0.4 and s[-1] == 0.7


# -- running ----------------------------------------------------------------


def test_threshold_run(tmp_path):
    p = write(tmp_path, "t.cfg", "kind = threshold\ncode = tms\nsigma = 0.40:0.70:0.01\n")
    code, out, _ = run_cli("run", "--config", p, "--out", tmp_path / "o")
    assert code == EXIT_OK
    lines, rows = read_csv(tmp_path / "o" / "threshold.csv")
    assert lines[1] == GOLDEN["threshold"]
    helping = [float(r["sigma"]) for r in rows if r["helps"] == "1"]
    assert max(helping) in (0.55, 0.56)
    assert "threshold[tms] = 0.5" in out


def test_sensing_sweep_slope(tmp_path):
    p = write(tmp_path, "s.cfg", "kind = sensing-sweep\nM = 256, 4, 64, 16\neta = 1\n")
    assert run_cli("run", "--config", p, "--out", tmp_path)[0] == EXIT_OK
    lines, rows = read_csv(tmp_path / "sensing-sweep.csv")
    assert lines[1] == GOLDEN["sensing-sweep"]
    Ms = [int(r["M"]) for r in rows]
    assert Ms == sorted(Ms)
    slope = np.polyfit(np.log(Ms), np.log([float(r["entangled"]) for r in rows]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_same_seed_byte_identical(tmp_path):
    text = "kind = channel-check\nshots = 10000\neta = 0.9, 0.5\nk = 2\nseed = 11\n"
    p = write(tmp_path, "c.cfg", text)
    assert run_cli("run", "--config", p, "--out", tmp_path / "a")[0] == EXIT_OK
    assert run_cli("run", "--config", p, "--out", tmp_path / "b")[0] == EXIT_OK
    a = (tmp_path / "a" / "channel-check.csv").read_bytes()
    b = (tmp_path / "b" / "channel-check.csv").read_bytes()
    assert a == b
    assert run_cli("run", "--config", p, "--out", tmp_path / "c", "--seed", 12)[0] == EXIT_OK
    c = (tmp_path / "c" / "channel-check.csv").read_bytes()
    assert c != a
    assert a.splitlines()[0] != c.splitlines()[0]  # seed is part of the config hash


def test_channel_check_rows_pass(tmp_path):
    cfg, _ = parse_text("kind = channel-check\nshots = 100000\neta = 0.7, 0.8, 0.9, 0.99\nk = 2, 0.5\nseed = 3\n")
    rows, text = run_experiment(cfg)
    assert text.splitlines()[1] == GOLDEN["channel-check"]
    assert len(rows) == 6 * 4
    assert all(abs(r[-1]) < 4 for r in rows)


def test_code_noise_pdf_and_mc(tmp_path):
    cfg, d = parse_text("kind = code-noise\ncode = tms\nsigma = 0.1, 0.3\ngain = 2\nseed = 1\n")
    rows, text = run_experiment(cfg)
    assert text.splitlines()[1] == GOLDEN["code-noise"]
    assert rows[0][3] == pytest.approx(0.1 / np.sqrt(3), rel=1e-3)
    cfg, d = parse_text("kind = code-noise\ncode = tms\nsigma = 0.1\ngain = 2\nmethod = mc\nshots = 100000\nseed = 1\n")
    rows, _ = run_experiment(cfg)
    assert rows[0][3] == pytest.approx(0.1 / np.sqrt(3), rel=0.02)
    cfg, d = parse_text("kind = code-noise\ncode = tms\nsigma = 0.1\nmethod = mc\nseed = 1\n")
    assert any(x.field == "shots" for x in d)


def test_code_noise_stabilizer(tmp_path):
    cfg, _ = parse_text("kind = code-noise\ncode = stabilizer\nsigma = 0.001\nlam = 2.05\nlevels = 3\nseed = 1\n")
    rows, _ = run_experiment(cfg)
    assert rows[0][2] == 2.05
    assert rows[0][4] == pytest.approx(2.05**-2 * 1e-3, rel=0.01)


def test_complex_sensing_run(tmp_path):
    p = write(tmp_path, "c.cfg", "kind = complex-sensing\nM = 16, 4\nn_s = 4\nshots = 20000\n")
    code, _, _ = run_cli("run", "--config", p, "--out", tmp_path, "--seed", 9)
    assert code == EXIT_OK
    lines, rows = read_csv(tmp_path / "complex-sensing.csv")
    assert lines[1] == GOLDEN["complex-sensing"]
    assert [int(r["M"]) for r in rows] == [4, 16]
    for r in rows:
        assert float(r["delta_q"]) == pytest.approx(float(r["heisenberg"]), rel=0.25)


def test_runtime_error_exit(tmp_path, monkeypatch):
    import gkpsense.cli as cli_mod

    def boom(cfg, out_dir=None):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli_mod, "run_experiment", boom)
    p = write(tmp_path, "a.cfg", "kind = sensing-sweep\nM = 4\neta = 1\n")
    code, _, err = run_cli("run", "--config", p, "--out", tmp_path)
    assert code == EXIT_RUNTIME and "boom" in err


def test_independent_sequential_runs():
    a, _ = parse_text("kind = channel-check\nshots = 10000\neta = 0.9\nk = 2\nseed = 4\n")
    b, _ = parse_text("kind = sensing-sweep\nM = 4\neta = 1\n")
    first = run_experiment(a)[1]
    run_experiment(b)
    assert run_experiment(a)[1] == first


def test_threshold_from_rows():
    rows = [("stabilizer", 1.5, 0.1, 0.01, 0.01, True), ("stabilizer", 1.5, 0.2, 0.3, 0.3, False), ("stabilizer", 2.0, 0.1, 0.2, 0.2, False)]
    assert threshold_from_rows(rows) == {1.5: 0.1, 2.0: None}

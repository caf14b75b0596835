import csv
import json

import pytest

from gpal.cli import derive_seed, main, splitmix64, summarize, verify
from gpal.activelearn import Criterion
from gpal.simulators import Study


def test_splitmix64_reference_values():
    # First outputs of the reference generator seeded with 0.
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_derived_seeds_differ_per_component():
    base = derive_seed(1, Study.ODE_LINEAR, 0, Criterion.ACDS, 0)
    others = {
        derive_seed(2, Study.ODE_LINEAR, 0, Criterion.ACDS, 0),
        derive_seed(1, Study.BURGERS, 0, Criterion.ACDS, 0),
        derive_seed(1, Study.ODE_LINEAR, 1, Criterion.ACDS, 0),
        derive_seed(1, Study.ODE_LINEAR, 0, Criterion.MAXIMIN_ONLY, 0),
        derive_seed(1, Study.ODE_LINEAR, 0, Criterion.ACDS, 1),
    }
    assert base not in others and len(others) == 5
    assert 0 <= base < 2**64


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--study", "ODE_LINEAR", "--sigma2", "0", "--criterion", "ACDS", "MAXIMIN_ONLY",
                 "--reps", "1", "--seed", "5", "--out", str(out), *extra])
    return code, out


def test_run_writes_outputs_and_recovers_noiseless(tmp_path):
    code, out = _run(tmp_path, "a")
    assert code == 0
    with open(out / "runs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["study", "sigma2", "criterion", "replication", "seed", "gamma", "l2_beta",
                             "n_total", "converged", "iterations", "status"]
    acds = next(r for r in rows if r["criterion"] == "ACDS")
    assert acds["gamma"] == "0" and float(acds["l2_beta"]) <= 1e-3
    rec = json.loads((out / "runs" / "ODE_LINEAR_s0_ACDS_r0.json").read_text())
    assert rec["schema_version"] == 1 and rec["record"]["status"] == "ok"
    assert verify(out)
    assert main(["verify", str(out)]) == 0


def test_same_seed_gives_identical_csv(tmp_path):
    _, a = _run(tmp_path, "a")
    _, b = _run(tmp_path, "b", "--parallel", "2")
    assert (a / "runs.csv").read_bytes() == (b / "runs.csv").read_bytes()
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()


def test_config_file_and_env_override(tmp_path, monkeypatch):
    cfg = tmp_path / "study.ini"
    cfg.write_text("[study]\nname = ODE_LINEAR\nsigma2 = 0.0\ncriteria = MAXIMIN_ONLY\nreplications = 2\n"
                   "seed = 9\n\n[run]\nfixed_n = 32\n")
    monkeypatch.setenv("GPAL_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == 0
    with open(tmp_path / "env" / "runs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["n_total"] for r in rows] == ["32", "32"]


def test_tampered_summary_fails_verification(tmp_path):
    _, out = _run(tmp_path, "a")
    text = (out / "summary.csv").read_text().splitlines()
    cells = text[1].split(",")
    cells[4] = "9.0"
    (out / "summary.csv").write_text("\n".join([text[0], ",".join(cells), *text[2:]]) + "\n")
    assert not verify(out)
    assert main(["verify", str(out)]) == 2


@pytest.mark.parametrize("argv", [
    ["run", "--study", "NOPE"],
    ["run", "--study", "ODE_LINEAR", "--reps", "0", "--out", "x"],
    ["run", "--study", "ODE_LINEAR", "--sigma2", "-1", "--out", "x"],
    ["run", "/nonexistent/config.ini"],
])
def test_config_errors_exit_one(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_bad_run_option_in_config(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[study]\nname = BASS\n\n[run]\nwobble = 3\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_excessive_aborts_exit_two(tmp_path, monkeypatch):
    import gpal.cli as cli

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(cli, "run_case_study", boom)
    code, out = _run(tmp_path, "a")
    assert code == 2
    with open(out / "runs.csv") as fh:
        assert {r["status"] for r in csv.DictReader(fh)} == {"aborted"}


def test_summarize_statistics():
    rows = [
        {"study": "S", "sigma2": "0.1", "criterion": "ACDS", "gamma": g, "l2_beta": l, "n_total": n, "status": "ok"}
        for g, l, n in [(0, 0.1, 10), (2, 0.3, 30)]
    ]
    (s,) = summarize(rows)
    assert s["runs"] == 2
    assert float(s["gamma_mean"]) == 1.0 and float(s["l2_beta_mean"]) == pytest.approx(0.2)
    assert float(s["n_total_std"]) == pytest.approx(14.142135623730951)

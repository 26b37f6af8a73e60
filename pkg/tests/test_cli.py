import json

import pytest

from bangcross import cli


def run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_run_bundled(tmp_path, capsys):
    code, out = run(["run", "massless_smoke", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "reference_error" in out.out
    assert (tmp_path / "summary.csv").exists()


def test_run_with_override_and_seed(tmp_path, capsys):
    code, _ = run(["run", "desitter_to_powerlaw", "--out", str(tmp_path), "--seed", "3",
                   "--set", "solver.nodes=12", "--threads", "2"], capsys)
    assert code == 0
    text = (tmp_path / "summary.csv").read_text()
    assert "seed=3" in text


def test_env_overrides(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BANGCROSS_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("BANGCROSS_SEED", "11")
    code, _ = run(["run", "massless_smoke"], capsys)
    assert code == 0
    assert "seed=11" in (tmp_path / "env" / "summary.csv").read_text()
    # command line beats environment
    code, _ = run(["run", "massless_smoke", "--out", str(tmp_path / "cli")], capsys)
    assert (tmp_path / "cli" / "summary.csv").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "b"\n[solver]\nratio = 3.0\n')
    code, out = run(["run", str(bad), "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert "solver.ratio" in out.err and "line 3" in out.err
    assert not (tmp_path / "o").exists()
    code, out = run(["run", "massless_smoke", "--set", "nonsense"], capsys)
    assert code == 2


def test_numerical_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "n.toml"
    cfg.write_text('name = "n"\n[hat]\nq = { family = "c2_over_tau", c2 = 1.0 }\n'
                   '[check]\nq = { family = "c2_over_tau", c2 = 1.0 }\n[transmission]\neps = 1e-300\n')
    code, out = run(["run", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 3 and "riccati" in out.err
    assert not (tmp_path / "o").exists()


def test_verify_subset_and_json(tmp_path, capsys):
    report = tmp_path / "r.json"
    code, out = run(["verify", "--only", "10", "--only", "1", "--json", str(report)], capsys)
    assert code == 0
    assert "[PASS] criterion  1" in out.out and "2/2 checks passed" in out.out
    rows = json.loads(report.read_text())
    assert [r["id"] for r in rows] == [1, 10]


def test_verify_failure_exit_code(capsys):
    code, out = run(["verify", "--only", "10", "--tol", "c10.reciprocal=1e-300"], capsys)
    assert code == 1 and "[FAIL]" in out.out
    code, out = run(["verify", "--only", "10", "--tol", "c10.bogus=1"], capsys)
    assert code == 2


def test_verify_tag_from_env(capsys, monkeypatch):
    monkeypatch.setenv("BANGCROSS_TAG", "profiles")
    code, out = run(["verify"], capsys)
    assert code == 0 and "1/1 checks passed" in out.out


def test_converge(tmp_path, capsys):
    code, out = run(["converge", "frobenius", "frobenius.N=6,10,20", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "frobenius.N" in out.out
    assert (tmp_path / "convergence.csv").read_bytes().count(b"\r\n") >= 4


def test_oracle(tmp_path, capsys):
    code, out = run(["oracle", "frobenius", "--out", str(tmp_path)], capsys)
    assert code == 0 and "delta" in out.out
    assert (tmp_path / "oracle.csv").exists()
    code, out = run(["oracle", "massless_smoke", "--out", str(tmp_path / "x")], capsys)
    assert code == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "bangcross" in capsys.readouterr().out

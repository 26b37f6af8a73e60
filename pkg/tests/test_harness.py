import numpy as np
import pytest

from bangcross import config, harness, io
from bangcross.config import ConfigError

BASE = '''
name = "t"
[spectrum]
kind = "flat_torus"
periods = [6.283185307179586, 6.283185307179586, 6.283185307179586]
cutoff = 2.0
[hat]
q = { family = "c2_over_tau", c2 = 0.25 }
[check]
q = { family = "c2_over_tau", c2 = 1.0 }
[transmission]
tau_minus = -1.0
tau_plus = 1.0
'''


def files_bytes(paths):
    return {p.name: p.read_bytes() for p in paths}


def test_massless_smoke_matches_free_wave():
    r = harness.run_scenario(config.bundled("massless_smoke"))
    assert r.summary["reference_error"] <= 1e-8


def test_frobenius_scenario_matches_oracle(tmp_path):
    r = harness.run_scenario(config.bundled("frobenius"), tmp_path)
    assert r.summary["max_rel_error"] <= 1e-4
    meta, header, rows = io.read_csv(tmp_path / "oracle.csv")
    assert meta["series_order"] == "20" and meta["gauge"] == "int_0"
    assert len(rows) == 2 and all(float(row[header.index("rel_error")]) <= 1e-4 for row in rows)


@pytest.mark.parametrize("name", ["desitter_to_powerlaw", "frobenius"])
def test_reruns_are_byte_identical(name, tmp_path):
    a = harness.run_scenario(config.bundled(name), tmp_path / "a")
    b = harness.run_scenario(config.bundled(name), tmp_path / "b")
    assert files_bytes(a.written) == files_bytes(b.written)
    assert len(a.written) >= 2


def test_semilinear_rerun_byte_identical(tmp_path):
    outs = []
    for d in ("a", "b"):
        sc = config.bundled("semilinear_crossing")
        config.set_dotted(sc, "semilinear.N", 8)
        outs.append(files_bytes(harness.run_scenario(sc, tmp_path / d).written))
    assert outs[0] == outs[1]
    meta, arr = io.read_field(tmp_path / "a" / "phi_out.bin")
    assert arr.shape == (8, 8, 8) and meta["N"] == "8"


def test_seed_changes_data_and_metadata(tmp_path):
    sc = config.bundled("desitter_to_powerlaw")
    a = harness.run_scenario(sc, seed=1)
    b = harness.run_scenario(sc, seed=2)
    assert a.outputs.files["data_in.csv"] != b.outputs.files["data_in.csv"]
    assert b"seed=2" in b.outputs.files["summary.csv"]


def test_delta_recorded():
    sc = config.bundled("desitter_to_powerlaw")
    r = harness.run_scenario(sc)
    assert r.summary["delta"] == pytest.approx(sc.transmission.alpha_hat - sc.transmission.alpha_check,
                                               abs=1e-8)
    assert "riccati_hat.csv" in r.outputs.files


def test_malformed_config_writes_nothing(tmp_path):
    with pytest.raises(ConfigError):
        sc = config.parse(BASE + "path = \"simple\"\n")
        harness.run_scenario(sc, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_numerical_failure_writes_nothing(tmp_path):
    sc = config.parse(BASE + "eps = 1e-300\n")
    with pytest.raises(harness.RunError) as exc:
        harness.run_scenario(sc, tmp_path / "out")
    assert exc.value.module == "riccati"
    assert not (tmp_path / "out").exists()


def test_source_rows_must_match_modes():
    src = '\n[hat.source]\nkind = "tabulated"\ntaus = [-1.0, -0.5]\nvalues = [[1.0, 0.0]]\n'
    text = BASE.replace("[check]", src + "[check]")
    with pytest.raises(ConfigError) as exc:
        harness.run_scenario(config.parse(text))
    assert exc.value.path == "hat.source.values"


def test_source_table_drives_the_run():
    sc = config.parse(BASE)
    spec, modes, _ = harness.build_transmission(sc)
    n = len(modes)
    rows = ", ".join("[0.5, 0.5]" for _ in range(n))
    src = f'\n[hat.source]\nkind = "tabulated"\ntaus = [-1.0, -0.5]\nvalues = [{rows}]\n'
    with_src = harness.run_scenario(config.parse(BASE.replace("[check]", src + "[check]")))
    plain = harness.run_scenario(sc)
    assert not np.allclose(with_src.summary["_vector"], plain.summary["_vector"])


def test_de_sitter_only_on_hat():
    text = BASE.replace('[check]\n', '[check]\nomega = { family = "de_sitter", H = 1.0 }\n')
    with pytest.raises(ConfigError) as exc:
        harness.run_scenario(config.parse(text))
    assert exc.value.path == "check.omega"


def test_mode_data_and_bad_index():
    sc = config.parse(BASE + '[data]\nkind = "mode"\nmode = 1\n')
    r = harness.run_scenario(sc)
    assert np.count_nonzero(r.summary["_vector"]) == 2
    bad = config.parse(BASE + '[data]\nkind = "mode"\nmode = 999\n')
    with pytest.raises(ConfigError):
        harness.run_scenario(bad)


def test_parse_ladder():
    assert harness.parse_ladder("frobenius.N=10,20") == ("frobenius.N", [10, 20])
    for bad in ("frobenius.N", "frobenius.N=10", "x=1,abc"):
        with pytest.raises(ConfigError):
            harness.parse_ladder(bad)


def test_frobenius_order_ladder_non_increasing():
    sc = config.bundled("frobenius")
    config.set_dotted(sc, "frobenius.h", 0.4)
    key, rows = harness.convergence_study(sc, "frobenius.N=6,10,20,40")
    errs = [r.error for r in rows]
    assert all(b <= a * 1.5 for a, b in zip(errs, errs[1:]))
    assert errs[0] > 1e3 * errs[2]
    text = harness.convergence_csv(sc, key, rows)
    assert text.count("\r\n") >= 5


def test_nodes_ladder_monotone():
    key, rows = harness.convergence_study(config.bundled("desitter_to_powerlaw"), "solver.nodes=4,6,8,12")
    errs = [r.error for r in rows[:-1]]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_threads_do_not_change_outputs_beyond_roundoff():
    sc = config.bundled("desitter_to_powerlaw")
    a = harness.run_scenario(sc, threads=1).summary["_vector"]
    b = harness.run_scenario(sc, threads=4).summary["_vector"]
    assert np.allclose(a, b, rtol=0, atol=1e-10)

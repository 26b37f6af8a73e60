import pytest

from bangcross import config as C

MIN = 'name = "x"\n'


def test_bundled_scenarios_parse():
    for name in ("desitter_to_powerlaw", "massless_smoke", "frobenius", "semilinear_crossing"):
        sc = C.bundled(name)
        assert sc.name == name
        assert len(sc.digest) == 64


def test_load_by_stem_and_missing():
    assert C.load("massless_smoke").name == "massless_smoke"
    with pytest.raises(C.ConfigError):
        C.load("/nonexistent/nothing_here.toml")


def test_defaults():
    sc = C.parse(MIN)
    assert sc.kind == "linear" and sc.transmission.path == "riccati"
    assert sc.solver.nodes == 20 and sc.cutoff == 5.0


def test_delta_shorthand():
    sc = C.parse(MIN + "[transmission]\ndelta = 0.3\n")
    assert (sc.transmission.alpha_hat, sc.transmission.alpha_check) == (0.3, 0.0)
    with pytest.raises(C.ConfigError):
        C.parse(MIN + "[transmission]\ndelta = 0.3\nalpha_hat = 1.0\n")


@pytest.mark.parametrize("text,path", [
    ('kind = "linear"\n', "name"),
    (MIN + 'kind = "quantum"\n', "kind"),
    (MIN + "bogus = 1\n", "bogus"),
    (MIN + "[transmission]\ntau_minus = 0.5\n", "transmission.tau_minus"),
    (MIN + "[transmission]\ntau_plus = -1\n", "transmission.tau_plus"),
    (MIN + '[transmission]\npath = "simple"\nalpha_hat = 1.0\n', "transmission.path"),
    (MIN + "[solver]\nratio = 1.5\n", "solver.ratio"),
    (MIN + "[solver]\nnodes = 2.5\n", "solver.nodes"),
    (MIN + '[solver]\nrtol = "small"\n', "solver.rtol"),
    (MIN + "[semilinear]\nN = 12\n", "semilinear.N"),
    (MIN + "[semilinear]\nkappa = -1\n", "semilinear.kappa"),
    (MIN + "[frobenius]\nh = 0.7\n", "frobenius.h"),
    (MIN + "[spectrum]\nkind = \"flat_torus\"\nperiods = [1, -2]\n", "spectrum.periods"),
    (MIN + "seed = -3\n", "seed"),
])
def test_validation_errors_name_the_field(text, path):
    with pytest.raises(C.ConfigError) as exc:
        C.parse(text)
    assert exc.value.path == path
    assert path in str(exc.value)


def test_error_carries_line_and_column():
    text = MIN + "\n[solver]\nrtol = 1e-10\nratio = 2.0\n"
    with pytest.raises(C.ConfigError) as exc:
        C.parse(text)
    assert exc.value.line == 5


def test_syntax_error_location():
    with pytest.raises(C.ConfigError) as exc:
        C.parse(MIN + "[solver\n")
    assert exc.value.line == 2


def test_set_dotted_and_digest():
    sc = C.bundled("frobenius")
    d0 = sc.digest
    C.set_dotted(sc, "frobenius.N", 10)
    assert sc.frobenius.N == 10 and sc.digest != d0
    C.set_dotted(sc, "solver.rtol", 1)
    assert isinstance(sc.solver.rtol, float)
    with pytest.raises(C.ConfigError):
        C.set_dotted(sc, "solver.nothing", 1)
    with pytest.raises(C.ConfigError):
        C.set_dotted(sc, "frobenius.N", 2.5)

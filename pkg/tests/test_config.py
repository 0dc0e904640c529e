import pytest

from starhjb.config import ConfigError, ProblemConfig, parse_config, serialize_config

BASE = """\
# u + |u'| = 1 on two rays
order = first
dirichlet = 0.5, 0.25

[network]
rays = 2
length = 1

[hamiltonian]
family = eikonal
parameters = 1, 1
source = 1

[kirchhoff]
family = linear
parameters = 1, 1, 0, 0
"""


def test_minimal_config():
    cfg = parse_config(BASE)
    assert isinstance(cfg, ProblemConfig)
    assert cfg.rays == 2 and cfg.length == 1.0
    assert cfg.dirichlet == (0.5, 0.25)
    assert cfg.order == "first"
    assert cfg.nodes == 100 and cfg.tolerance == 1e-10 and cfg.stencil == "auto"
    assert [r.family for r in cfg.hamiltonians] == ["eikonal", "eikonal"]
    assert cfg.kirchhoff_parameters == (1.0, 1.0, 0.0, 0.0)


def test_round_trip_is_fixed_point():
    cfg = parse_config(BASE + "\n[hamiltonian.2]\nfamily = advection\nparameters = 2, -1\n"
                       "source = sin(x) - x^2\n[solver]\nnodes = 40\ntolerance = 1e-9\n")
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text


def test_ray_override():
    cfg = parse_config(BASE + "\n[hamiltonian.2]\nparameters = 2, 3\n")
    assert cfg.hamiltonians[0].parameters == (1.0, 1.0)
    assert cfg.hamiltonians[1].parameters == (2.0, 3.0)
    assert cfg.hamiltonians[1].family == "eikonal"


def test_order_defaults_to_second_for_viscous():
    text = BASE.replace("order = first\n", "").replace(
        "family = eikonal\nparameters = 1, 1", "family = viscous\nparameters = 1, 1, 0.5")
    assert parse_config(text).order == "second"


def test_first_order_with_viscous_rejected():
    text = BASE.replace("family = eikonal\nparameters = 1, 1",
                        "family = viscous\nparameters = 1, 1, 0.5")
    with pytest.raises(ConfigError, match="second-order"):
        parse_config(text)


def test_missing_dirichlet_names_key():
    with pytest.raises(ConfigError, match="'dirichlet'"):
        parse_config(BASE.replace("dirichlet = 0.5, 0.25\n", ""))


def test_one_ray_rejected():
    text = BASE.replace("rays = 2", "rays = 1").replace("0.5, 0.25", "0.5")
    with pytest.raises(ConfigError, match="at least 2 rays") as e:
        parse_config(text)
    assert e.value.line == 6


def test_unknown_key_located():
    text = BASE.replace("length = 1", "length = 1\ncolour = red")
    with pytest.raises(ConfigError, match="unknown key 'colour'") as e:
        parse_config(text)
    assert (e.value.line, e.value.column) == (8, 1)


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(BASE + "[plot]\n")


def test_ray_section_out_of_range():
    with pytest.raises(ConfigError, match="outside"):
        parse_config(BASE + "[hamiltonian.3]\nparameters = 1, 1\n")


def test_unknown_family():
    with pytest.raises(ConfigError, match="unknown Hamiltonian family 'burgers'"):
        parse_config(BASE.replace("family = eikonal", "family = burgers"))
    with pytest.raises(ConfigError, match="unknown Kirchhoff family"):
        parse_config(BASE.replace("family = linear", "family = quadratic"))


def test_arity_mismatch():
    with pytest.raises(ConfigError, match="takes 2 parameters, got 3") as e:
        parse_config(BASE.replace("parameters = 1, 1\n", "parameters = 1, 1, 1\n"))
    assert e.value.line == 11 and e.value.column == 14
    with pytest.raises(ConfigError, match="takes 4 parameters"):
        parse_config(BASE.replace("1, 1, 0, 0", "1, 1, 0"))
    with pytest.raises(ConfigError, match="need 2 Dirichlet values"):
        parse_config(BASE.replace("0.5, 0.25", "0.5"))


def test_bad_number_column():
    with pytest.raises(ConfigError, match="'abc'") as e:
        parse_config(BASE.replace("dirichlet = 0.5, 0.25", "dirichlet = 0.5, abc"))
    assert (e.value.line, e.value.column) == (3, 18)


def test_source_syntax_error_located():
    with pytest.raises(ConfigError, match="source expression") as e:
        parse_config(BASE.replace("source = 1", "source = x + $"))
    assert e.value.line == 12 and e.value.column == 14


def test_invalid_values():
    with pytest.raises(ConfigError, match="positive"):
        parse_config(BASE.replace("length = 1", "length = 0"))
    with pytest.raises(ConfigError, match="gamma"):
        parse_config(BASE.replace("1, 1, 0, 0", "1, -1, 0, 0"))
    with pytest.raises(ConfigError, match="stencil"):
        parse_config(BASE + "[solver]\nstencil = third\n")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config(BASE.replace("rays = 2", "rays = 2\nrays = 2"))
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(BASE + "[solver\n")


def test_overrides():
    cfg = parse_config(BASE).with_overrides(seed=7, tolerance=1e-6)
    assert cfg.seed == 7 and cfg.tolerance == 1e-6
    assert cfg.solver_config().tolerance == 1e-6
    with pytest.raises(ConfigError):
        cfg.with_overrides(tolerance=-1.0)


def test_builds_problem():
    cfg = parse_config(BASE)
    problem = cfg.problem()
    assert problem.network.ray_count == 2
    assert problem.dirichlet == (0.5, 0.25) or list(problem.dirichlet) == [0.5, 0.25]
    grid = cfg.grid(20)
    assert grid.nodes == 20 and grid.spacing == pytest.approx(0.05)

import math

import pytest

from cartsim.config import (ConfigError, load_run_config, parse_birefringence, parse_number,
                            run_config_from_preset)
from cartsim.experiments import load_preset


@pytest.mark.parametrize("text, value", [("10.78x1/3", 10.78 / 3), ("5×10^4", 5e4), ("−2", -2.0),
                                         ("1.69*1/3", 1.69 / 3), ("400", 400.0)])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value)


@pytest.mark.parametrize("text", ["__import__('os')", "1/0", "abc", "1e999"])
def test_parse_number_rejects(text):
    with pytest.raises(ConfigError):
        parse_number(text)


def test_parse_birefringence_kappa_suffix():
    assert parse_birefringence("0.5kappa", 6.0) == pytest.approx(3.0)
    assert parse_birefringence("0.5 κ", 6.0) == pytest.approx(3.0)
    assert parse_birefringence("kappa", 6.0) == pytest.approx(6.0)
    assert parse_birefringence("1.2", 6.0) == pytest.approx(1.2)


TABLE_STYLE = """
[run]
encoding = frequency
scheme = 2
reexcitation = yes

[node]
l/mm = 0.493
R_c/mm = 0.493
F = 5x10^4
g_1 = 9.36
g_2 = 8.89
κ = 6
Ω_1 = 38
Ω_2 = 40
Δ_1,Δ_2 = 400
γ_ie = 10.78x1/3
γ_xe = 7.92
δ = 0.5κ

[node_b]
delta = 0
"""


def test_table_column_names_accepted():
    cfg = load_run_config(text=TABLE_STYLE)
    ca = load_preset("ca40").node
    assert cfg.node_a == ca
    assert cfg.node_b.birefringence.delta == 0.0
    assert cfg.scheme == 2 and cfg.reexcitation
    assert cfg.geometry is not None


def test_rad_per_us_units():
    cfg = load_run_config(text="[run]\nunits = rad/us\n[node]\nkappa = 6.283185307179586\ng1 = 0\n")
    assert cfg.node_a.kappa == pytest.approx(1.0)


@pytest.mark.parametrize("text", [
    "[node]\nkapa = 3\n",
    "[run]\nwindow = 1\n",
    "[nodes]\nkappa = 3\n",
    "[run]\nscheme = 4\n",
    "[run]\nencoding = spin\n",
    "[run]\nunits = GHz\n",
    "[node]\nkappa = -1\n",
    "[run]\npreset = yb171\n",
])
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        load_run_config(text=text)


@pytest.mark.parametrize("name", ["ca40", "ra225", "generic"])
def test_ini_roundtrip(name):
    cfg = run_config_from_preset(name, encoding="polarization", scheme=1, reexcitation=True)
    back = load_run_config(text=cfg.to_ini())
    assert back.node_a == cfg.node_a and back.node_b == cfg.node_b
    assert (back.encoding, back.scheme, back.reexcitation) == ("polarization", 1, True)


def test_to_dict_contains_geometry():
    d = run_config_from_preset("ca40").to_dict()
    assert d["geometry"]["waist_um"] == pytest.approx(8.24, abs=0.02)
    assert math.isfinite(d["geometry"]["fsr"])

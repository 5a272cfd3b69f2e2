import math

import numpy as np
import pytest

import cartsim.experiments as ex
from cartsim.emission import TimeGrid, synthetic_record
from cartsim.experiments import (OptimizationError, SweepSpec, balance_drives, golden_section_search,
                                 load_preset, run_birefringence_heatmap, run_window_curves)
from cartsim.model import DriveConfig, NodeConfig


def test_preset_values_ca40():
    p = load_preset("ca40")
    assert (p.g1, p.g2, p.kappa) == (9.36, 8.89, 6.0)
    assert (p.drive.omega1, p.drive.omega2, p.drive.delta1, p.drive.delta2) == (38, 40, 400, 400)
    assert p.gamma_ie == pytest.approx(10.78 / 3)
    assert p.gamma_xe == 7.92
    assert p.birefringence.delta == pytest.approx(0.5 * p.kappa)
    assert p.birefringence.axis == (1.0, 0.0, 0.0)


def test_preset_values_ra225():
    p = load_preset("ra225")
    assert (p.g1, p.g2, p.kappa) == (1.01, 1.01, 0.28)
    assert p.gamma_ie == pytest.approx(1.69 / 3)
    assert p.gamma_xe == 9.00
    assert p.fsr == pytest.approx(27.68e3 / 2, rel=5e-3)


def test_generic_preset():
    p = load_preset("generic")
    assert (p.g1, p.g2, p.kappa, p.gamma_ie, p.gamma_xe) == (10, 10, 5, 0, 0)
    assert p.birefringence.delta == 0.0


def test_unknown_preset():
    with pytest.raises(KeyError):
        load_preset("yb171")


# --- optimizer -------------------------------------------------------------------

def test_golden_section_finds_parabola_peak():
    x, fx, it = golden_section_search(lambda x: -(x - 2.3) ** 2, 0.0, 5.0, rtol=1e-8)
    assert x == pytest.approx(2.3, abs=1e-7)
    assert it > 10


def test_golden_section_errors():
    with pytest.raises(ValueError):
        golden_section_search(lambda x: x, 1.0, 1.0)
    with pytest.raises(OptimizationError):
        golden_section_search(lambda x: -x * x, -1.0, 1.0, rtol=1e-12, max_iter=5)


def test_balance_symmetric_node():
    cfg = NodeConfig(g1=5, g2=5, kappa=3, drive=DriveConfig(20, 20, 300, 300))
    res = balance_drives(cfg, points=512)
    assert res.config.drive.omega1 == pytest.approx(20.0, rel=1e-9)
    assert res.norm_ratio == pytest.approx(1.0, rel=1e-6)
    assert res.overlap == pytest.approx(1.0, abs=1e-9)


def test_balance_ca40_matches_quoted_drive():
    p = load_preset("ca40")
    res = balance_drives(p.node, fix="omega2", points=512)
    assert res.config.drive.omega1 == pytest.approx(38.0, rel=0.05)


def test_balance_ratio_invariant_under_drive_scaling():
    p = load_preset("ca40").node
    r1 = balance_drives(p, points=512).config.drive
    r2 = balance_drives(p.with_drive(omega2=80.0), points=512).config.drive
    assert r2.omega1 / r2.omega2 == pytest.approx(r1.omega1 / r1.omega2, rel=1e-3)


def test_balance_runs_golden_section_on_peaked_objective(monkeypatch):
    # replace the simulation by a closed-form record whose overlap peaks at omega1 = 7
    grid = TimeGrid(0.0, 4.0, 256)

    def fake(cfg, grid_, rtol=None, atol=None):
        t = grid.times
        ch = np.zeros((4, t.size), complex)
        ch[0] = np.exp(-t)
        ch[2] = np.exp(-t * cfg.drive.omega1 / 7.0)
        return synthetic_record(ch, grid)

    monkeypatch.setattr(ex, "simulate_emission", fake)
    cfg = NodeConfig(g1=2, g2=3, kappa=2, drive=DriveConfig(5, 5, 20, 30))
    res = balance_drives(cfg, bounds=(3.0, 12.0), rtol=1e-6, points=64)
    assert not res.degenerate
    assert res.config.drive.omega1 == pytest.approx(7.0, rel=1e-4)
    assert res.overlap == pytest.approx(1.0, abs=1e-8)


def test_balance_validation():
    with pytest.raises(ValueError):
        balance_drives(load_preset("ca40").node, fix="theta")


# --- sweeps -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_heatmap():
    spec = SweepSpec.square(3, 2.0, points=1024, max_points=256)
    return run_birefringence_heatmap(spec)


def test_heatmap_shape_and_order(small_heatmap):
    assert [(c.delta_a, c.delta_b) for c in small_heatmap.cells][:3] == [(0, 0), (0, 1), (0, 2)]
    assert small_heatmap.fidelity_grid().shape == (3, 3)
    assert not any(c.error for c in small_heatmap.cells)


def test_heatmap_symmetric(small_heatmap):
    F = small_heatmap.fidelity_grid()
    np.testing.assert_allclose(F, F.T, atol=1e-9)


def test_heatmap_frequency_diagonal_unity(small_heatmap):
    assert np.allclose(np.diag(small_heatmap.fidelity_grid()), 1.0, atol=1e-3)


def test_heatmap_jobs_do_not_change_results(small_heatmap, tmp_path):
    par = run_birefringence_heatmap(small_heatmap.spec, jobs=3)
    small_heatmap.to_csv(tmp_path / "a.csv")
    par.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_heatmap_reports_cell_failures(monkeypatch):
    def broken(args):
        return None, math.nan, "ValueError: boom"

    monkeypatch.setattr(ex, "_heatmap_cell", broken)
    heat = run_birefringence_heatmap(SweepSpec.square(2, 1.0, points=256, max_points=64))
    assert all(c.error == "ValueError: boom" for c in heat.cells)
    assert np.all(np.isnan(heat.fidelity_grid()))


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec((), (0.0,))
    with pytest.raises(ValueError):
        SweepSpec((0.0, math.inf), (0.0,))


@pytest.fixture(scope="module")
def preset_curves():
    return {name: run_window_curves(load_preset(name), points=4096, max_points=512) for name in ("ca40", "ra225")}


def test_window_curves_start_at_unity(preset_curves):
    for curves in preset_curves.values():
        assert curves.results[0].fidelity == pytest.approx(1.0, abs=5e-3)


def test_ra225_beats_ca40(preset_curves):
    assert preset_curves["ra225"].asymptotic.fidelity > preset_curves["ca40"].asymptotic.fidelity


def test_reexcitation_never_raises_asymptotic_fidelity(preset_curves):
    off = run_window_curves(load_preset("ca40"), [math.inf], reexcitation=False, points=4096, max_points=512)
    assert preset_curves["ca40"].asymptotic.fidelity <= off.asymptotic.fidelity + 1e-12


def test_window_curves_efficiency_monotone(preset_curves):
    eff = [r.efficiency for r in preset_curves["ca40"].results]
    assert np.all(np.diff(eff) >= -1e-15)

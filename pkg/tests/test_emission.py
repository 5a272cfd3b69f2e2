from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import quiet_emission, random_record
from cartsim.emission import (EmissionWarning, TimeGrid, Wavepacket, correlator_diagonal, correlator_matrix,
                              default_grid, mixed_channel_correlator, simulate_emission, synthetic_record)
from cartsim.emission import _lag_convolution
from cartsim.model import TWO_PI, UP_RH, BirefringenceSpec, DriveConfig, NodeConfig
from cartsim.experiments import load_preset


def test_pure_cavity_decay_analytic():
    kappa = 1.0
    cfg = NodeConfig(kappa=kappa)
    grid = TimeGrid(0.0, 2.0, 401)
    rec = simulate_emission(cfg, grid, initial=UP_RH)
    k = TWO_PI * kappa
    expected = np.sqrt(2 * k) * np.exp(-k * grid.times)
    np.testing.assert_allclose(rec.wavepacket["rH"], expected, atol=1e-10)
    assert np.all(rec.wavepacket["rV"] == 0)


def test_birefringent_cavity_decay_analytic():
    kappa, delta = 1.0, 0.8
    cfg = NodeConfig(kappa=kappa, birefringence=BirefringenceSpec(delta))
    grid = TimeGrid(0.0, 1.5, 301)
    rec = simulate_emission(cfg, grid, initial=UP_RH)
    k, d, t = TWO_PI * kappa, TWO_PI * delta, grid.times
    env = np.sqrt(2 * k) * np.exp(-k * t)
    np.testing.assert_allclose(rec.wavepacket["rH"], env * np.cos(d * t), atol=1e-10)
    np.testing.assert_allclose(rec.wavepacket["rV"], -1j * env * np.sin(d * t), atol=1e-10)


def test_zero_birefringence_gives_no_rotated_channels(generic_records):
    rec = generic_records[0.0]
    assert np.all(rec.wavepacket["rV"] == 0) and np.all(rec.wavepacket["bV"] == 0)
    assert rec.wavepacket.norm > 0.99


def test_zero_drive_gives_zero_channels():
    cfg = load_preset("generic").node.with_drive(omega1=0.0, omega2=0.0)
    rec = quiet_emission(cfg, TimeGrid(0, 1.0, 64))
    assert np.all(rec.channels == 0)


def test_bookkeeping_closes_for_presets():
    for name in ("ca40", "ra225"):
        rec = quiet_emission(load_preset(name).node)
        b = rec.bookkeeping()
        assert b["photon_probability"] + b["xe_loss"] + b["unreleased"] == pytest.approx(1.0, abs=1e-6)
        dens_mass = float(rec.reexcitation_density @ rec.grid.weights())
        assert rec.pure_weight + dens_mass == pytest.approx(1.0, abs=1e-12)


def test_xe_loss_monotone_in_gamma_xe():
    base = load_preset("ca40").node
    losses = [quiet_emission(replace(base, gamma_xe=g), TimeGrid(0, 2.0, 512)).xe_loss
              for g in (0.0, 2.0, 8.0, 20.0)]
    assert losses[0] == 0.0
    assert all(a < b for a, b in zip(losses, losses[1:]))


def test_default_grid_covers_emission():
    cfg = load_preset("ca40").node
    rec = simulate_emission(cfg, default_grid(cfg))
    assert rec.unreleased < 1e-3


def test_short_grid_warns():
    cfg = load_preset("ca40").node
    with pytest.warns(EmissionWarning):
        simulate_emission(cfg, TimeGrid(0.0, 0.02, 32))


def test_lag_convolution_matches_direct_sum():
    rng = np.random.default_rng(7)
    n = 40
    a = rng.normal(size=n) + 1j * rng.normal(size=n)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    w = rng.uniform(size=n)
    direct = np.zeros((n, n), complex)
    for k in range(n):
        sa = np.concatenate([np.zeros(k), a[: n - k]])
        sb = np.concatenate([np.zeros(k), b[: n - k]])
        direct += w[k] * np.outer(sa, sb.conj())
    np.testing.assert_allclose(_lag_convolution(a, b, w), direct, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_correlator_matrix_matches_pointwise_mixture(seed):
    rng = np.random.default_rng(seed)
    rec = random_record(rng, n=48)
    C = correlator_matrix(rec, "rH", "bH")
    for i, j in rng.integers(0, rec.grid.n, size=(5, 2)):
        ti, tj = rec.grid.times[i], rec.grid.times[j]
        assert C[i, j] == pytest.approx(mixed_channel_correlator(rec, "rH", "bH", ti, tj), abs=1e-12)
    np.testing.assert_allclose(np.diag(C), correlator_diagonal(rec, "rH", "bH"), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_correlator_is_positive_semidefinite(seed):
    rec = random_record(np.random.default_rng(seed), n=48)
    C = correlator_matrix(rec, "rH", "rH")
    np.testing.assert_allclose(C, C.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(C).min() > -1e-10


def test_pure_record_correlator_is_outer_product():
    grid = TimeGrid(0, 1, 16)
    ch = np.zeros((4, 16), complex)
    ch[0] = np.sin(np.pi * grid.times)
    rec = synthetic_record(ch, grid)
    np.testing.assert_allclose(correlator_matrix(rec, 0, 0), np.outer(ch[0], ch[0]))


def test_wavepacket_csv_roundtrip(tmp_path, generic_records):
    wp = generic_records[0.5].wavepacket
    wp.to_csv(tmp_path / "w.csv")
    back = Wavepacket.from_csv(tmp_path / "w.csv")
    np.testing.assert_array_equal(back.channels, wp.channels)
    header = (tmp_path / "w.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 9


def test_resampling_keeps_normalization(generic_records):
    rec = quiet_emission(load_preset("ca40").node, TimeGrid(0, 1.0, 1024))
    small = rec.resampled(256)
    assert small.pure_weight + float(small.reexcitation_density @ small.grid.weights()) == pytest.approx(1.0)
    assert small.wavepacket.norm == pytest.approx(rec.wavepacket.norm, rel=1e-3)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.5, 10)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 1)

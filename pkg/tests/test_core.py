import numpy as np
import pytest
from hypothesis import given, strategies as st

from cartsim.core import (IntegrationError, TimeDependentOperator, integrate_dopri5, matrix_exponential,
                          propagate_lindblad, propagate_schrodinger, taylor_exponential)
from cartsim.model import build_lindblad_generator, basis_state
from cartsim.experiments import load_preset


def random_heff(rng, dim=6, scale=5.0):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = scale * (A + A.conj().T) / 2
    B = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return H - 0.5j * (B.conj().T @ B)


# --- matrix exponential -----------------------------------------------------

def test_expm_diagonal():
    d = np.array([0.3, -2.0, 1j, 5 - 3j])
    np.testing.assert_allclose(matrix_exponential(np.diag(d)), np.diag(np.exp(d)), rtol=1e-14)


def test_expm_nilpotent():
    N = np.triu(np.ones((4, 4)), 1)
    expected = np.eye(4) + N + N @ N / 2 + N @ N @ N / 6
    np.testing.assert_allclose(matrix_exponential(N), expected, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_expm_matches_eigendecomposition(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    H = 3 * (A + A.conj().T)
    vals, vecs = np.linalg.eigh(H)
    oracle = vecs @ np.diag(np.exp(-1j * vals)) @ vecs.conj().T
    np.testing.assert_allclose(matrix_exponential(-1j * H), oracle, atol=1e-11)


def test_expm_taylor_agree_small_norm():
    rng = np.random.default_rng(1)
    A = 0.1 * (rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
    np.testing.assert_allclose(matrix_exponential(A), taylor_exponential(A), atol=1e-14)


def test_expm_rejects_bad_input():
    with pytest.raises(ValueError):
        matrix_exponential(np.ones((2, 3)))
    with pytest.raises(ValueError):
        matrix_exponential(np.array([[np.nan]]))


# --- adaptive integrator ------------------------------------------------------

def test_dopri5_scalar_decay():
    times = np.linspace(0, 3, 31)
    lam = -1.3 + 4j
    ys = integrate_dopri5(lambda t, y: lam * y, np.array([1.0 + 0j]), times, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(ys[:, 0], np.exp(lam * times), rtol=1e-8)


def test_dopri5_time_dependent():
    times = np.linspace(0, 2, 21)
    ys = integrate_dopri5(lambda t, y: np.cos(5 * t) * y, np.array([1.0 + 0j]), times, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(ys[:, 0].real, np.exp(np.sin(5 * times) / 5), rtol=1e-8)


def test_dopri5_reports_blowup():
    with pytest.raises((IntegrationError, FloatingPointError)):
        integrate_dopri5(lambda t, y: y**2, np.array([1.0 + 0j]), np.array([0.0, 2.0]))


def test_rk45_matches_expm_oracle_on_100_instances():
    rng = np.random.default_rng(20240601)
    times = np.linspace(0.0, 1.0, 6)
    worst = 0.0
    for _ in range(100):
        Heff = random_heff(rng)
        psi0 = rng.normal(size=6) + 1j * rng.normal(size=6)
        psi0 /= np.linalg.norm(psi0)
        traj = propagate_schrodinger(TimeDependentOperator.constant(Heff), psi0, times,
                                     rtol=1e-12, atol=1e-14, method="rk45")
        oracle = np.array([matrix_exponential(-1j * Heff * t) @ psi0 for t in times])
        worst = max(worst, np.max(np.abs(traj.states - oracle)))
    assert worst < 1e-8


def test_exact_and_rk45_agree_with_monitors():
    rng = np.random.default_rng(3)
    Heff = random_heff(rng, scale=2.0)
    L = rng.normal(size=(1, 6)) + 0j
    psi0 = basis_state(0)
    times = np.linspace(0, 1, 11)
    H = TimeDependentOperator.constant(Heff)
    a = propagate_schrodinger(H, psi0, times, monitor=[L], method="exact")
    b = propagate_schrodinger(H, psi0, times, monitor=[L], method="rk45", rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(a.states, b.states, atol=1e-9)
    np.testing.assert_allclose(a.jumps, b.jumps, atol=1e-9)


def test_method_validation():
    H = TimeDependentOperator.fourier([(0.0, np.eye(2)), (1.0, np.ones((2, 2)))])
    with pytest.raises(ValueError):
        propagate_schrodinger(H, np.array([1, 0]), np.linspace(0, 1, 3), method="exact")
    with pytest.raises(ValueError):
        propagate_schrodinger(H, np.array([1, 0]), np.linspace(0, 1, 3), method="euler")
    with pytest.raises(ValueError):
        propagate_schrodinger(H, np.array([1, 0]), np.array([0.0, 0.0]))


def test_fourier_operator_evaluation():
    M0, M1 = np.diag([1.0, 2.0]), np.array([[0, 1], [0, 0]], complex)
    H = TimeDependentOperator.fourier([(0.0, M0), (3.0, M1), (-3.0, M1.T)])
    t = 0.7
    np.testing.assert_allclose(H(t), M0 + np.exp(3j * t) * M1 + np.exp(-3j * t) * M1.T)
    assert not H.is_constant
    assert TimeDependentOperator.constant(M0).is_constant


# --- Lindblad ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["ca40", "ra225"])
def test_lindblad_trace_bookkeeping_closes(name):
    cfg = load_preset(name).node
    H, ops = build_lindblad_generator(cfg)
    rho0 = np.outer(basis_state(0), basis_state(0))
    times = np.linspace(0, 2.0, 201)
    traj = propagate_lindblad(H, ops, rho0, times)
    recycled = [k for k, L in enumerate(ops) if L.shape[0] == L.shape[1]]
    lost = np.delete(traj.jumps, recycled, axis=1).sum(axis=1)
    trace = np.einsum("kii->k", traj.states).real
    assert np.max(np.abs(trace + lost - 1.0)) < 1e-6
    herm = np.max(np.abs(traj.states - traj.states.conj().transpose(0, 2, 1)))
    assert herm < 1e-12


def test_lindblad_rk45_matches_exact():
    cfg = load_preset("ca40").node
    H, ops = build_lindblad_generator(cfg)
    rho0 = np.outer(basis_state(0), basis_state(0))
    times = np.linspace(0, 0.5, 26)
    a = propagate_lindblad(H, ops, rho0, times, method="exact")
    b = propagate_lindblad(H, ops, rho0, times, method="rk45", rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(a.states, b.states, atol=1e-8)
    np.testing.assert_allclose(a.jumps, b.jumps, atol=1e-8)


def test_lindblad_square_operator_preserves_trace():
    # two-level decay with recycling: population moves, trace stays 1
    L = np.array([[0, 1], [0, 0]], complex) * np.sqrt(2.0)
    H = TimeDependentOperator.constant(np.zeros((2, 2)))
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    times = np.linspace(0, 3, 31)
    traj = propagate_lindblad(H, [L], rho0, times)
    np.testing.assert_allclose(np.einsum("kii->k", traj.states).real, 1.0, atol=1e-12)
    np.testing.assert_allclose(traj.states[:, 1, 1].real, np.exp(-2 * times), atol=1e-12)
    np.testing.assert_allclose(traj.jumps[:, 0], 1 - np.exp(-2 * times), atol=1e-12)


def test_lindblad_rejects_non_hermitian_rho():
    H = TimeDependentOperator.constant(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        propagate_lindblad(H, [], np.array([[1, 1], [0, 0]], complex), np.linspace(0, 1, 3))

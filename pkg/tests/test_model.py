import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmimo.lifting import denominator, g_matrix, nu_vector, poly_coeffs
from robustmimo.model import (
    Interferer,
    Scenario,
    TargetSector,
    beampattern,
    interference_cov_from_s,
    interference_cov_from_V,
    interference_cov_from_X,
    interferer_operator,
    receive_steering,
    response,
    shift_matrix,
    sinr_linear,
    sinr_vectors,
    target_operator,
    transmit_steering,
)
from robustmimo.numerics import ContractError

from conftest import crandn


def scene(nt=2, nr=3, n=4, energy=None, snr_db=-5.0, intfs=((1, -30.0, 20.0), (0, 45.0, 10.0))):
    energy = float(nt * n) if energy is None else energy
    return Scenario(
        nt, nr, n, energy, snr_db, TargetSector(0.0, 5.0),
        tuple(Interferer(r, d, i) for r, d, i in intfs if abs(r) < n),
    )


def energy_waveform(rng, sc):
    s = crandn(rng, sc.tx_dim)
    return s * np.sqrt(sc.energy) / np.linalg.norm(s)


def test_steering_examples():
    np.testing.assert_allclose(transmit_steering(0.0, 4), np.ones(4))
    np.testing.assert_allclose(transmit_steering(30.0, 3), [1, 1j, -1], atol=1e-15)
    np.testing.assert_allclose(transmit_steering(-30.0, 2), [1, -1j], atol=1e-15)
    np.testing.assert_allclose(receive_steering(0.0, 3), np.ones(3))
    np.testing.assert_allclose(receive_steering(30.0, 3), [1, 1j, -1], atol=1e-15)
    np.testing.assert_allclose(receive_steering(-30.0, 2), [1, -1j], atol=1e-15)


def test_steering_modulus(rng):
    for th in rng.uniform(-89, 89, 20):
        a = transmit_steering(th, 7)
        np.testing.assert_allclose(np.abs(a), 1.0)
        assert abs(np.vdot(a, a).real - 7) < 1e-12


def test_shift_matrix():
    np.testing.assert_array_equal(shift_matrix(0, 3), np.eye(3))
    np.testing.assert_array_equal(shift_matrix(1, 3), [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    expected = np.zeros((3, 3))
    expected[0, 2] = 1
    np.testing.assert_array_equal(shift_matrix(-2, 3), expected)
    for r in range(-3, 4):
        np.testing.assert_array_equal(shift_matrix(r, 4).T, shift_matrix(-r, 4))
    with pytest.raises(ContractError):
        shift_matrix(3, 3)


def test_target_operator_examples(rng):
    sc1 = Scenario(1, 1, 1, 1.0, 0.0, TargetSector(0.0))
    np.testing.assert_allclose(target_operator(20.0, sc1), [[1.0]])
    sc = scene()
    np.testing.assert_allclose(target_operator(0.0, sc), np.kron(np.eye(4), np.ones((3, 2))))
    # w^H A s against the unvectorized model a_r^T-form: w^H vec(a_r a_t^T S)
    s, w = crandn(rng, sc.tx_dim), crandn(rng, sc.rx_dim)
    th = 17.0
    smat = s.reshape(sc.n_samples, sc.n_tx).T
    ymat = np.outer(receive_steering(th, 3), transmit_steering(th, 2)) @ smat
    direct = np.vdot(w, ymat.T.ravel())
    assert abs(np.vdot(w, target_operator(th, sc) @ s) - direct) < 1e-12 * abs(direct)
    assert abs(response(s, w, th, sc)[0] - direct) < 1e-12 * abs(direct)


def test_interferer_operator_examples():
    sc = scene(n=4)
    b = interferer_operator(Interferer(0, 25.0, 0.0), sc)
    np.testing.assert_allclose(b, target_operator(25.0, sc))
    with pytest.raises(ContractError):
        Scenario(2, 3, 2, 4.0, 0.0, TargetSector(0.0), (Interferer(2, 10.0, 0.0),))


def test_interferer_operator_delay_impulse():
    # N=2, r=1: an impulse at sample 0 returns one sample later
    sc = Scenario(1, 1, 2, 1.0, 0.0, TargetSector(0.0), (Interferer(1, 0.0, 0.0),))
    b = interferer_operator(sc.interferers[0], sc)
    np.testing.assert_array_equal(b, [[0, 1], [0, 0]])
    s = np.array([1.0, 0.0])
    # Y = a_r a_t^T S J_1 with a one-sample impulse S = [1, 0]
    smat = s.reshape(2, 1).T
    y = smat @ shift_matrix(1, 2)
    np.testing.assert_allclose(b @ s, y.T.ravel())


def test_interferer_operator_y_model(rng):
    sc = scene(nt=3, nr=2, n=5, intfs=((2, 20.0, 0.0), (-3, -50.0, 0.0)))
    s = crandn(rng, sc.tx_dim)
    smat = s.reshape(sc.n_samples, sc.n_tx).T
    for intf in sc.interferers:
        ar = receive_steering(intf.doa_deg, sc.n_rx)
        at = transmit_steering(intf.doa_deg, sc.n_tx)
        y = np.outer(ar, at) @ smat @ shift_matrix(intf.range_offset, sc.n_samples)
        np.testing.assert_allclose(interferer_operator(intf, sc) @ s, y.T.ravel(), atol=1e-12)


def test_sinr_matched_filter_no_interference():
    sc = Scenario(2, 3, 4, 8.0, -3.0, TargetSector(0.0))
    at = transmit_steering(0.0, 2)
    s = np.tile(at.conj(), 4) * np.sqrt(8.0 / 8)
    a = target_operator(0.0, sc)
    w = a @ s
    value = sinr_linear(s, w, 0.0, sc)[0]
    assert abs(value - sc.snr * np.vdot(a @ s, a @ s).real) < 1e-12 * value
    assert abs(value - sc.snr * 8.0 * 2 * 3) < 1e-10 * value


def test_sinr_scale_and_phase_invariance(rng):
    sc = scene()
    s, w = energy_waveform(rng, sc), crandn(rng, sc.rx_dim)
    base = sinr_vectors(s, w, 3.0, sc)
    assert abs(sinr_vectors(s, (2 - 5j) * w, 3.0, sc) - base) < 1e-10
    ph = np.exp(1.3j)
    assert abs(sinr_vectors(ph * s, ph * w, 3.0, sc) - base) < 1e-10


def test_sinr_errors(rng):
    sc = scene()
    s = energy_waveform(rng, sc)
    with pytest.raises(ContractError):
        sinr_vectors(s, np.zeros(sc.rx_dim), 0.0, sc)
    with pytest.raises(ContractError):
        sinr_vectors(2 * s, crandn(rng, sc.rx_dim), 0.0, sc)
    with pytest.raises(ContractError):
        sinr_vectors(s[:-1], crandn(rng, sc.rx_dim), 0.0, sc)


def test_sinr_matches_lifted(rng):
    for _ in range(20):
        sc = scene(nt=int(rng.integers(1, 4)), nr=int(rng.integers(1, 4)), n=int(rng.integers(2, 5)))
        s, w = energy_waveform(rng, sc), crandn(rng, sc.rx_dim)
        th = float(rng.uniform(-80, 80))
        x, v = np.outer(s, s.conj()), np.outer(w, w.conj())
        p = nu_vector(np.pi * np.sin(np.deg2rad(th)), sc.lift_len)
        lifted = sc.snr * np.vdot(p, g_matrix(x, v, sc) @ p).real / denominator(x, v, sc)
        direct = sinr_linear(s, w, th, sc)[0]
        assert abs(lifted - direct) <= 1e-10 * direct
        assert abs(poly_coeffs(g_matrix(x, v, sc)).evaluate(np.pi * np.sin(np.deg2rad(th))) * sc.snr
                   / denominator(x, v, sc) - direct) <= 1e-10 * direct


def test_beampattern_bounds(rng):
    sc = scene()
    s, w = energy_waveform(rng, sc), crandn(rng, sc.rx_dim)
    grid = np.linspace(-90, 90, 181)
    p = beampattern(s, w, grid, sc)
    assert np.all(p <= 1e-12)
    sc0 = Scenario(2, 2, 3, 6.0, 0.0, TargetSector(10.0))
    s0 = np.tile(transmit_steering(10.0, 2).conj(), 3)
    s0 *= np.sqrt(6.0) / np.linalg.norm(s0)
    w0 = target_operator(10.0, sc0) @ s0
    assert abs(beampattern(s0, w0, [10.0], sc0)[0]) < 1e-10
    with pytest.raises(ContractError):
        beampattern(np.zeros(sc.tx_dim), w, grid, sc)


def test_interference_covariances(rng):
    sc = scene()
    empty = scene(intfs=())
    x = np.eye(sc.tx_dim)
    np.testing.assert_array_equal(interference_cov_from_X(x, empty), 0)
    np.testing.assert_array_equal(interference_cov_from_V(np.eye(sc.rx_dim), empty), 0)
    s, w = energy_waveform(rng, sc), crandn(rng, sc.rx_dim)
    x, v = np.outer(s, s.conj()), np.outer(w, w.conj())
    lhs = np.trace(interference_cov_from_V(v, sc) @ x).real
    rhs = np.vdot(w, interference_cov_from_s(s, sc) @ w).real
    assert abs(lhs - rhs) <= 1e-10 * rhs
    np.testing.assert_allclose(interference_cov_from_X(x, sc), interference_cov_from_s(s, sc), atol=1e-10)
    assert np.linalg.eigvalsh(interference_cov_from_X(x, sc)).min() > -1e-9
    doubled = scene(intfs=((1, -30.0, 20.0 + 10 * np.log10(2)), (0, 45.0, 10.0 + 10 * np.log10(2))))
    np.testing.assert_allclose(interference_cov_from_V(v, doubled), 2 * interference_cov_from_V(v, sc), rtol=1e-12, atol=1e-12)
    with pytest.raises(ContractError):
        interference_cov_from_V(np.eye(3), sc)


def test_scenario_contracts():
    with pytest.raises(ContractError):
        TargetSector(80.0, 15.0)
    with pytest.raises(ContractError):
        TargetSector(0.0, -1.0)
    with pytest.raises(ContractError):
        Interferer(0, 90.0, 0.0)
    with pytest.raises(ContractError):
        Scenario(0, 1, 1, 1.0, 0.0, TargetSector(0.0))
    with pytest.raises(ContractError):
        Scenario(1, 1, 1, 0.0, 0.0, TargetSector(0.0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), phase=st.floats(-np.pi, np.pi), theta=st.floats(-85, 85))
def test_sinr_phase_invariance_property(seed, phase, theta):
    rng = np.random.default_rng(seed)
    sc = scene()
    s, w = energy_waveform(rng, sc), crandn(rng, sc.rx_dim)
    ph = np.exp(1j * phase)
    a = sinr_linear(s, w, theta, sc)[0]
    b = sinr_linear(ph * s, ph * w, theta, sc)[0]
    assert abs(a - b) <= 1e-10 * a

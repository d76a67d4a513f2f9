import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmimo.lifting import (
    NuInterval,
    TrigCoeffs,
    build_lift,
    coeff_operators_fixed_v,
    coeff_operators_fixed_x,
    denominator,
    g_matrix,
    nu_vector,
    poly_coeffs,
    sector_to_nu,
)
from robustmimo.model import (
    Interferer,
    Scenario,
    TargetSector,
    interference_cov_from_X,
    receive_steering,
    response,
    transmit_steering,
)
from robustmimo.numerics import ContractError

from conftest import crandn, random_hermitian, random_psd


def scene(nt, nr, n, k=2):
    intfs = [Interferer(min(1, n - 1), -35.0, 20.0), Interferer(0, 55.0, 15.0)][:k]
    return Scenario(nt, nr, n, float(nt * n), -5.0, TargetSector(5.0, 10.0), tuple(intfs))


def test_build_lift_examples():
    np.testing.assert_array_equal(build_lift(1, 1), [[1.0]])
    h = build_lift(2, 2)
    assert h.shape == (4, 3)
    np.testing.assert_array_equal(h[:2], [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(h[2:], [[0, 1, 0], [0, 0, 1]])
    th = 30.0
    lhs = np.kron(receive_steering(th, 2), transmit_steering(th, 2))
    np.testing.assert_array_equal(lhs, h @ nu_vector(np.pi * np.sin(np.deg2rad(th)), 3))


def test_build_lift_exact_on_grid(rng):
    for nt, nr in ((3, 4), (1, 5), (4, 1)):
        h = build_lift(nt, nr)
        assert np.all(h.sum(axis=1) == 1)
        for th in np.linspace(-90, 90, 181):
            nu = np.pi * np.sin(np.deg2rad(th))
            p = nu_vector(nu, nt + nr - 1)
            # H only selects entries of p, so the lift is exact ...
            sel = np.array([p[r + t] for r in range(nr) for t in range(nt)])
            assert np.array_equal(h @ p, sel)
            # ... and the steering product differs from it only by exp roundoff
            lhs = np.kron(receive_steering(th, nr), transmit_steering(th, nt))
            assert np.max(np.abs(lhs - h @ p)) <= 1e-14


def test_nu_vector():
    np.testing.assert_array_equal(nu_vector(0.0, 5), np.ones(5))
    np.testing.assert_allclose(nu_vector(np.pi, 2), [1, -1], atol=1e-15)
    np.testing.assert_allclose(np.abs(nu_vector(np.random.default_rng(0).uniform(-4, 4, 9), 6)), 1.0)


def test_sector_to_nu():
    iv = sector_to_nu(TargetSector(0.0, 0.0))
    assert iv.alpha == 0.0 and iv.beta == 0.0
    iv = sector_to_nu(TargetSector(0.0, 30.0))
    assert abs(iv.alpha) < 1e-15 and abs(iv.beta - np.pi / 2) < 1e-15
    iv = sector_to_nu(TargetSector(20.0, 10.0))
    s30, s10 = np.sin(np.deg2rad(30)), np.sin(np.deg2rad(10))
    assert abs(iv.alpha - np.pi * (s30 + s10) / 2) < 1e-15
    assert abs(iv.beta - np.pi * (s30 - s10) / 2) < 1e-15
    with pytest.raises(ContractError):
        NuInterval(0.0, np.pi)


def test_g_matrix_scalar():
    sc = Scenario(1, 1, 1, 4.0, 0.0, TargetSector(0.0))
    g = g_matrix([[4.0]], [[2.5]], sc)
    np.testing.assert_allclose(g, [[10.0]])


def test_g_matrix_rank_one_identity(rng):
    for _ in range(50):
        sc = scene(int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 5)), k=0)
        s, w = crandn(rng, sc.tx_dim), crandn(rng, sc.rx_dim)
        th = float(rng.uniform(-85, 85))
        g = g_matrix(np.outer(s, s.conj()), np.outer(w, w.conj()), sc)
        p = nu_vector(np.pi * np.sin(np.deg2rad(th)), sc.lift_len)
        ref = abs(response(s, w, th, sc)[0]) ** 2
        assert abs(np.vdot(p, g @ p).real - ref) <= 1e-10 * ref


def test_g_matrix_psd(rng):
    sc = scene(3, 2, 4)
    x = np.eye(sc.tx_dim) * sc.energy / sc.tx_dim
    for _ in range(10):
        g = g_matrix(x, random_psd(rng, sc.rx_dim, 2), sc)
        lam = np.linalg.eigvalsh(g)
        assert lam[0] >= -1e-10 * lam[-1]
        np.testing.assert_allclose(g, g.conj().T, atol=1e-12)
    with pytest.raises(ContractError):
        g_matrix(np.eye(3), np.eye(sc.rx_dim), sc)


def test_poly_coeffs_examples(rng):
    np.testing.assert_allclose(poly_coeffs(np.eye(4)).g, [4, 0, 0, 0])
    a, b, c = 2.0, 3.0, 1 - 2j
    np.testing.assert_allclose(poly_coeffs(np.array([[a, np.conj(c)], [c, b]])).g, [a + b, c])
    g = random_hermitian(rng, 5)
    nus = rng.uniform(-np.pi, np.pi, 20)
    p = nu_vector(nus, 5)
    direct = np.einsum("ki,ij,kj->k", p.conj(), g, p).real
    np.testing.assert_allclose(poly_coeffs(g).evaluate(nus), direct, atol=1e-12 * np.abs(g).sum())


def test_trig_coeffs_shifted():
    c = TrigCoeffs([3.0, 1.0 + 1j])
    np.testing.assert_allclose(c.shifted(1.0).evaluate([0.3]), c.evaluate([0.3]) - 1.0)
    assert len(c) == 2


def test_denominator_examples(rng):
    sc = scene(2, 2, 3, k=0)
    s = crandn(rng, sc.tx_dim)
    s *= np.sqrt(sc.energy) / np.linalg.norm(s)
    w = crandn(rng, sc.rx_dim)
    d = denominator(np.outer(s, s.conj()), np.outer(w, w.conj()), sc)
    assert abs(d - np.vdot(w, w).real) < 1e-12 * d
    with pytest.raises(ContractError):
        denominator(np.zeros((sc.tx_dim,) * 2), np.eye(sc.rx_dim), sc)


def test_denominator_trace_forms(rng):
    sc = scene(3, 2, 4)
    for _ in range(10):
        x = random_psd(rng, sc.tx_dim, 3)
        x *= sc.energy / np.trace(x).real
        v = random_psd(rng, sc.rx_dim, 2)
        d = denominator(x, v, sc)
        other = np.trace((interference_cov_from_X(x, sc) + np.eye(sc.rx_dim)) @ v).real
        assert abs(d - other) <= 1e-10 * d
        assert abs(denominator(x, 3.5 * v, sc) - 3.5 * d) <= 1e-10 * d


def test_coefficient_operators(rng):
    sc = scene(2, 3, 3)
    x, v = random_psd(rng, sc.tx_dim), random_psd(rng, sc.rx_dim)
    g = poly_coeffs(g_matrix(x, v, sc)).g
    cu = coeff_operators_fixed_v(v, sc)
    cv = coeff_operators_fixed_x(x, sc)
    np.testing.assert_allclose(np.einsum("lij,ji->l", cu, x), g, atol=1e-10 * np.abs(g).max())
    np.testing.assert_allclose(np.einsum("lij,ji->l", cv, v), g, atol=1e-10 * np.abs(g).max())


@settings(max_examples=60, deadline=None)
@given(nt=st.integers(1, 4), nr=st.integers(1, 4), n=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
def test_g_matrix_poly_property(nt, nr, n, seed):
    rng = np.random.default_rng(seed)
    sc = scene(nt, nr, n, k=0)
    x, v = random_psd(rng, sc.tx_dim, 2), random_psd(rng, sc.rx_dim, 2)
    g = g_matrix(x, v, sc)
    nus = rng.uniform(-np.pi, np.pi, 8)
    p = nu_vector(nus, sc.lift_len)
    direct = np.einsum("ki,ij,kj->k", p.conj(), g, p).real
    scale = np.abs(g).sum()
    np.testing.assert_allclose(poly_coeffs(g).evaluate(nus), direct, atol=1e-12 * scale)
    lam = np.linalg.eigvalsh(g)
    assert lam[0] >= -1e-10 * max(lam[-1], 1e-300)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmimo import conic
from robustmimo.lifting import NuInterval, TrigCoeffs, poly_coeffs
from robustmimo.numerics import ContractError
from robustmimo.trigpoly import (
    ArcNonnegCert,
    build_frames,
    coeffs_from_certificate,
    default_q,
    nonneg_constraint_rows,
    verify_nonneg,
)

from conftest import random_psd


def random_cert(rng, L, interval, z2=True):
    frames = build_frames(L, interval)
    z1 = random_psd(rng, L)
    z2m = random_psd(rng, L - 1) if (z2 and L > 1) else np.zeros((L - 1, L - 1))
    return frames, ArcNonnegCert(z1, z2m, frames.Q, interval)


def test_build_frames_examples():
    f = build_frames(1, NuInterval(0.3, 1.0), Q=2)
    np.testing.assert_allclose(f.f1, [[1.0], [1.0]])
    f = build_frames(3, NuInterval(0.0, np.pi / 2), Q=5)
    assert f.f2.shape == (5, 2)
    f = build_frames(2, NuInterval(0.0, np.pi / 2), Q=4)
    np.testing.assert_allclose(f.d, [1, 0, -1, 0], atol=1e-15)
    f = build_frames(5, NuInterval(0.2, 0.7))
    assert f.Q == default_q(5) == 10
    gram = f.f1.conj().T @ f.f1
    np.testing.assert_allclose(gram, f.Q * np.eye(5), atol=1e-12)


def test_build_frames_guards():
    with pytest.raises(ContractError):
        build_frames(3, NuInterval(0.0, 0.5), Q=4)
    with pytest.raises(ContractError):
        build_frames(3, NuInterval(0.0, 0.0))


def test_zero_certificate():
    frames = build_frames(4, NuInterval(0.1, 0.4))
    cert = ArcNonnegCert(np.zeros((4, 4)), np.zeros((3, 3)), frames.Q, frames.interval)
    np.testing.assert_array_equal(coeffs_from_certificate(cert, frames), 0)


def test_sos_part_globally_nonnegative(rng):
    whole = NuInterval(0.0, np.pi - 1e-9)
    for _ in range(20):
        L = int(rng.integers(1, 7))
        frames, cert = random_cert(rng, L, NuInterval(0.4, 0.3), z2=False)
        h = coeffs_from_certificate(cert, frames)
        assert verify_nonneg(h, whole) >= -1e-8 * np.linalg.norm(h)


def test_certificate_nonnegative_on_arc(rng):
    for _ in range(20):
        L = int(rng.integers(2, 7))
        beta = float(rng.uniform(0.05, 3.0))
        alpha = float(rng.uniform(-(np.pi - beta), np.pi - beta))
        frames, cert = random_cert(rng, L, NuInterval(alpha, beta))
        h = coeffs_from_certificate(cert, frames)
        assert verify_nonneg(h / np.linalg.norm(h), frames.interval) >= -1e-8


def test_constraint_map(rng):
    frames = build_frames(4, NuInterval(-0.5, 1.1))
    arc = nonneg_constraint_rows(frames)
    g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    z1, z2 = np.zeros((4, 4)), np.zeros((3, 3))
    np.testing.assert_array_equal(arc.residual(g, z1, z2, 0.0), g)
    a1, a2 = random_psd(rng, 4), random_psd(rng, 3)
    b1, b2 = random_psd(rng, 4), random_psd(rng, 3)
    np.testing.assert_allclose(
        arc.certificate_coeffs(a1 + b1, a2 + b2),
        arc.certificate_coeffs(a1, a2) + arc.certificate_coeffs(b1, b2),
        atol=1e-12 * np.abs(arc.certificate_coeffs(a1 + b1, a2 + b2)).max(),
    )
    cert = ArcNonnegCert(a1, a2, frames.Q, frames.interval)
    ref = coeffs_from_certificate(cert, frames)
    np.testing.assert_allclose(arc.certificate_coeffs(a1, a2), ref, atol=1e-12 * np.abs(ref).max())
    np.testing.assert_allclose(arc.residual(ref + 2.0 * np.eye(4)[0], a1, a2, 2.0), 0, atol=1e-11 * np.abs(ref).max())


def test_verify_nonneg_examples():
    iv = NuInterval(0.0, 1.0)
    assert verify_nonneg([1.0, 0, 0], iv) == 1.0
    assert verify_nonneg([-1.0, 0, 0], iv) == -1.0
    assert verify_nonneg(TrigCoeffs([2.0]), iv) == 2.0
    with pytest.raises(ContractError):
        verify_nonneg([1.0], iv, grid_size=100)


def test_verify_nonneg_includes_endpoints():
    # f(nu) = 1 - cos(nu) on [0, 1] is smallest at the left endpoint, f(0) = 0
    iv = NuInterval(0.5, 0.5)
    assert abs(verify_nonneg([1.0, -0.5], iv)) < 1e-15
    assert abs(verify_nonneg([1.0, -0.5], NuInterval(0.6, 0.5)) - (1 - np.cos(0.1))) < 1e-15


def _arc_completeness(g, interval):
    L = len(g)
    arc = nonneg_constraint_rows(build_frames(L, interval))
    prog = conic.ConicProgram()
    prog.add_psd("Z1", L)
    prog.add_psd("Z2", L - 1)
    prog.add_scalar("t")
    for l in range(L):
        coeffs = {"Z1": -arc.z1_ops[l], "Z2": -arc.z2_ops[l]}
        if l == 0:
            coeffs["t"] = -1.0
        prog.add_complex_equality(coeffs, -g[l], label=f"c{l}")
    prog.maximize({"t": 1.0})
    return prog, conic.solve(prog)


def test_certificate_completeness(rng):
    # f = |q(e^{jv})|^2 + (cos(v - alpha) - cos(beta)) |r(e^{jv})|^2 is nonnegative on the arc
    for L in (2, 3, 4):
        alpha, beta = float(rng.uniform(-1, 1)), float(rng.uniform(0.3, 1.5))
        q = rng.standard_normal(L) + 1j * rng.standard_normal(L)
        r = rng.standard_normal(L - 1) + 1j * rng.standard_normal(L - 1)
        g_sos = poly_coeffs(np.outer(q, q.conj()).T).g
        rr = np.zeros((L, L), dtype=complex)
        rr[: L - 1, : L - 1] = np.outer(r, r.conj()).T
        # multiplying by cos(v - alpha) = (e^{j(v-a)} + e^{-j(v-a)})/2 shifts coefficients
        gr = poly_coeffs(rr).g
        full = np.concatenate([gr[::-1].conj()[:-1], gr])
        mult = np.zeros(2 * L - 1, dtype=complex)
        for k, c in enumerate(full):
            lag = k - (L - 1)
            for sh, w in ((1, 0.5 * np.exp(1j * alpha)), (-1, 0.5 * np.exp(-1j * alpha))):
                j = lag + sh + (L - 1)
                if 0 <= j < 2 * L - 1:
                    mult[j] += w * c
        g = g_sos + mult[L - 1 :] - np.cos(beta) * gr
        interval = NuInterval(alpha, beta)
        nu = np.linspace(interval.low, interval.high, 7)
        direct = (
            np.abs(np.exp(-1j * np.outer(nu, np.arange(L))) @ q.conj()) ** 2
            + (np.cos(nu - alpha) - np.cos(beta)) * np.abs(np.exp(-1j * np.outer(nu, np.arange(L - 1))) @ r.conj()) ** 2
        )
        np.testing.assert_allclose(TrigCoeffs(g).evaluate(nu), direct, atol=1e-10)
        _, sol = _arc_completeness(g, interval)
        assert sol.ok
        gmin = verify_nonneg(g, interval)
        assert sol["t"] >= -1e-6 * np.linalg.norm(g)
        # the certificate is exact: the best shift equals the arc minimum
        assert abs(sol["t"] - gmin) <= 1e-5 * np.linalg.norm(g)


def test_negative_polynomial_has_no_certificate():
    prog, sol = _arc_completeness(np.array([-1.0, 0.0, 0.0]), NuInterval(0.0, 1.0))
    assert sol.ok and sol["t"] < -0.99


@settings(max_examples=60, deadline=None)
@given(L=st.integers(2, 8), beta=st.floats(0.05, 3.0), frac=st.floats(-1, 1), seed=st.integers(0, 2**32 - 1))
def test_soundness_property(L, beta, frac, seed):
    rng = np.random.default_rng(seed)
    alpha = frac * (np.pi - beta)
    frames, cert = random_cert(rng, L, NuInterval(alpha, beta))
    h = coeffs_from_certificate(cert, frames)
    assert verify_nonneg(h / np.linalg.norm(h), frames.interval) >= -1e-8

"""Semidefinite certificates for trigonometric polynomials nonnegative on an arc.

A polynomial f(w) = h_0 + 2 Re sum_{l=1}^{L-1} h_l e^{-j w l} is nonnegative on
[alpha - beta, alpha + beta], 0 < beta < pi, iff h can be written as

    h = F1^H (diag(F1 Z1 F1^H) + d * diag(F2 Z2 F2^H))

with Z1 (L x L) and Z2 ((L-1) x (L-1)) Hermitian PSD, F1/F2 the first L resp.
L-1 columns of a Q-point DFT (Q >= 2L-1) and d_q = cos(2 pi q/Q - alpha) - cos(beta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from robustmimo.lifting import NuInterval, TrigCoeffs
from robustmimo.numerics import ContractError, as_matrix

DEFAULT_VERIFY_GRID = 4096


def default_q(L: int) -> int:
    """Smallest even number of DFT points satisfying Q >= 2L - 1."""
    return 2 * L


@dataclass(frozen=True)
class DftFrames:
    f1: np.ndarray
    f2: np.ndarray
    d: np.ndarray
    interval: NuInterval

    @property
    def L(self) -> int:
        return self.f1.shape[1]

    @property
    def Q(self) -> int:
        return self.f1.shape[0]


@dataclass(frozen=True)
class ArcNonnegCert:
    z1: np.ndarray
    z2: np.ndarray
    q_points: int
    interval: NuInterval


def build_frames(L: int, interval: NuInterval, Q: int | None = None) -> DftFrames:
    if Q is None:
        Q = default_q(L)
    if L < 1:
        raise ContractError("polynomial length must be >= 1")
    if Q < 2 * L - 1:
        raise ContractError(f"Q={Q} is below 2L-1={2 * L - 1}")
    if not 0.0 < interval.beta < np.pi:
        raise ContractError(f"arc half-width beta={interval.beta} must lie in (0, pi)")
    q = np.arange(Q)
    f1 = np.exp(-2j * np.pi * np.outer(q, np.arange(L)) / Q)
    d = np.cos(2 * np.pi * q / Q - interval.alpha) - np.cos(interval.beta)
    return DftFrames(f1=f1, f2=f1[:, : L - 1].copy(), d=d, interval=interval)


def _quad_diag(f: np.ndarray, z: np.ndarray) -> np.ndarray:
    if f.shape[1] == 0:
        return np.zeros(f.shape[0])
    return np.einsum("qi,ij,qj->q", f, z, f.conj()).real


def coeffs_from_certificate(cert: ArcNonnegCert, frames: DftFrames) -> np.ndarray:
    z1 = as_matrix(cert.z1)
    L = frames.L
    z2 = np.asarray(cert.z2, dtype=complex).reshape(L - 1, L - 1)
    if z1.shape != (L, L):
        raise ContractError(f"Z1 must be {L}x{L}, got {z1.shape}")
    inner = _quad_diag(frames.f1, z1) + frames.d * _quad_diag(frames.f2, z2)
    return frames.f1.conj().T @ inner


@dataclass(frozen=True)
class ArcConstraintMap:
    """Real-linear map (Z1, Z2, t) -> residuals g - t e_1 - h(Z1, Z2).

    ``z1_ops[l]`` / ``z2_ops[l]`` are matrices with h_l = tr(z1_ops[l] Z1) + tr(z2_ops[l] Z2).
    """

    z1_ops: np.ndarray
    z2_ops: np.ndarray

    @property
    def L(self) -> int:
        return self.z1_ops.shape[0]

    def certificate_coeffs(self, z1, z2) -> np.ndarray:
        h = np.einsum("lij,ji->l", self.z1_ops, np.asarray(z1, dtype=complex))
        if self.L > 1:
            h = h + np.einsum("lij,ji->l", self.z2_ops, np.asarray(z2, dtype=complex))
        return h

    def residual(self, g, z1, z2, t: float) -> np.ndarray:
        r = np.asarray(g, dtype=complex).copy()
        r[0] -= t
        return r - self.certificate_coeffs(z1, z2)


def nonneg_constraint_rows(frames: DftFrames) -> ArcConstraintMap:
    f1, f2, d = frames.f1, frames.f2, frames.d
    # h_l = sum_q conj(F1[q, l]) * (F1[q,:] Z1 F1[q,:]^H + d_q F2[q,:] Z2 F2[q,:]^H)
    w = f1.conj()
    z1_ops = np.einsum("ql,qa,qb->lab", w, f1.conj(), f1)
    z2_ops = np.einsum("ql,q,qa,qb->lab", w, d, f2.conj(), f2)
    return ArcConstraintMap(z1_ops=z1_ops, z2_ops=z2_ops)


def verify_nonneg(h, interval: NuInterval, grid_size: int = DEFAULT_VERIFY_GRID) -> float:
    """Minimum of the polynomial with coefficients ``h`` over a uniform arc grid."""
    if grid_size < 512:
        raise ContractError("verification grid needs at least 512 points")
    coeffs = h if isinstance(h, TrigCoeffs) else TrigCoeffs(h)
    nu = np.linspace(interval.low, interval.high, grid_size)
    return float(np.min(coeffs.evaluate(nu)))

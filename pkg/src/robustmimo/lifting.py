"""Lift of the SINR numerator to a trigonometric polynomial in nu = pi*sin(theta).

For X = s s^H and V = w w^H the numerator |w^H A(theta) s|^2 equals
p(nu)^H G(X, V) p(nu) with p(nu) = [1, e^{j nu}, ..., e^{j nu (L-1)}] and
L = N_T + N_R - 1.  G is linear in X (through its conjugate) and in V, which is
what makes each half of the cyclic design a semidefinite program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from robustmimo.model import Scenario, TargetSector, interference_cov_from_V
from robustmimo.numerics import ContractError, as_matrix


def build_lift(n_tx: int, n_rx: int) -> np.ndarray:
    """0/1 matrix H with a_r(theta) kron a_t(theta) = H p(pi sin theta).

    Row ``r * n_tx + t`` has its single one in column ``r + t``.
    """
    if n_tx < 1 or n_rx < 1:
        raise ContractError("array sizes must be >= 1")
    h = np.zeros((n_rx * n_tx, n_tx + n_rx - 1))
    for r in range(n_rx):
        for t in range(n_tx):
            h[r * n_tx + t, r + t] = 1.0
    return h


def nu_vector(nu, length: int) -> np.ndarray:
    """p(nu); vectorizes over ``nu`` (one row per value)."""
    return np.exp(1j * np.multiply.outer(np.asarray(nu, dtype=float), np.arange(length)))


@dataclass(frozen=True)
class NuInterval:
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta < np.pi:
            raise ContractError(f"half-width beta={self.beta} outside [0, pi)")
        if self.alpha - self.beta < -np.pi - 1e-12 or self.alpha + self.beta > np.pi + 1e-12:
            raise ContractError("interval not contained in [-pi, pi]")

    @property
    def low(self) -> float:
        return self.alpha - self.beta

    @property
    def high(self) -> float:
        return self.alpha + self.beta

    def grid(self, size: int) -> np.ndarray:
        if self.beta == 0.0:
            return np.array([self.alpha])
        return np.linspace(self.low, self.high, int(size))


def sector_to_nu(sector: TargetSector) -> NuInterval:
    """Map the angle sector to its exact nu-interval (sine is monotone on (-90, 90))."""
    lo, hi = (np.pi * np.sin(np.deg2rad(a)) for a in sector.bounds_deg)
    if sector.is_point:
        return NuInterval(alpha=float(lo), beta=0.0)
    return NuInterval(alpha=0.5 * (lo + hi), beta=0.5 * (hi - lo))


@dataclass(frozen=True)
class TrigCoeffs:
    """One-sided coefficients of f(nu) = g_0 + 2 Re sum_{l>=1} g_l e^{-j l nu}."""

    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex).ravel()
        object.__setattr__(self, "g", g)

    def __len__(self) -> int:
        return self.g.size

    def evaluate(self, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        l = np.arange(1, self.g.size)
        tail = np.exp(-1j * np.multiply.outer(nu, l)) @ self.g[1:]
        return self.g[0].real + 2.0 * tail.real

    def shifted(self, t: float) -> "TrigCoeffs":
        g = self.g.copy()
        g[0] -= t
        return TrigCoeffs(g)


def _blocks4(m: np.ndarray, n: int, k: int) -> np.ndarray:
    return m.reshape(n, k, n, k)


def g_matrix(x, v, scenario: Scenario) -> np.ndarray:
    """G(X, V) = H^T (sum_{n1,n2} V[n1,n2] kron conj(X[n1,n2])) H."""
    x, v = as_matrix(x), as_matrix(v)
    n, nt, nr = scenario.n_samples, scenario.n_tx, scenario.n_rx
    if x.shape != (n * nt, n * nt) or v.shape != (n * nr, n * nr):
        raise ContractError(f"X/V shapes {x.shape}/{v.shape} do not match the scenario")
    m = np.einsum("arbs,atbu->rtsu", _blocks4(v, n, nr), _blocks4(x, n, nt).conj())
    m = m.reshape(nr * nt, nr * nt)
    h = build_lift(nt, nr)
    return h.T @ m @ h


def poly_coeffs(g) -> TrigCoeffs:
    """g_l = sum of the l-th lower subdiagonal of G, l = 0..L-1."""
    g = as_matrix(g)
    return TrigCoeffs(np.array([np.trace(g, offset=-l) for l in range(g.shape[0])]))


def _diff_sums(m4: np.ndarray) -> dict[int, np.ndarray]:
    """For m4[n1, a, n2, b] return {d: sum_{a-b=d} m4[:, a, :, b]}."""
    k = m4.shape[1]
    out = {}
    for d in range(-(k - 1), k):
        acc = np.zeros((m4.shape[0], m4.shape[2]), dtype=complex)
        for a in range(max(0, d), min(k, k + d)):
            acc += m4[:, a, :, a - d]
        out[d] = acc
    return out


def coeff_operators_fixed_v(v, scenario: Scenario) -> np.ndarray:
    """Matrices C_l with g_l(G(U, V)) = tr(C_l U) for every Hermitian U."""
    n, nt, nr = scenario.n_samples, scenario.n_tx, scenario.n_rx
    vd = _diff_sums(_blocks4(as_matrix(v), n, nr))
    L = scenario.lift_len
    out = np.zeros((L, n, nt, n, nt), dtype=complex)
    for l in range(L):
        for t1 in range(nt):
            for t2 in range(nt):
                d = l - t1 + t2
                if d in vd:
                    out[l, :, t1, :, t2] = vd[d]
    return out.reshape(L, n * nt, n * nt)


def coeff_operators_fixed_x(x, scenario: Scenario) -> np.ndarray:
    """Matrices C_l with g_l(G(X, V)) = tr(C_l V) for every Hermitian V."""
    n, nt, nr = scenario.n_samples, scenario.n_tx, scenario.n_rx
    xd = _diff_sums(_blocks4(as_matrix(x), n, nt))
    L = scenario.lift_len
    d4 = np.zeros((L, n, nr, n, nr), dtype=complex)
    for l in range(L):
        for r1 in range(nr):
            for r2 in range(nr):
                d = l - r1 + r2
                if d in xd:
                    d4[l, :, r1, :, r2] = xd[d].conj()
    d2 = d4.reshape(L, n * nr, n * nr)
    return np.transpose(d2, (0, 2, 1))


def denominator_matrix_tx(v, scenario: Scenario) -> np.ndarray:
    """Sigma_I(V) + tr(V)/E * I, the quadratic form of the denominator in X."""
    v = as_matrix(v)
    return interference_cov_from_V(v, scenario) + (np.trace(v).real / scenario.energy) * np.eye(
        scenario.tx_dim
    )


def denominator(x, v, scenario: Scenario) -> float:
    """tr((Sigma_I(V) + tr(V)/E I) X)."""
    x, v = as_matrix(x), as_matrix(v)
    if np.trace(x).real <= 0 or np.trace(v).real <= 0:
        raise ContractError("denominator needs tr(X) > 0 and tr(V) > 0")
    return float(np.real(np.trace(denominator_matrix_tx(v, scenario) @ x)))

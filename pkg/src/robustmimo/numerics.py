"""Dense complex linear algebra and sampling helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractError(ValueError):
    """Raised when an input violates a documented precondition."""


class NotPSDError(ContractError):
    """Raised when a matrix that must be PSD has a significantly negative eigenvalue."""


@dataclass(frozen=True)
class HermitianEig:
    eigenvalues: np.ndarray  # real, descending
    eigenvectors: np.ndarray  # columns, orthonormal

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ContractError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix has non-finite entries")
    return a


def check_hermitian(m, tol: float = 1e-12) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.linalg.norm(a), 1.0)
    if np.linalg.norm(a - a.conj().T) > tol * scale:
        raise ContractError("matrix is not Hermitian")
    return a


def hermitian_part(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    return 0.5 * (a + a.conj().T)


def hermitian_eig(m) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix with eigenvalues sorted descending."""
    a = check_hermitian(m)
    w, v = np.linalg.eigh(hermitian_part(a))
    order = np.argsort(w)[::-1]
    return HermitianEig(eigenvalues=w[order], eigenvectors=v[:, order])


def _psd_eig(m, tol: float) -> HermitianEig:
    eig = hermitian_eig(m)
    lam = eig.eigenvalues
    lam_max = max(lam[0], 0.0)
    if lam[-1] < -tol * lam_max:
        raise NotPSDError(
            f"smallest eigenvalue {lam[-1]:.3e} below -{tol:g} * lambda_max ({lam_max:.3e})"
        )
    return HermitianEig(np.clip(lam, 0.0, None), eig.eigenvectors)


def psd_factor(m, tol: float = 1e-10, drop_zero: bool = False) -> np.ndarray:
    """Return F with F F^H = m, via eigendecomposition (works for rank-deficient m).

    Eigenvalues in [-tol*lambda_max, 0) are clamped to zero.  With ``drop_zero`` the
    columns belonging to eigenvalues below ``tol*lambda_max`` are removed, so the
    returned factor has as many columns as the numerical rank.
    """
    eig = _psd_eig(m, tol)
    lam, v = eig.eigenvalues, eig.eigenvectors
    f = v * np.sqrt(lam)
    if drop_zero:
        keep = lam > tol * max(lam[0], np.finfo(float).tiny)
        if not np.any(keep):
            keep[0] = True
        f = f[:, keep]
    return f


def numerical_rank(m, rel_tol: float = 1e-6, psd_tol: float = 1e-7) -> int:
    eig = _psd_eig(m, psd_tol)
    lam = eig.eigenvalues
    if lam[0] <= 0.0:
        return 0
    return int(np.count_nonzero(lam > rel_tol * lam[0]))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Independent child seeds derived from ``seed`` (stable across runs)."""
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(count)]


def sample_complex_gaussian(cov, count: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw ``count`` vectors from CN(0, cov); rows of the returned array are the samples."""
    f = psd_factor(cov, tol=1e-7)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    n = f.shape[1]
    z = (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))) / np.sqrt(2.0)
    return z @ f.T


def db(x) -> np.ndarray | float:
    return 10.0 * np.log10(x)


def from_db(x_db) -> np.ndarray | float:
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def canonical_phase(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` so its largest-magnitude entry is real and positive."""
    v = np.asarray(v, dtype=complex)
    k = int(np.argmax(np.abs(v)))
    if v[k] == 0:
        return v.copy()
    return v * (np.abs(v[k]) / v[k])

"""Colocated MIMO radar signal model.

Waveforms are stored as ``s = vec(S)`` with ``S`` of shape ``(n_tx, n_samples)``
(column-major, so ``s[n * n_tx + m]`` is transmitter ``m`` at sample ``n``), and
filters as ``w = vec(W)`` with ``W`` of shape ``(n_rx, n_samples)``.  Noise power
is normalized to one, so only SNR and INR ratios enter.  Angles are in degrees at
every public interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from robustmimo.numerics import ContractError, as_matrix, from_db


@dataclass(frozen=True)
class Interferer:
    range_offset: int
    doa_deg: float
    inr_db: float

    def __post_init__(self):
        if not -90.0 < float(self.doa_deg) < 90.0:
            raise ContractError(f"interferer DOA {self.doa_deg} outside (-90, 90) degrees")
        if int(self.range_offset) != self.range_offset:
            raise ContractError("interferer range offset must be an integer")

    @property
    def inr(self) -> float:
        return float(from_db(self.inr_db))


@dataclass(frozen=True)
class TargetSector:
    center_deg: float
    half_width_deg: float = 0.0

    def __post_init__(self):
        if self.half_width_deg < 0:
            raise ContractError("sector half-width must be >= 0")
        lo, hi = self.bounds_deg
        if not (-90.0 < lo and hi < 90.0):
            raise ContractError(f"sector [{lo}, {hi}] not inside (-90, 90) degrees")

    @property
    def bounds_deg(self) -> tuple[float, float]:
        return (self.center_deg - self.half_width_deg, self.center_deg + self.half_width_deg)

    @property
    def is_point(self) -> bool:
        return self.half_width_deg == 0.0

    def grid(self, size: int) -> np.ndarray:
        """Uniform angle grid over the sector, endpoints inclusive."""
        lo, hi = self.bounds_deg
        if self.is_point:
            return np.array([self.center_deg], dtype=float)
        return np.linspace(lo, hi, int(size))


@dataclass(frozen=True)
class Scenario:
    n_tx: int
    n_rx: int
    n_samples: int
    energy: float
    snr_db: float
    sector: TargetSector
    interferers: tuple[Interferer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "interferers", tuple(self.interferers))
        for name in ("n_tx", "n_rx", "n_samples"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be >= 1")
        if not self.energy > 0:
            raise ContractError("energy must be > 0")
        for k, intf in enumerate(self.interferers):
            if abs(intf.range_offset) >= self.n_samples:
                raise ContractError(
                    f"interferer {k}: range offset {intf.range_offset} outside "
                    f"{{-{self.n_samples - 1}, ..., {self.n_samples - 1}}}"
                )

    @property
    def snr(self) -> float:
        return float(from_db(self.snr_db))

    @property
    def tx_dim(self) -> int:
        return self.n_tx * self.n_samples

    @property
    def rx_dim(self) -> int:
        return self.n_rx * self.n_samples

    @property
    def lift_len(self) -> int:
        return self.n_tx + self.n_rx - 1

    def with_sector(self, sector: TargetSector) -> "Scenario":
        return Scenario(
            self.n_tx, self.n_rx, self.n_samples, self.energy, self.snr_db, sector, self.interferers
        )

    @cached_property
    def interferer_operators(self) -> tuple[np.ndarray, ...]:
        return tuple(interferer_operator(intf, self) for intf in self.interferers)

    @cached_property
    def inrs(self) -> np.ndarray:
        return np.array([intf.inr for intf in self.interferers], dtype=float)


def _steering(theta_deg, n: int) -> np.ndarray:
    theta = np.deg2rad(np.asarray(theta_deg, dtype=float))
    m = np.arange(n)
    return np.exp(1j * np.pi * np.multiply.outer(np.sin(theta), m))


def transmit_steering(theta_deg, n_tx: int) -> np.ndarray:
    """a_t(theta); element m is exp(j*pi*m*sin(theta)).  Vectorizes over ``theta_deg``."""
    return _steering(theta_deg, n_tx)


def receive_steering(theta_deg, n_rx: int) -> np.ndarray:
    return _steering(theta_deg, n_rx)


def shift_matrix(r: int, n: int) -> np.ndarray:
    """N x N matrix J_r with J_r[l1, l2] = 1 iff l1 - l2 == r."""
    if abs(r) >= n:
        raise ContractError(f"shift {r} out of range for n={n}")
    return np.eye(n, k=-r)


def target_operator(theta_deg: float, scenario: Scenario) -> np.ndarray:
    """A(theta) = I_N kron (a_r a_t^T)."""
    ar = receive_steering(theta_deg, scenario.n_rx)
    at = transmit_steering(theta_deg, scenario.n_tx)
    return np.kron(np.eye(scenario.n_samples), np.outer(ar, at))


def interferer_operator(intf: Interferer, scenario: Scenario) -> np.ndarray:
    """B(theta_k) = J_{r_k}^T kron (a_r a_t^T)."""
    j = shift_matrix(intf.range_offset, scenario.n_samples)
    ar = receive_steering(intf.doa_deg, scenario.n_rx)
    at = transmit_steering(intf.doa_deg, scenario.n_tx)
    return np.kron(j.T, np.outer(ar, at))


def _check_dims(s, w, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=complex).ravel()
    w = np.asarray(w, dtype=complex).ravel()
    if s.size != scenario.tx_dim or w.size != scenario.rx_dim:
        raise ContractError(
            f"expected s of length {scenario.tx_dim} and w of length {scenario.rx_dim}, "
            f"got {s.size} and {w.size}"
        )
    return s, w


def response(s, w, theta_deg, scenario: Scenario) -> np.ndarray:
    """w^H A(theta) s, vectorized over angles (uses w^H A s = a_t^T S W^H a_r)."""
    s, w = _check_dims(s, w, scenario)
    smat = s.reshape(scenario.n_samples, scenario.n_tx).T
    wmat = w.reshape(scenario.n_samples, scenario.n_rx).T
    cross = smat @ wmat.conj().T
    at = transmit_steering(np.atleast_1d(theta_deg), scenario.n_tx)
    ar = receive_steering(np.atleast_1d(theta_deg), scenario.n_rx)
    return np.einsum("gi,ij,gj->g", at, cross, ar)


def interference_cov_from_s(s, scenario: Scenario) -> np.ndarray:
    """Sigma_I(s) = sum_k INR_k B_k s s^H B_k^H."""
    s = np.asarray(s, dtype=complex).ravel()
    out = np.zeros((scenario.rx_dim, scenario.rx_dim), dtype=complex)
    for inr, b in zip(scenario.inrs, scenario.interferer_operators):
        bs = b @ s
        out += inr * np.outer(bs, bs.conj())
    return out


def interference_cov_from_X(x, scenario: Scenario) -> np.ndarray:
    """Sigma_I(X) = sum_k INR_k B_k X B_k^H, shape (N_R N, N_R N)."""
    x = as_matrix(x)
    if x.shape != (scenario.tx_dim, scenario.tx_dim):
        raise ContractError(f"X must be {scenario.tx_dim}x{scenario.tx_dim}, got {x.shape}")
    out = np.zeros((scenario.rx_dim, scenario.rx_dim), dtype=complex)
    for inr, b in zip(scenario.inrs, scenario.interferer_operators):
        out += inr * (b @ x @ b.conj().T)
    return 0.5 * (out + out.conj().T)


def interference_cov_from_V(v, scenario: Scenario) -> np.ndarray:
    """Sigma_I(V) = sum_k INR_k B_k^H V B_k, shape (N_T N, N_T N)."""
    v = as_matrix(v)
    if v.shape != (scenario.rx_dim, scenario.rx_dim):
        raise ContractError(f"V must be {scenario.rx_dim}x{scenario.rx_dim}, got {v.shape}")
    out = np.zeros((scenario.tx_dim, scenario.tx_dim), dtype=complex)
    for inr, b in zip(scenario.inrs, scenario.interferer_operators):
        out += inr * (b.conj().T @ v @ b)
    return 0.5 * (out + out.conj().T)


def sinr_linear(s, w, theta_deg, scenario: Scenario, check_energy: bool = True) -> np.ndarray:
    """Output SINR (linear) of the pair (s, w) at each angle in ``theta_deg``."""
    s, w = _check_dims(s, w, scenario)
    ww = np.vdot(w, w).real
    if ww == 0.0:
        raise ContractError("receive filter is zero; SINR undefined")
    if check_energy:
        ss = np.vdot(s, s).real
        if abs(ss - scenario.energy) > 1e-9 * scenario.energy:
            raise ContractError(f"waveform energy {ss} differs from E={scenario.energy}")
    interference = 0.0
    for inr, b in zip(scenario.inrs, scenario.interferer_operators):
        interference += inr * abs(np.vdot(w, b @ s)) ** 2
    num = scenario.snr * np.abs(response(s, w, theta_deg, scenario)) ** 2
    return num / (interference + ww)


def sinr_vectors(s, w, theta0_deg, scenario: Scenario) -> float | np.ndarray:
    """Output SINR in dB; scalar for scalar angle, array for an angle sequence."""
    out = 10.0 * np.log10(sinr_linear(s, w, theta0_deg, scenario))
    return float(out[0]) if np.ndim(theta0_deg) == 0 else out


def beampattern(s, w, theta_grid: Sequence[float], scenario: Scenario) -> np.ndarray:
    """Normalized joint beampattern |w^H A s|^2 / (N_R N_T |w|^2 |s|^2) in dB."""
    s, w = _check_dims(s, w, scenario)
    norm = np.vdot(w, w).real * np.vdot(s, s).real
    if norm == 0.0:
        raise ContractError("beampattern undefined for zero s or w")
    r = np.abs(response(s, w, np.asarray(theta_grid, dtype=float), scenario)) ** 2
    p = r / (scenario.n_rx * scenario.n_tx * norm)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.maximum(p, np.finfo(float).tiny))

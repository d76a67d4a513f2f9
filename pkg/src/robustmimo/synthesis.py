"""Recover a waveform s and filter w from a lifted design pair (X*, V*).

Three routes are provided:

* exact extraction when both covariances are numerically rank one;
* shape matching, a cyclic minimization that makes |w^H A(theta) s|^2 follow the
  relaxed response tr(X* A^H V* A) on a set of angles while keeping the SINR
  denominator no larger than its relaxed value;
* Gaussian randomization, drawing candidates from CN(0, V*) and CN(0, X*) and
  keeping the best worst-case quotient on an angle grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from robustmimo.model import (
    Scenario,
    interference_cov_from_V,
    interference_cov_from_X,
    receive_steering,
    sinr_linear,
    target_operator,
    transmit_steering,
)
from robustmimo.numerics import (
    ContractError,
    canonical_phase,
    hermitian_eig,
    hermitian_part,
    make_rng,
    numerical_rank,
    psd_factor,
    sample_complex_gaussian,
)
from robustmimo.optimizer import DesignPair

RANK_ONE = "rank-one"
QCQP = "qcqp"
RANDOMIZED = "randomized"

DEFAULT_SHAPE_POINTS = 41
DEFAULT_QCQP_ITERS = 50
DEFAULT_SAMPLES = 1000
DEFAULT_OMEGA_GRID = 181


@dataclass
class SynthesisResult:
    s: np.ndarray
    w: np.ndarray
    method: str
    achieved_worst_case_db: float
    relaxed_bound_db: float


@dataclass
class ShapeTargets:
    """Relaxed response c_m sampled at M angles of the sector, with PSD factors.

    ``factors[m]`` is Q_m with Q_m Q_m^H = A^H V* A (waveform side) or
    A X* A^H (filter side), depending on how the targets were built.
    """

    doas: np.ndarray
    c: np.ndarray
    factors: list[np.ndarray]
    side: str = "waveform"


@dataclass
class QcqpTrace:
    """Diagnostics of one shape-matching run."""

    objective: list[float] = field(default_factory=list)
    constraint: list[float] = field(default_factory=list)
    bound: float = 0.0


# ---------------------------------------------------------------- helpers


def _pair(pair: DesignPair, scenario: Scenario) -> DesignPair:
    pair.validate(scenario)
    return DesignPair(x=hermitian_part(pair.x), v=hermitian_part(pair.v))


def zeta_bound(pair: DesignPair, scenario: Scenario) -> tuple[np.ndarray, float]:
    """(Sigma_I(V*) + tr(V*)/E I, zeta*) for the waveform-side constraint."""
    d = interference_cov_from_V(pair.v, scenario) + (
        np.trace(pair.v).real / scenario.energy
    ) * np.eye(scenario.tx_dim)
    return d, float(np.trace(d @ pair.x).real)


def eta_bound(pair: DesignPair, scenario: Scenario) -> tuple[np.ndarray, float]:
    """(Sigma_I(X*) + I, eta*) for the filter-side constraint."""
    d = interference_cov_from_X(pair.x, scenario) + np.eye(scenario.rx_dim)
    return d, float(np.trace(d @ pair.v).real)


def relaxed_response(pair: DesignPair, scenario: Scenario, theta_deg) -> np.ndarray:
    """tr(X* A(theta)^H V* A(theta)) at each angle, computed blockwise.

    With A = I_N kron (a_r a_t^T) the trace is sum over (n1, n2) of
    (a_t^T X_[n2,n1] conj(a_t)) (a_r^H V_[n1,n2] a_r).
    """
    n, nt, nr = scenario.n_samples, scenario.n_tx, scenario.n_rx
    theta = np.atleast_1d(np.asarray(theta_deg, dtype=float))
    at = transmit_steering(theta, nt)
    ar = receive_steering(theta, nr)
    x4 = pair.x.reshape(n, nt, n, nt)
    v4 = pair.v.reshape(n, nr, n, nr)
    qx = np.einsum("gi,aibj,gj->gab", at, x4, at.conj())
    qv = np.einsum("gi,aibj,gj->gab", ar.conj(), v4, ar)
    return np.einsum("gba,gab->g", qx, qv).real


def relaxed_sinr(pair: DesignPair, scenario: Scenario, theta_deg) -> np.ndarray:
    """SNR tr(X* A^H V* A) / tr((Sigma_I(X*) + I) V*), linear."""
    _, eta = eta_bound(pair, scenario)
    return scenario.snr * relaxed_response(pair, scenario, theta_deg) / eta


def _principal(m: np.ndarray) -> tuple[float, np.ndarray]:
    eig = hermitian_eig(m)
    return float(max(eig.eigenvalues[0], 0.0)), eig.eigenvectors[:, 0]


def omega_grid(scenario: Scenario, size: int = DEFAULT_OMEGA_GRID) -> np.ndarray:
    return scenario.sector.grid(size)


# ---------------------------------------------------------------- rank one


def extract_rank_one(pair: DesignPair, scenario: Scenario, rel_tol: float = 1e-6):
    """(s, w) with X* = s s^H, V* = w w^H when both are numerically rank one, else None."""
    pair = _pair(pair, scenario)
    if numerical_rank(pair.x, rel_tol) != 1 or numerical_rank(pair.v, rel_tol) != 1:
        return None
    return _rank_one_waveform(pair.x, scenario), _rank_one_filter(pair.v)


def _rank_one_waveform(x: np.ndarray, scenario: Scenario) -> np.ndarray:
    _, u = _principal(x)
    return canonical_phase(np.sqrt(scenario.energy) * u)


def _rank_one_filter(v: np.ndarray) -> np.ndarray:
    lam, u = _principal(v)
    return canonical_phase(np.sqrt(lam) * u)


# ---------------------------------------------------------------- shape matching


def shape_targets(
    pair: DesignPair, scenario: Scenario, m_count: int = DEFAULT_SHAPE_POINTS, side: str = "waveform"
) -> ShapeTargets:
    """Sample c_m on M uniformly spaced angles of the sector and factor T_m."""
    if m_count < 2:
        raise ContractError("shape matching needs at least two angles")
    if side not in ("waveform", "filter"):
        raise ContractError(f"unknown side {side!r}")
    pair = _pair(pair, scenario)
    lo, hi = scenario.sector.bounds_deg
    doas = lo + np.arange(m_count) * (hi - lo) / (m_count - 1)
    c = relaxed_response(pair, scenario, doas)
    floor = -1e-10 * max(float(np.max(np.abs(c))), 1.0)
    if np.any(c < floor):
        raise ContractError(f"negative relaxed response {c.min():.3e}; pair is not PSD")
    c = np.clip(c, 0.0, None)
    factors = []
    for theta in doas:
        a = target_operator(theta, scenario)
        t = a.conj().T @ pair.v @ a if side == "waveform" else a @ pair.x @ a.conj().T
        factors.append(psd_factor(hermitian_part(t), tol=1e-7, drop_zero=True))
    return ShapeTargets(doas=doas, c=c, factors=factors, side=side)


def _shape_objective(targets: ShapeTargets, x: np.ndarray, q: list[np.ndarray]) -> float:
    return float(
        sum(
            np.linalg.norm(f.conj().T @ x - np.sqrt(cm) * qm) ** 2
            for f, cm, qm in zip(targets.factors, targets.c, q)
        )
    )


def solve_ball_qp(
    t: np.ndarray,
    b: np.ndarray,
    d: np.ndarray,
    bound: float,
    prev: np.ndarray | None = None,
    rtol: float = 1e-13,
):
    """Globally minimize x^H T x - 2 Re(b^H x) subject to x^H D x <= bound.

    T is PSD, D positive definite and b in range(T).  In coordinates y = D^{1/2} x
    rotated onto the eigenvectors of D^{-1/2} T D^{-1/2} the KKT conditions read
    y_i = c_i / (lambda_i + mu), and the multiplier mu >= 0 is found by bisection
    on the monotone constraint value.  Returns x.

    When the constraint is inactive and T is singular the minimizer is not unique;
    the null-space part is then taken from ``prev`` (shrunk if needed to stay
    feasible), so an iterate that is already optimal does not move.
    """
    lam_d, u_d = np.linalg.eigh(hermitian_part(d))
    if lam_d[0] <= 0.0:
        raise ContractError("constraint matrix must be positive definite")
    d_isqrt = (u_d / np.sqrt(lam_d)) @ u_d.conj().T
    d_sqrt = (u_d * np.sqrt(lam_d)) @ u_d.conj().T
    lam, u = np.linalg.eigh(hermitian_part(d_isqrt @ t @ d_isqrt))
    lam = np.clip(lam, 0.0, None)
    c = u.conj().T @ (d_isqrt @ b)
    scale = max(float(lam[-1]), np.finfo(float).tiny)
    null = lam <= 1e-12 * scale

    def y_of(mu: float) -> np.ndarray:
        den = lam + mu
        y = np.zeros_like(c)
        ok = den > 0.0
        y[ok] = c[ok] / den[ok]
        return y

    def back(y: np.ndarray) -> np.ndarray:
        return d_isqrt @ (u @ y)

    y0 = y_of(0.0)
    y0[null] = 0.0
    base = np.vdot(y0, y0).real
    if base <= bound:
        if prev is not None and np.any(null):
            yp = u.conj().T @ (d_sqrt @ prev)
            extra = np.where(null, yp, 0.0)
            room = bound - base
            en = np.vdot(extra, extra).real
            if en > room:
                extra = extra * np.sqrt(room / en)
            y0 = y0 + extra
        return back(y0)
    # constraint active: ||y(mu)||^2 = bound with mu > 0
    cn = float(np.linalg.norm(c))
    lo, hi = 0.0, max(cn / np.sqrt(bound), scale)
    while np.vdot(y_of(hi), y_of(hi)).real > bound:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.vdot(y_of(mid), y_of(mid)).real > bound:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    # hi is on the feasible side
    return back(y_of(hi))


def _shape_match(
    targets: ShapeTargets,
    d: np.ndarray,
    bound: float,
    init: np.ndarray,
    iters: int,
) -> tuple[np.ndarray, QcqpTrace]:
    trace = QcqpTrace(bound=bound)
    tmat = sum(f @ f.conj().T for f in targets.factors)
    x = np.asarray(init, dtype=complex)
    val = np.vdot(x, d @ x).real
    if val > bound:
        # scaling leaves every q_m unchanged, so this only makes the start feasible
        x = x * np.sqrt(bound / val)
    q = [np.zeros(f.shape[1], dtype=complex) for f in targets.factors]
    for m, f in enumerate(targets.factors):
        q[m] = _unit_or_keep(f.conj().T @ x, q[m])
    for _ in range(iters):
        b = sum(np.sqrt(cm) * (f @ qm) for f, cm, qm in zip(targets.factors, targets.c, q))
        x = solve_ball_qp(tmat, b, d, bound, prev=x)
        trace.objective.append(_shape_objective(targets, x, q))
        trace.constraint.append(float(np.vdot(x, d @ x).real))
        for m, f in enumerate(targets.factors):
            q[m] = _unit_or_keep(f.conj().T @ x, q[m])
        trace.objective.append(_shape_objective(targets, x, q))
    return x, trace


def _unit_or_keep(y: np.ndarray, prev: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(y)
    if nrm > 0.0:
        return y / nrm
    if np.linalg.norm(prev) > 0.0:
        return prev
    # any unit vector is optimal when Q_m x = 0
    e = np.zeros_like(y)
    e[0] = 1.0
    return e


def synthesize_waveform_qcqp(
    pair: DesignPair,
    scenario: Scenario,
    m_count: int = DEFAULT_SHAPE_POINTS,
    iters: int = DEFAULT_QCQP_ITERS,
    return_trace: bool = False,
):
    """Energy-E waveform whose response shape follows the relaxed one."""
    pair = _pair(pair, scenario)
    targets = shape_targets(pair, scenario, m_count, side="waveform")
    d, zeta = zeta_bound(pair, scenario)
    lam, u = _principal(pair.x)
    sbar, trace = _shape_match(targets, d, zeta, np.sqrt(lam) * u, iters)
    if np.linalg.norm(sbar) == 0.0:
        sbar = u
    s = canonical_phase(np.sqrt(scenario.energy) * sbar / np.linalg.norm(sbar))
    return (s, trace) if return_trace else s


def synthesize_filter_qcqp(
    pair: DesignPair,
    scenario: Scenario,
    m_count: int = DEFAULT_SHAPE_POINTS,
    iters: int = DEFAULT_QCQP_ITERS,
    return_trace: bool = False,
):
    """Receive filter counterpart; no renormalization since SINR is scale free in w."""
    pair = _pair(pair, scenario)
    targets = shape_targets(pair, scenario, m_count, side="filter")
    d, eta = eta_bound(pair, scenario)
    lam, u = _principal(pair.v)
    w, trace = _shape_match(targets, d, eta, np.sqrt(lam) * u, iters)
    if np.linalg.norm(w) == 0.0:
        w = np.sqrt(lam) * u
    w = canonical_phase(w)
    return (w, trace) if return_trace else w


# ---------------------------------------------------------------- randomization


def _filter_quotients(
    ws: np.ndarray, x: np.ndarray, scenario: Scenario, grid: np.ndarray
) -> np.ndarray:
    """min over the grid of w^H A X A^H w / (w^H Sigma_I(X) w + w^H w), one per row of ``ws``."""
    n, nt, nr = scenario.n_samples, scenario.n_tx, scenario.n_rx
    at = transmit_steering(grid, nt)
    ar = receive_steering(grid, nr)
    x4 = x.reshape(n, nt, n, nt)
    qx = np.einsum("gi,aibj,gj->gab", at, x4, at.conj())
    # z[j, g, a] = a_r(theta_g)^H w_j block a
    z = np.einsum("gi,jai->jga", ar.conj(), ws.reshape(-1, n, nr))
    num = np.einsum("jga,gab,jgb->jg", z.conj(), qx, z).real
    cov = interference_cov_from_X(x, scenario) + np.eye(scenario.rx_dim)
    den = np.einsum("ji,ik,jk->j", ws.conj(), cov, ws).real
    return np.min(num, axis=1) / den


def _waveform_quotients(
    ss: np.ndarray, w: np.ndarray, scenario: Scenario, grid: np.ndarray
) -> np.ndarray:
    """min over the grid of |w^H A s|^2 / (w^H Sigma_I(s) w + w^H w), one per row of ``ss``."""
    n, nt, nr = scenario.n_samples, scenario.n_tx, scenario.n_rx
    at = transmit_steering(grid, nt)
    ar = receive_steering(grid, nr)
    wmat = w.reshape(n, nr)
    # r[g, a] = a_r^H w_a (conjugated response per block)
    r = np.einsum("gi,ai->ga", ar, wmat.conj())
    resp = np.einsum("ga,gt,jat->jg", r, at, ss.reshape(-1, n, nt))
    num = np.abs(resp) ** 2
    interference = np.zeros(ss.shape[0])
    for inr, b in zip(scenario.inrs, scenario.interferer_operators):
        interference += inr * np.abs(ss @ (b.T @ w.conj())) ** 2
    return np.min(num, axis=1) / (interference + np.vdot(w, w).real)


def randomized_synthesis(
    pair: DesignPair,
    scenario: Scenario,
    r_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    grid_size: int = DEFAULT_OMEGA_GRID,
    rel_tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian randomization: filter first from CN(0, V*), then waveform from CN(0, X*)."""
    if r_samples < 1:
        raise ContractError("need at least one random sample")
    pair = _pair(pair, scenario)
    grid = omega_grid(scenario, grid_size)
    rng = make_rng(seed)
    if numerical_rank(pair.v, rel_tol) == 1:
        w = _rank_one_filter(pair.v)
    else:
        ws = sample_complex_gaussian(pair.v, r_samples, rng)
        xi = _filter_quotients(ws, pair.x, scenario, grid)
        w = canonical_phase(ws[int(np.argmax(xi))])
    if numerical_rank(pair.x, rel_tol) == 1:
        s = _rank_one_waveform(pair.x, scenario)
    else:
        ss = sample_complex_gaussian(pair.x, r_samples, rng)
        norms = np.linalg.norm(ss, axis=1)
        norms[norms == 0.0] = 1.0
        ss = np.sqrt(scenario.energy) * ss / norms[:, None]
        zeta = _waveform_quotients(ss, w, scenario, grid)
        s = canonical_phase(ss[int(np.argmax(zeta))])
    return s, w


# ---------------------------------------------------------------- evaluation


def evaluate_result(s, w, pair: DesignPair, scenario: Scenario, grid) -> tuple[float, float]:
    """(achieved, relaxed) worst-case SINR in dB over the angle grid."""
    grid = np.asarray(grid, dtype=float)
    achieved = float(np.min(sinr_linear(s, w, grid, scenario)))
    relaxed = float(np.min(relaxed_sinr(pair, scenario, grid)))
    return 10.0 * np.log10(achieved), 10.0 * np.log10(relaxed)


def synthesize(
    pair: DesignPair,
    scenario: Scenario,
    method: str,
    grid=None,
    m_count: int = DEFAULT_SHAPE_POINTS,
    iters: int = DEFAULT_QCQP_ITERS,
    r_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    omega_size: int = DEFAULT_OMEGA_GRID,
    rel_tol: float = 1e-6,
) -> SynthesisResult:
    """Run one synthesis route and score it on ``grid`` (Omega grid by default).

    ``qcqp`` uses the eigenvector of a rank-one covariance and shape matching
    otherwise, separately for the waveform and the filter.
    """
    pair = _pair(pair, scenario)
    if grid is None:
        grid = omega_grid(scenario, omega_size)
    if method == RANK_ONE:
        out = extract_rank_one(pair, scenario, rel_tol)
        if out is None:
            raise ContractError("design pair is not rank one; use qcqp or randomized")
        s, w = out
    elif method == QCQP:
        if numerical_rank(pair.x, rel_tol) == 1:
            s = _rank_one_waveform(pair.x, scenario)
        else:
            s = synthesize_waveform_qcqp(pair, scenario, m_count, iters)
        if numerical_rank(pair.v, rel_tol) == 1:
            w = _rank_one_filter(pair.v)
        else:
            w = synthesize_filter_qcqp(pair, scenario, m_count, iters)
    elif method == RANDOMIZED:
        s, w = randomized_synthesis(pair, scenario, r_samples, seed, omega_size, rel_tol)
    else:
        raise ContractError(f"unknown synthesis method {method!r}")
    achieved, relaxed = evaluate_result(s, w, pair, scenario, grid)
    return SynthesisResult(s=s, w=w, method=method, achieved_worst_case_db=achieved, relaxed_bound_db=relaxed)

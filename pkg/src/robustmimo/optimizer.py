"""Cyclic max-min SINR design over lifted covariances (X, V).

Each half-iteration is a semidefinite program: with one covariance fixed the
numerator p(nu)^H G p(nu) is linear in the other, the denominator is a trace
normalization, and "numerator >= t on the whole nu-arc" is imposed exactly
through the arc-nonnegativity certificate of :mod:`robustmimo.trigpoly`.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from robustmimo import conic
from robustmimo.conic import ConicProgram, ConicSolution, SolverSettings
from robustmimo.lifting import (
    coeff_operators_fixed_v,
    coeff_operators_fixed_x,
    denominator,
    denominator_matrix_tx,
    g_matrix,
    poly_coeffs,
    sector_to_nu,
)
from robustmimo.model import (
    Scenario,
    interference_cov_from_s,
    interference_cov_from_V,
    interference_cov_from_X,
    sinr_linear,
    target_operator,
    transmit_steering,
)
from robustmimo.numerics import ContractError, hermitian_part, make_rng, spawn_seeds
from robustmimo.trigpoly import build_frames, nonneg_constraint_rows

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max-iter"
SOLVER_FAILURE = "solver-failure"


class SolverFailure(RuntimeError):
    def __init__(self, stage: str, solution: ConicSolution):
        super().__init__(
            f"{stage}: solver returned {solution.status} ({solution.message}; "
            f"eq_res={solution.eq_residual:.2e}, psd_res={solution.psd_residual:.2e}, "
            f"gap={solution.relative_gap:.2e})"
        )
        self.stage = stage
        self.solution = solution


@dataclass(frozen=True)
class CycleSettings:
    solver: SolverSettings = field(default_factory=SolverSettings)
    increment_tol: float = 5e-3
    max_iterations: int = 150
    grid_size: int = 2001


@dataclass(frozen=True)
class DesignPair:
    x: np.ndarray
    v: np.ndarray

    def validate(self, scenario: Scenario, psd_tol: float = 1e-7) -> None:
        if self.x.shape != (scenario.tx_dim,) * 2 or self.v.shape != (scenario.rx_dim,) * 2:
            raise ContractError("design pair dimensions do not match the scenario")
        tr = np.trace(self.x).real
        if abs(tr - scenario.energy) > 1e-8 * scenario.energy:
            raise ContractError(f"tr(X) = {tr} differs from E = {scenario.energy}")
        for name, m in (("X", self.x), ("V", self.v)):
            lam = np.linalg.eigvalsh(m)
            if lam[0] < -psd_tol * max(lam[-1], 0.0):
                raise ContractError(f"{name} is not PSD (min eigenvalue {lam[0]:.3e})")


@dataclass
class CycleReport:
    t_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    terminal_status: str = MAX_ITER
    message: str = ""


@dataclass
class MultiStartResult:
    best: DesignPair
    best_t: float
    all_t: list[float]
    variation: float
    reports: list[CycleReport]
    pairs: list[DesignPair | None] = field(default_factory=list)


@dataclass
class NonrobustResult:
    s: np.ndarray
    w: np.ndarray
    sinr_db: float
    history: list[float]
    iterations: int


def variation_metric(values) -> float:
    """(max - min) / mean of the worst-case SINRs from several starts."""
    t = np.asarray(values, dtype=float)
    if t.size == 0:
        raise ContractError("variation of an empty set")
    return float((t.max() - t.min()) / t.mean())


def _require_robust(scenario: Scenario) -> None:
    if scenario.sector.is_point:
        raise ContractError(
            "the SDP cyclic design needs a sector of positive width; "
            "use nonrobust_design for a known target angle"
        )


def _normalized(m: np.ndarray) -> np.ndarray:
    m = hermitian_part(m)
    return m / np.trace(m).real


def _whitener(denom: np.ndarray) -> np.ndarray:
    lam, q = np.linalg.eigh(hermitian_part(denom))
    return (q / np.sqrt(lam)) @ q.conj().T


def _half_step(ops: np.ndarray, dim: int, denom: np.ndarray, scenario: Scenario, settings, stage: str):
    """max t s.t. g(M) - t e_1 = h(Z1, Z2), tr(denom M) = 1, M, Z1, Z2 PSD.

    Solved in whitened coordinates M = D^{-1/2} Mw D^{-1/2}, where the
    normalization becomes tr(Mw) = 1; the denominator matrices are far from
    isotropic once strong interferers are present.
    """
    L = scenario.lift_len
    frames = build_frames(L, sector_to_nu(scenario.sector))
    arc = nonneg_constraint_rows(frames)
    wht = _whitener(denom)
    ops_w = np.array([wht @ op @ wht for op in ops])
    # t is O(1) after this scaling; undone on return
    scale = float(np.max(np.abs(ops_w))) or 1.0
    ops_w /= scale
    prog = ConicProgram()
    prog.add_psd("M", dim)
    prog.add_psd("Z1", L)
    if L > 1:
        prog.add_psd("Z2", L - 1)
    prog.add_scalar("t")
    for l in range(L):
        coeffs = {"M": ops_w[l], "Z1": -arc.z1_ops[l]}
        if L > 1:
            coeffs["Z2"] = -arc.z2_ops[l]
        if l == 0:
            coeffs["t"] = -1.0
        prog.add_complex_equality(coeffs, 0.0, label=f"coeff{l}")
    prog.add_equality({"M": np.eye(dim)}, 1.0, label="normalization")
    prog.maximize({"t": 1.0})
    sol = conic.solve(prog, settings)
    if not sol.ok:
        raise SolverFailure(stage, sol)
    return hermitian_part(wht @ sol["M"] @ wht), sol["t"] * scale


def u_step(v, scenario: Scenario, settings: SolverSettings | None = None):
    """Maximize the certified worst-case SINR over X for fixed V.

    Returns ``(X, t)`` with tr(X) = E and ``t`` the worst-case SINR (linear, SNR included).
    """
    _require_robust(scenario)
    v = _normalized(np.asarray(v, dtype=complex))
    ops = coeff_operators_fixed_v(v, scenario)
    denom = denominator_matrix_tx(v, scenario)
    u, t = _half_step(ops, scenario.tx_dim, denom, scenario, settings or SolverSettings(), "u-step")
    x = scenario.energy * u / np.trace(u).real
    return hermitian_part(x), scenario.snr * t


def v_step(x, scenario: Scenario, settings: SolverSettings | None = None):
    """Maximize the certified worst-case SINR over V for fixed X (tr(X) must equal E)."""
    _require_robust(scenario)
    x = hermitian_part(np.asarray(x, dtype=complex))
    tr = np.trace(x).real
    if abs(tr - scenario.energy) > 1e-8 * scenario.energy:
        raise ContractError(f"v_step needs tr(X) = E, got {tr}")
    ops = coeff_operators_fixed_x(x, scenario)
    denom = interference_cov_from_X(x, scenario) + np.eye(scenario.rx_dim)
    v, t = _half_step(ops, scenario.rx_dim, denom, scenario, settings or SolverSettings(), "v-step")
    return v, scenario.snr * t


def sinr_over_nu(pair: DesignPair, scenario: Scenario, nu) -> np.ndarray:
    """SNR * p^H G(X,V) p / denominator(X, V) at each nu (linear)."""
    g = poly_coeffs(g_matrix(pair.x, pair.v, scenario))
    return scenario.snr * g.evaluate(nu) / denominator(pair.x, pair.v, scenario)


def worst_case_sinr(pair: DesignPair, scenario: Scenario, grid_size: int = 2001) -> float:
    """Minimum over a uniform nu-grid of the sector (endpoints included), linear scale."""
    nu = sector_to_nu(scenario.sector).grid(grid_size)
    return float(np.min(sinr_over_nu(pair, scenario, nu)))


def cyclic_design(scenario: Scenario, init_v, settings: CycleSettings | None = None):
    """Alternate u_step / v_step from ``init_v`` until the worst-case SINR stalls.

    Returns ``(DesignPair, CycleReport)``.  On solver failure the best pair found so
    far is returned with ``terminal_status == "solver-failure"``; if the very first
    step fails a :class:`SolverFailure` is raised.
    """
    _require_robust(scenario)
    settings = settings or CycleSettings()
    report = CycleReport()
    v = _normalized(np.asarray(init_v, dtype=complex))
    best: DesignPair | None = None
    prev = -np.inf
    for it in range(1, settings.max_iterations + 1):
        try:
            x, t_u = u_step(v, scenario, settings.solver)
            report.t_history.append(t_u)
            v, t_v = v_step(x, scenario, settings.solver)
            report.t_history.append(t_v)
        except SolverFailure as exc:
            report.terminal_status = SOLVER_FAILURE
            report.message = str(exc)
            log.warning("cyclic design stopped at iteration %d: %s", it, exc)
            if best is None:
                raise
            return best, report
        best = DesignPair(x=x, v=v)
        report.iterations = it
        if t_v - prev < settings.increment_tol:
            report.converged = True
            report.terminal_status = CONVERGED
            break
        prev = t_v
    return best, report


def random_init_v(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """V0 = w0 w0^H with w0 complex standard Gaussian, unit-normalized."""
    n = scenario.rx_dim
    w0 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    w0 /= np.linalg.norm(w0)
    return np.outer(w0, w0.conj())


def _one_start(args):
    scenario, seed, settings = args
    v0 = random_init_v(scenario, make_rng(seed))
    try:
        pair, report = cyclic_design(scenario, v0, settings)
    except SolverFailure as exc:
        return None, CycleReport(terminal_status=SOLVER_FAILURE, message=str(exc)), np.nan
    return pair, report, worst_case_sinr(pair, scenario, settings.grid_size)


def multi_start(
    scenario: Scenario,
    gamma: int,
    seed: int,
    settings: CycleSettings | None = None,
    workers: int = 1,
) -> MultiStartResult:
    """Run the cyclic design from ``gamma`` random initial filters and keep the best."""
    if gamma < 1:
        raise ContractError("need at least one start")
    settings = settings or CycleSettings()
    jobs = [(scenario, s, settings) for s in spawn_seeds(seed, gamma)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_start, jobs))
    else:
        results = [_one_start(j) for j in jobs]
    kept = [(p, r, t) for p, r, t in results if r.terminal_status != SOLVER_FAILURE]
    if not kept:
        raise RuntimeError("every start of the multi-start run failed in the solver")
    all_t = [t for _, _, t in kept]
    best_pair, _, best_t = max(kept, key=lambda item: item[2])
    return MultiStartResult(
        best=best_pair,
        best_t=best_t,
        all_t=all_t,
        variation=variation_metric(all_t),
        reports=[r for _, r, _ in results],
        pairs=[p for p, _, _ in results],
    )


def matched_start(scenario: Scenario) -> np.ndarray:
    """Energy-E waveform in the principal eigenspace of A(theta_C)^H A(theta_C)."""
    at = transmit_steering(scenario.sector.center_deg, scenario.n_tx)
    s = np.tile(at.conj(), scenario.n_samples)
    return s * np.sqrt(scenario.energy) / np.linalg.norm(s)


def nonrobust_design(
    scenario: Scenario, max_iterations: int = 500, rel_tol: float = 1e-6
) -> NonrobustResult:
    """Known-angle design at theta_C by closed-form alternation of w and s.

    w <- (Sigma_I(s) + I)^{-1} A s  is the MVDR filter for fixed s, and
    s <- sqrt(E) u/|u|,  u = (Sigma_I(w w^H) + |w|^2/E I)^{-1} A^H w  maximizes the
    SINR over energy-E waveforms for fixed w, so the SINR never decreases.
    """
    if not scenario.sector.is_point:
        raise ContractError("nonrobust_design expects a zero-width sector (known target angle)")
    theta = scenario.sector.center_deg
    a = target_operator(theta, scenario)
    e, eye_t, eye_r = scenario.energy, np.eye(scenario.tx_dim), np.eye(scenario.rx_dim)
    s = matched_start(scenario)
    history: list[float] = []
    prev = -np.inf
    it = 0
    for it in range(1, max_iterations + 1):
        w = np.linalg.solve(interference_cov_from_s(s, scenario) + eye_r, a @ s)
        history.append(float(sinr_linear(s, w, theta, scenario)[0]))
        vw = np.outer(w, w.conj())
        u = np.linalg.solve(
            interference_cov_from_V(vw, scenario) + (np.vdot(w, w).real / e) * eye_t, a.conj().T @ w
        )
        s = np.sqrt(e) * u / np.linalg.norm(u)
        cur = float(sinr_linear(s, w, theta, scenario)[0])
        history.append(cur)
        if cur - prev <= rel_tol * abs(cur):
            break
        prev = cur
    w = np.linalg.solve(interference_cov_from_s(s, scenario) + eye_r, a @ s)
    final = float(sinr_linear(s, w, theta, scenario)[0])
    history.append(final)
    return NonrobustResult(s=s, w=w, sinr_db=float(10 * np.log10(final)), history=history, iterations=it)

"""Small semidefinite programs with Hermitian PSD blocks.

A :class:`ConicProgram` has PSD matrix blocks (complex Hermitian or real
symmetric), scalar variables (free or nonnegative), a linear objective to be
maximized and real linear equalities

    sum_b tr(C_b M_b) + sum_s c_s x_s = rhs,    C_b Hermitian.

Complex blocks are lowered through the real embedding
T(M) = [[Re M, -Im M], [Im M, Re M]] and the program is handed to the
cvxopt cone-LP interior-point solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
import scipy.linalg

from robustmimo.numerics import ContractError, hermitian_part

log = logging.getLogger(__name__)

Coeff = Union[float, complex, np.ndarray]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"


def hermitian_embedding(m) -> np.ndarray:
    """Real symmetric 2n x 2n embedding of a Hermitian n x n matrix."""
    m = np.asarray(m, dtype=complex)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


@dataclass(frozen=True)
class PsdBlock:
    name: str
    size: int
    field: str = "complex"

    @property
    def n_params(self) -> int:
        n = self.size
        return n * n if self.field == "complex" else n * (n + 1) // 2

    @property
    def cone_size(self) -> int:
        return 2 * self.size if self.field == "complex" else self.size

    def coef_vector(self, c: np.ndarray) -> np.ndarray:
        """Coefficients of x_params in tr(C M(x)) for Hermitian C."""
        n = self.size
        c = hermitian_part(np.asarray(c, dtype=complex).reshape(n, n))
        iu = np.triu_indices(n, 1)
        parts = [np.diag(c).real, 2.0 * c[iu].real]
        if self.field == "complex":
            parts.append(2.0 * c[iu].imag)
        return np.concatenate(parts)

    def assemble(self, x: np.ndarray) -> np.ndarray:
        n = self.size
        iu = np.triu_indices(n, 1)
        k = iu[0].size
        m = np.zeros((n, n), dtype=complex if self.field == "complex" else float)
        m[np.diag_indices(n)] = x[:n]
        off = x[n : n + k].astype(m.dtype)
        if self.field == "complex":
            off = off + 1j * x[n + k : n + 2 * k]
        m[iu] = off
        m[(iu[1], iu[0])] = np.conj(off)
        return m

    def cone_basis(self) -> np.ndarray:
        """Columns vec(S(e_k)) (column-major) of the cone matrix for each parameter."""
        p = self.n_params
        out = np.empty((self.cone_size**2, p))
        e = np.zeros(p)
        for k in range(p):
            e[k] = 1.0
            m = self.assemble(e)
            s = hermitian_embedding(m) if self.field == "complex" else m
            out[:, k] = s.ravel(order="F")
            e[k] = 0.0
        return out


@dataclass(frozen=True)
class ScalarVar:
    name: str
    sign: str = "free"


@dataclass
class LinearRow:
    coeffs: dict[str, Coeff]
    rhs: float
    label: str = ""


@dataclass(frozen=True)
class SolverSettings:
    eq_tol: float = 1e-7
    psd_tol: float = 1e-7
    duality_gap_tol: float = 1e-8
    max_iterations: int = 200
    backend: str = "cvxopt"

    def __post_init__(self):
        if min(self.eq_tol, self.psd_tol, self.duality_gap_tol) <= 0 or self.max_iterations < 1:
            raise ContractError("solver tolerances and iteration limit must be positive")
        if self.backend not in BACKENDS:
            raise ContractError(f"unknown backend {self.backend!r}; choose from {sorted(BACKENDS)}")


@dataclass
class ConicSolution:
    status: str
    values: dict[str, np.ndarray | float]
    objective_value: float
    eq_residual: float = np.nan
    psd_residual: float = np.nan
    relative_gap: float = np.nan
    iterations: int = 0
    message: str = ""

    def __getitem__(self, name: str):
        return self.values[name]

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class ConicProgram:
    blocks: list[PsdBlock] = field(default_factory=list)
    scalars: list[ScalarVar] = field(default_factory=list)
    objective: dict[str, Coeff] = field(default_factory=dict)
    equalities: list[LinearRow] = field(default_factory=list)

    def _names(self) -> set[str]:
        return {b.name for b in self.blocks} | {s.name for s in self.scalars}

    def add_psd(self, name: str, size: int, field: str = "complex") -> PsdBlock:
        if name in self._names():
            raise ContractError(f"duplicate variable name {name!r}")
        if field not in ("complex", "real") or size < 1:
            raise ContractError(f"bad PSD block spec ({name}, {size}, {field})")
        blk = PsdBlock(name, int(size), field)
        self.blocks.append(blk)
        return blk

    def add_scalar(self, name: str, sign: str = "free") -> ScalarVar:
        if name in self._names():
            raise ContractError(f"duplicate variable name {name!r}")
        if sign not in ("free", "nonneg"):
            raise ContractError(f"unknown sign constraint {sign!r}")
        var = ScalarVar(name, sign)
        self.scalars.append(var)
        return var

    def maximize(self, coeffs: Mapping[str, Coeff]) -> None:
        self.objective = dict(coeffs)

    def add_equality(self, coeffs: Mapping[str, Coeff], rhs: float, label: str = "") -> None:
        self.equalities.append(LinearRow(dict(coeffs), float(rhs), label))

    def add_complex_equality(
        self, coeffs: Mapping[str, Coeff], rhs: complex = 0.0, label: str = ""
    ) -> None:
        """Add sum_b tr(A_b M_b) + sum_s a_s x_s = rhs for complex A_b, a_s, rhs (two real rows)."""
        re: dict[str, Coeff] = {}
        im: dict[str, Coeff] = {}
        for name, a in coeffs.items():
            if np.ndim(a) == 0:
                re[name] = float(np.real(a))
                im[name] = float(np.imag(a))
            else:
                a = np.asarray(a, dtype=complex)
                re[name] = 0.5 * (a + a.conj().T)
                im[name] = (a - a.conj().T) / 2j
        self.add_equality(re, float(np.real(rhs)), label + ".re")
        # an identically-real constraint leaves only roundoff in its imaginary row
        mag = max((float(np.max(np.abs(a))) for a in coeffs.values()), default=0.0)
        im_mag = max((float(np.max(np.abs(a))) for a in im.values()), default=0.0)
        if im_mag > 1e-12 * mag or abs(np.imag(rhs)) > 1e-12 * max(1.0, abs(rhs)):
            self.add_equality(im, float(np.imag(rhs)), label + ".im")

    def validate(self) -> None:
        known = self._names()
        rows = list(self.equalities) + [LinearRow(self.objective, 0.0, "objective")]
        sizes = {b.name: b.size for b in self.blocks}
        for row in rows:
            for name, c in row.coeffs.items():
                if name not in known:
                    raise ContractError(f"{row.label or 'row'} references undeclared {name!r}")
                if name in sizes and np.shape(c) != (sizes[name], sizes[name]):
                    raise ContractError(f"{row.label}: coefficient shape for {name!r} is {np.shape(c)}")
                if name not in sizes and np.ndim(c) != 0:
                    raise ContractError(f"{row.label}: scalar {name!r} needs a scalar coefficient")

    # lowering ----------------------------------------------------------------

    def _layout(self) -> dict[str, slice]:
        out, pos = {}, 0
        for b in self.blocks:
            out[b.name] = slice(pos, pos + b.n_params)
            pos += b.n_params
        for s in self.scalars:
            out[s.name] = slice(pos, pos + 1)
            pos += 1
        return out

    def _row_vector(self, coeffs: Mapping[str, Coeff], layout, n: int) -> np.ndarray:
        v = np.zeros(n)
        blocks = {b.name: b for b in self.blocks}
        for name, c in coeffs.items():
            if name in blocks:
                v[layout[name]] += blocks[name].coef_vector(c)
            else:
                v[layout[name]] += float(np.real(c))
        return v

    def lower(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[str, slice]]:
        """Objective vector c (maximize c^T x), equality matrix A and rhs b."""
        self.validate()
        layout = self._layout()
        n = sum(b.n_params for b in self.blocks) + len(self.scalars)
        c = self._row_vector(self.objective, layout, n)
        a = np.array([self._row_vector(r.coeffs, layout, n) for r in self.equalities]).reshape(-1, n)
        b = np.array([r.rhs for r in self.equalities], dtype=float)
        return c, a, b, layout

    def unpack(self, x: np.ndarray, layout=None) -> dict[str, np.ndarray | float]:
        layout = layout or self._layout()
        vals: dict[str, np.ndarray | float] = {}
        for blk in self.blocks:
            vals[blk.name] = blk.assemble(x[layout[blk.name]])
        for s in self.scalars:
            vals[s.name] = float(x[layout[s.name]][0])
        return vals

    def dump(self, path) -> None:
        """Write the program as text: variable table, then 'row col value' triplets.

        Row 0 is the objective (maximized); rows 1..m are equalities with their rhs
        in the 'rhs' section.  Columns index the real parameter vector (Hermitian
        blocks: diagonal, then Re and Im of the strict upper triangle, row-major).
        """
        c, a, b, layout = self.lower()
        lines = ["# robustmimo conic program v1", "[variables]"]
        for blk in self.blocks:
            sl = layout[blk.name]
            lines.append(f"psd {blk.name} size={blk.size} field={blk.field} cols={sl.start}:{sl.stop}")
        for s in self.scalars:
            lines.append(f"scalar {s.name} sign={s.sign} col={layout[s.name].start}")
        lines.append("[triplets]")
        full = np.vstack([c[None, :], a])
        for i, j in zip(*np.nonzero(full)):
            lines.append(f"{i} {j} {full[i, j]:.17g}")
        lines.append("[rhs]")
        lines.extend(f"{i + 1} {v:.17g}" for i, v in enumerate(b))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _presolve_equalities(a: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    """Row-scale, drop dependent rows; returns (A, b, consistent)."""
    if a.shape[0] == 0:
        return a, b, True
    scale = np.max(np.abs(a), axis=1)
    zero = scale == 0.0
    if np.any(np.abs(b[zero]) > tol):
        return a, b, False
    a, b, scale = a[~zero], b[~zero], scale[~zero]
    a = a / scale[:, None]
    b = b / scale
    if a.shape[0] == 0:
        return a, b, True
    _, r, piv = scipy.linalg.qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.count_nonzero(diag > tol * diag[0] * max(a.shape)))
    keep = np.sort(piv[:rank])
    a_ind, b_ind = a[keep], b[keep]
    if rank < a.shape[0]:
        x0 = np.linalg.lstsq(a_ind, b_ind, rcond=None)[0]
        if np.linalg.norm(a @ x0 - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
            return a, b, False
    return a_ind, b_ind, True


def _check_solution(program: ConicProgram, vals, a_full, b_full, x) -> tuple[float, float]:
    rnorm = np.abs(a_full @ x - b_full)
    rscale = np.maximum(1.0, np.abs(b_full))
    if a_full.shape[0]:
        rowmax = np.max(np.abs(a_full), axis=1)
        rowmax[rowmax == 0] = 1.0
        eq_res = float(np.max(rnorm / (rowmax * rscale)))
    else:
        eq_res = 0.0
    psd_res = 0.0
    for blk in program.blocks:
        lam = np.linalg.eigvalsh(vals[blk.name])
        scale = max(abs(lam[-1]), 1.0)
        psd_res = min(psd_res, lam[0] / scale)
    for s in program.scalars:
        if s.sign == "nonneg":
            psd_res = min(psd_res, vals[s.name])
    return eq_res, psd_res


def _svec_basis(blk: PsdBlock) -> np.ndarray:
    """Rows: upper-triangle entries (column-major) of the cone matrix, off-diagonals times sqrt(2)."""
    full = blk.cone_basis()
    n = blk.cone_size
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    idx = np.array(cols) * n + np.array(rows)  # column-major position of (i, j)
    weights = np.where(np.array(rows) == np.array(cols), 1.0, np.sqrt(2.0))
    return full[idx] * weights[:, None]


def _cone_rows(program: ConicProgram, layout, n: int, triangle: bool):
    nonneg = [layout[s.name].start for s in program.scalars if s.sign == "nonneg"]
    lin = np.zeros((len(nonneg), n))
    for k, col in enumerate(nonneg):
        lin[k, col] = -1.0
    psd = []
    for blk in program.blocks:
        basis = _svec_basis(blk) if triangle else blk.cone_basis()
        rows = np.zeros((basis.shape[0], n))
        rows[:, layout[blk.name]] = -basis
        psd.append(rows)
    return lin, psd


def _lp_settings(settings: SolverSettings) -> dict:
    return {
        "max_iter": settings.max_iterations,
        "tol_gap_rel": settings.duality_gap_tol,
        "tol_gap_abs": 1e-12,
        "tol_feas": min(settings.eq_tol, 1e-9),
    }


def _run_clarabel(c, a, b, lin, psd, blocks, settings: SolverSettings):
    import clarabel
    import scipy.sparse as sp

    n = c.size
    mats = [a, lin] + psd
    amat = sp.csc_matrix(np.vstack([m.reshape(-1, n) for m in mats]))
    rhs = np.concatenate([b, np.zeros(lin.shape[0])] + [np.zeros(m.shape[0]) for m in psd])
    cones = []
    if a.shape[0]:
        cones.append(clarabel.ZeroConeT(a.shape[0]))
    if lin.shape[0]:
        cones.append(clarabel.NonnegativeConeT(lin.shape[0]))
    cones.extend(clarabel.PSDTriangleConeT(blk.cone_size) for blk in blocks)
    opts = clarabel.DefaultSettings()
    opts.verbose = bool(int(__import__("os").environ.get("RM_SOLVER_VERBOSE", "0")))
    opts.max_threads = 1
    for key, val in _lp_settings(settings).items():
        setattr(opts, key, val)
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), -c, amat, rhs, cones, opts)
    sol = solver.solve()
    status = str(sol.status)
    if "PrimalInfeasible" in status:
        return INFEASIBLE, None, status, sol.iterations, np.nan
    if "DualInfeasible" in status:
        return UNBOUNDED, None, status, sol.iterations, np.nan
    gap = abs(sol.obj_val - sol.obj_val_dual) / max(1.0, abs(sol.obj_val))
    return None, np.asarray(sol.x), status, sol.iterations, gap


def _run_cvxopt(c, a, b, lin, psd, blocks, settings: SolverSettings):
    import cvxopt
    from cvxopt import solvers

    g = np.vstack([lin] + psd)
    h = np.zeros(g.shape[0])
    opts = {
        "show_progress": False,
        "maxiters": settings.max_iterations,
        "abstol": 1e-12,
        "reltol": settings.duality_gap_tol,
        "feastol": min(settings.eq_tol, 1e-8),
        "refinement": 2,
    }
    kwargs = {"A": cvxopt.matrix(a), "b": cvxopt.matrix(b)} if a.shape[0] else {}
    dims = {"l": lin.shape[0], "q": [], "s": [blk.cone_size for blk in blocks]}
    try:
        res = solvers.conelp(
            cvxopt.matrix(-c), cvxopt.matrix(g), cvxopt.matrix(h), dims, options=opts, **kwargs
        )
    except (ValueError, ArithmeticError) as exc:
        return NUMERICAL_FAILURE, None, str(exc), 0, np.nan
    status = res["status"]
    if status == "primal infeasible":
        return INFEASIBLE, None, status, res["iterations"], np.nan
    if status == "dual infeasible":
        return UNBOUNDED, None, status, res["iterations"], np.nan
    gap = res.get("relative gap")
    if gap is None:
        gap = abs(res["gap"]) / max(1.0, abs(res["primal objective"]))
    return None, np.array(res["x"]).ravel(), status, res["iterations"], float(gap)


BACKENDS = {"clarabel": _run_clarabel, "cvxopt": _run_cvxopt}


def solve(
    program: ConicProgram, settings: SolverSettings | None = None, backend: str | None = None
) -> ConicSolution:
    """Solve ``program`` with a primal-dual interior-point method.

    ``backend`` selects cvxopt's cone-LP solver or Clarabel; it defaults to
    ``settings.backend`` (cvxopt).  The
    returned status is ``optimal`` only if, on the original unscaled data, the
    equality residual and PSD violation are within ``settings`` and the relative
    duality gap is below ``settings.duality_gap_tol``.
    """
    settings = settings or SolverSettings()
    backend = backend or settings.backend
    if backend not in BACKENDS:
        raise ContractError(f"unknown backend {backend!r}")
    c, a_full, b_full, layout = program.lower()
    n = c.size
    a, b, consistent = _presolve_equalities(a_full, b_full)
    if not consistent:
        return ConicSolution(INFEASIBLE, {}, np.nan, message="inconsistent linear equalities")
    if not program.blocks and not any(s.sign == "nonneg" for s in program.scalars):
        raise ContractError("program has no cone constraints")
    lin, psd = _cone_rows(program, layout, n, triangle=(backend == "clarabel"))
    cscale = float(np.max(np.abs(c))) or 1.0
    early, x, message, iters, gap = BACKENDS[backend](c / cscale, a, b, lin, psd, program.blocks, settings)
    if early is not None:
        value = np.inf if early == UNBOUNDED else np.nan
        return ConicSolution(early, {}, value, iterations=int(iters), message=message)
    vals = program.unpack(x, layout)
    eq_res, psd_res = _check_solution(program, vals, a_full, b_full, x)
    ok = eq_res <= settings.eq_tol and psd_res >= -settings.psd_tol and gap <= settings.duality_gap_tol
    return ConicSolution(
        status=OPTIMAL if ok else NUMERICAL_FAILURE,
        values=vals,
        objective_value=float(c @ x),
        eq_residual=eq_res,
        psd_residual=psd_res,
        relative_gap=float(gap),
        iterations=int(iters),
        message=message,
    )

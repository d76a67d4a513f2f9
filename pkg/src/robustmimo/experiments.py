"""Experiment commands as pure functions of (config, seed).

Each command returns :class:`ResultTable` objects (and small summary dicts); the
CLI only handles argument parsing and file I/O.  Tables hold real-valued columns
and are written with 17 significant digits so reruns are byte identical.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from robustmimo import __version__
from robustmimo.config import ExperimentConfig
from robustmimo.conic import SolverSettings
from robustmimo.lifting import sector_to_nu
from robustmimo.model import Scenario, TargetSector, beampattern, sinr_linear
from robustmimo.numerics import ContractError, numerical_rank, spawn_seeds
from robustmimo.optimizer import (
    CycleSettings,
    DesignPair,
    SOLVER_FAILURE,
    MultiStartResult,
    multi_start,
    nonrobust_design,
)
from robustmimo import synthesis as syn

log = logging.getLogger(__name__)

DESIGN_FILE = "design.npz"
# floor for dB conversion of exact zeros (keeps every emitted value finite)
DB_FLOOR = -300.0


class MissingInputError(ContractError):
    pass


@dataclass
class ResultTable:
    columns: dict[str, np.ndarray]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(np.asarray(v)) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ContractError(f"columns of unequal length: {sorted(lengths)}")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        for name, col in self.columns.items():
            if not np.all(np.isfinite(col)):
                raise ContractError(f"column {name} has non-finite values")

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __len__(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def to_csv(self) -> str:
        lines = [",".join(self.names)]
        data = np.column_stack([self.columns[n] for n in self.names]) if self.columns else []
        for row in data:
            lines.append(",".join("%.17g" % v for v in row))
        return "\n".join(lines) + "\n"

    def write(self, path: Path, with_meta: bool = True) -> None:
        path.write_text(self.to_csv(), newline="\n")
        if with_meta:
            meta = dict(self.metadata, columns=self.names, rows=len(self))
            path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def _db(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(x), DB_FLOOR)


def metadata(cfg: ExperimentConfig, command: str) -> dict[str, Any]:
    return {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.run.seed,
        "code_version": __version__,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def cycle_settings(cfg: ExperimentConfig) -> CycleSettings:
    s = cfg.run.solver
    return CycleSettings(
        solver=SolverSettings(
            eq_tol=s.eq_tol,
            psd_tol=s.psd_tol,
            duality_gap_tol=s.duality_gap_tol,
            max_iterations=s.max_iterations,
            backend=s.backend,
        ),
        increment_tol=cfg.run.increment_tol,
        max_iterations=cfg.run.max_iterations,
        grid_size=cfg.run.certify_points,
    )


def certify_angles(scenario: Scenario, points: int) -> np.ndarray:
    """Angles (deg) of the uniform nu-grid used for worst-case values."""
    nu = sector_to_nu(scenario.sector).grid(points)
    return np.rad2deg(np.arcsin(np.clip(nu / np.pi, -1.0, 1.0)))


def worst_case_db(s, w, scenario: Scenario, points: int) -> float:
    return float(_db(np.min(sinr_linear(s, w, certify_angles(scenario, points), scenario))))


@dataclass
class Design:
    """Robust and non-robust waveform/filter pairs for one scenario."""

    scenario: Scenario
    s_nonrobust: np.ndarray
    w_nonrobust: np.ndarray
    pair: DesignPair | None = None
    s_robust: np.ndarray | None = None
    w_robust: np.ndarray | None = None
    robust_t: float = np.nan
    robust_method: str = ""
    multistart: MultiStartResult | None = None

    @property
    def has_robust(self) -> bool:
        return self.pair is not None


def point_scenario(scenario: Scenario) -> Scenario:
    return scenario.with_sector(TargetSector(scenario.sector.center_deg, 0.0))


def vectors_from_pair(pair: DesignPair, scenario: Scenario, cfg: ExperimentConfig):
    """(s, w, method): exact extraction when rank one, shape matching otherwise."""
    sy = cfg.run.synthesis
    method = syn.RANK_ONE if syn.extract_rank_one(pair, scenario, sy.rank_tol) else syn.QCQP
    res = syn.synthesize(
        pair,
        scenario,
        method,
        m_count=sy.shape_points,
        iters=sy.qcqp_iters,
        omega_size=sy.omega_points,
        rel_tol=sy.rank_tol,
    )
    return res.s, res.w, method


def run_design(cfg: ExperimentConfig, scenario: Scenario | None = None, starts: int | None = None) -> Design:
    scenario = scenario or cfg.scenario
    nr = nonrobust_design(point_scenario(scenario))
    design = Design(scenario=scenario, s_nonrobust=nr.s, w_nonrobust=nr.w)
    if scenario.sector.is_point:
        log.info("zero-width sector: robust design skipped, the known-angle design is optimal")
        return design
    ms = multi_start(
        scenario,
        starts or cfg.run.design_starts,
        cfg.run.seed,
        cycle_settings(cfg),
        workers=cfg.run.workers,
    )
    s, w, method = vectors_from_pair(ms.best, scenario, cfg)
    design.pair = ms.best
    design.s_robust, design.w_robust = s, w
    design.robust_t = ms.best_t
    design.robust_method = method
    design.multistart = ms
    return design


# ---------------------------------------------------------------- design


def cmd_design(cfg: ExperimentConfig):
    """Robust vs non-robust SINR over the sector; returns (table, summary, design)."""
    d = run_design(cfg)
    sc = cfg.scenario
    theta = sc.sector.grid(cfg.run.curve_points)
    cols = {"theta_deg": theta}
    nr_curve = sinr_linear(d.s_nonrobust, d.w_nonrobust, theta, sc)
    summary: dict[str, Any] = {
        "nonrobust_worst_case_db": worst_case_db(d.s_nonrobust, d.w_nonrobust, sc, cfg.run.certify_points),
        "nonrobust_peak_db": float(_db(nr_curve.max())),
    }
    if d.has_robust:
        rob_curve = sinr_linear(d.s_robust, d.w_robust, theta, sc)
        cols["sinr_robust_db"] = _db(rob_curve)
        summary.update(
            robust_worst_case_db=worst_case_db(d.s_robust, d.w_robust, sc, cfg.run.certify_points),
            robust_relaxed_worst_case_db=float(_db(d.robust_t)),
            robust_peak_db=float(_db(rob_curve.max())),
            robust_synthesis=d.robust_method,
            rank_x=numerical_rank(d.pair.x, cfg.run.synthesis.rank_tol),
            rank_v=numerical_rank(d.pair.v, cfg.run.synthesis.rank_tol),
            starts=len(d.multistart.all_t),
            iterations=[r.iterations for r in d.multistart.reports],
            terminal_status=[r.terminal_status for r in d.multistart.reports],
        )
    else:
        summary["note"] = "zero-width sector: robust design not run; only the known-angle design is reported"
    cols["sinr_nonrobust_db"] = _db(nr_curve)
    table = ResultTable(cols, metadata(cfg, "design"))
    return table, summary, d


def save_design(d: Design, path: Path, cfg: ExperimentConfig) -> None:
    arrays = {
        "s_nonrobust": d.s_nonrobust,
        "w_nonrobust": d.w_nonrobust,
        "config_sha256": np.array(cfg.digest()),
    }
    if d.has_robust:
        arrays.update(
            x=d.pair.x, v=d.pair.v, s_robust=d.s_robust, w_robust=d.w_robust, robust_t=np.array(d.robust_t)
        )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_design(path: Path, cfg: ExperimentConfig) -> Design:
    if not path.exists():
        raise MissingInputError(f"design file {path} not found; run the design command first")
    with np.load(path) as z:
        if str(z["config_sha256"]) != cfg.digest():
            log.warning("design file %s was produced from a different config", path)
        d = Design(scenario=cfg.scenario, s_nonrobust=z["s_nonrobust"], w_nonrobust=z["w_nonrobust"])
        if "x" in z:
            d.pair = DesignPair(x=z["x"], v=z["v"])
            d.s_robust, d.w_robust = z["s_robust"], z["w_robust"]
            d.robust_t = float(z["robust_t"])
    return d


# ---------------------------------------------------------------- beampattern


def cmd_beampattern(cfg: ExperimentConfig, d: Design) -> ResultTable:
    """Joint beampattern P(theta) in dB over [-90, 90] degrees, endpoints included."""
    theta = np.linspace(-90.0, 90.0, cfg.run.beampattern_points)
    cols = {"theta_deg": theta}
    if d.has_robust:
        cols["p_robust_db"] = np.maximum(beampattern(d.s_robust, d.w_robust, theta, cfg.scenario), DB_FLOOR)
    cols["p_nonrobust_db"] = np.maximum(
        beampattern(d.s_nonrobust, d.w_nonrobust, theta, cfg.scenario), DB_FLOOR
    )
    return ResultTable(cols, metadata(cfg, "beampattern"))


def null_depths(s, w, scenario: Scenario, points: int = 361) -> np.ndarray:
    """P(theta_k) minus the in-sector peak of P, in dB, for each interferer DOA."""
    doas = np.array([i.doa_deg for i in scenario.interferers], dtype=float)
    peak = np.max(beampattern(s, w, scenario.sector.grid(points), scenario))
    return beampattern(s, w, doas, scenario) - peak


# ---------------------------------------------------------------- sweep


def cmd_sweep_uncertainty(cfg: ExperimentConfig):
    """Worst-case SINR of both designs for each sector half-width in ``deltas_deg``."""
    base = cfg.scenario
    rows = {"delta_deg": [], "robust_worst_case_db": [], "nonrobust_worst_case_db": []}
    nr = nonrobust_design(point_scenario(base))
    for delta in cfg.run.deltas_deg:
        sc = base.with_sector(TargetSector(base.sector.center_deg, float(delta)))
        nr_wc = worst_case_db(nr.s, nr.w, sc, cfg.run.certify_points)
        if sc.sector.is_point:
            rob_wc = nr_wc
        else:
            d = run_design(cfg, sc)
            rob_wc = worst_case_db(d.s_robust, d.w_robust, sc, cfg.run.certify_points)
        rows["delta_deg"].append(float(delta))
        rows["robust_worst_case_db"].append(rob_wc)
        rows["nonrobust_worst_case_db"].append(nr_wc)
    table = ResultTable(rows, metadata(cfg, "sweep-uncertainty"))
    r = np.array(rows["robust_worst_case_db"])
    n = np.array(rows["nonrobust_worst_case_db"])
    summary = {
        "robust_drop_db": float(r[0] - r[-1]),
        "nonrobust_drop_db": float(n[0] - n[-1]),
        "robust_non_increasing": bool(np.all(np.diff(r) <= 0.1)),
    }
    return table, summary


# ---------------------------------------------------------------- multistart


def cmd_multistart(cfg: ExperimentConfig):
    """Per-start relaxed worst-case SINR and the variation metric."""
    sc = cfg.scenario
    if sc.sector.is_point:
        raise ContractError("multistart needs a sector of positive width")
    gamma = cfg.run.multistart_starts
    ms = multi_start(sc, gamma, cfg.run.seed, cycle_settings(cfg), workers=cfg.run.workers)
    # all_t lists the starts that did not end in solver failure, in start order
    ok = [i for i, r in enumerate(ms.reports) if r.terminal_status != SOLVER_FAILURE]
    t = np.array(ms.all_t, dtype=float)
    table = ResultTable(
        {
            "start": np.array(ok, dtype=float),
            "worst_case_sinr": t,
            "worst_case_db": _db(t),
            "iterations": np.array([ms.reports[i].iterations for i in ok], dtype=float),
            "converged": np.array([float(ms.reports[i].converged) for i in ok]),
        },
        dict(metadata(cfg, "multistart"), start_seeds=spawn_seeds(cfg.run.seed, gamma)),
    )
    summary = {
        "gamma": gamma,
        "completed": len(ok),
        "variation": ms.variation,
        "best_db": float(_db(ms.best_t)),
        "terminal_status": [r.terminal_status for r in ms.reports],
    }
    return table, summary


# ---------------------------------------------------------------- synthesis


def mixed_pair(a: DesignPair, b: DesignPair, weight: float = 0.5) -> DesignPair:
    """Convex combination of two pairs, with each V scaled to unit trace first."""
    va = a.v / np.trace(a.v).real
    vb = b.v / np.trace(b.v).real
    return DesignPair(x=(1 - weight) * a.x + weight * b.x, v=(1 - weight) * va + weight * vb)


def synthesis_pair(cfg: ExperimentConfig, d: Design | None) -> DesignPair:
    if cfg.run.synthesis.pair == "design":
        if d is None or not d.has_robust:
            raise MissingInputError("no robust design pair available for synthesis")
        return d.pair
    ms = multi_start(cfg.scenario, 2, cfg.run.seed, cycle_settings(cfg), workers=cfg.run.workers)
    if any(p is None for p in ms.pairs):
        raise ContractError("could not build the mixed pair: a start failed")
    return mixed_pair(ms.pairs[0], ms.pairs[1])


def cmd_synthesize(cfg: ExperimentConfig, d: Design | None):
    """SINR curves for shape matching (Method 1), randomization (Method 2) and the relaxed bound."""
    sc = cfg.scenario
    if sc.sector.is_point:
        raise ContractError("synthesis needs a robust design (sector of positive width)")
    sy = cfg.run.synthesis
    pair = synthesis_pair(cfg, d)
    theta = sc.sector.grid(cfg.run.curve_points)
    common = dict(grid=theta, m_count=sy.shape_points, iters=sy.qcqp_iters, omega_size=sy.omega_points, rel_tol=sy.rank_tol)
    m1 = syn.synthesize(pair, sc, syn.QCQP, **common)
    seed = spawn_seeds(cfg.run.seed, 1)[0]
    m2 = syn.synthesize(pair, sc, syn.RANDOMIZED, r_samples=sy.samples, seed=seed, **common)
    cols = {
        "theta_deg": theta,
        "sinr_method1_db": _db(sinr_linear(m1.s, m1.w, theta, sc)),
        "sinr_method2_db": _db(sinr_linear(m2.s, m2.w, theta, sc)),
        "sinr_relaxed_db": _db(syn.relaxed_sinr(pair, sc, theta)),
    }
    table = ResultTable(cols, metadata(cfg, "synthesize"))
    summary = {
        "pair": sy.pair,
        "rank_x": numerical_rank(pair.x, sy.rank_tol),
        "rank_v": numerical_rank(pair.v, sy.rank_tol),
        "method1_worst_case_db": m1.achieved_worst_case_db,
        "method2_worst_case_db": m2.achieved_worst_case_db,
        "relaxed_worst_case_db": m1.relaxed_bound_db,
    }
    return table, summary


"""Experiment configuration: a versioned YAML schema with strict key checking.

A config has three blocks::

    version: 1
    scenario: {n_tx, n_rx, n_samples, energy, snr_db, sector: {...}, interferers: [...]}
    run: {seed, design_starts, multistart_starts, deltas_deg, ..., solver: {...}, synthesis: {...}}
    output: {directory, formats}

Unknown keys anywhere are errors.  Values omitted from a file fall back to the
preset chosen with ``--scale`` (``desk`` by default).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from robustmimo.model import Interferer, Scenario, TargetSector
from robustmimo.numerics import ContractError

SCHEMA_VERSION = 1


class ConfigError(ContractError):
    """Invalid configuration; ``path`` names the offending field (dotted)."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class SolverBlock:
    backend: str = "cvxopt"
    eq_tol: float = 1e-7
    psd_tol: float = 1e-7
    duality_gap_tol: float = 1e-8
    max_iterations: int = 200


@dataclass(frozen=True)
class SynthesisBlock:
    pair: str = "design"  # design | mix
    shape_points: int = 41
    qcqp_iters: int = 50
    samples: int = 1000
    omega_points: int = 181
    rank_tol: float = 1e-6


@dataclass(frozen=True)
class RunBlock:
    seed: int = 0
    design_starts: int = 3
    multistart_starts: int = 10
    deltas_deg: tuple[float, ...] = (2.0, 6.0, 10.0, 14.0)
    increment_tol: float = 3e-5
    max_iterations: int = 150
    curve_points: int = 361
    certify_points: int = 2001
    beampattern_points: int = 361
    workers: int = 1
    solver: SolverBlock = field(default_factory=SolverBlock)
    synthesis: SynthesisBlock = field(default_factory=SynthesisBlock)


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    formats: tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    run: RunBlock = field(default_factory=RunBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    version: int = SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "scenario": scenario_to_dict(self.scenario),
            "run": _plain(dataclasses.asdict(self.run)),
            "output": _plain(dataclasses.asdict(self.output)),
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (seed included)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, seed=int(seed)))

    def with_output(self, directory: str) -> "ExperimentConfig":
        return dataclasses.replace(
            self, output=dataclasses.replace(self.output, directory=str(directory))
        )


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    return {
        "n_tx": sc.n_tx,
        "n_rx": sc.n_rx,
        "n_samples": sc.n_samples,
        "energy": sc.energy,
        "snr_db": sc.snr_db,
        "sector": {"center_deg": sc.sector.center_deg, "half_width_deg": sc.sector.half_width_deg},
        "interferers": [
            {"range_offset": i.range_offset, "doa_deg": i.doa_deg, "inr_db": i.inr_db}
            for i in sc.interferers
        ],
    }


# ---------------------------------------------------------------- presets


def desk_scenario(half_width_deg: float = 10.0) -> Scenario:
    """Small scene used by the tests: 2x2 array, 4 samples, two interferers."""
    return Scenario(
        n_tx=2,
        n_rx=2,
        n_samples=4,
        energy=8.0,
        snr_db=-15.0,
        sector=TargetSector(0.0, half_width_deg),
        interferers=(Interferer(0, -40.0, 30.0), Interferer(1, 50.0, 30.0)),
    )


def paper_scenario(n_tx: int = 4, n_rx: int = 4, center_deg: float = 0.0) -> Scenario:
    """Full scene: 30 interferers on {-2..2} x {-60,-50,-40,40,60,70} deg, E = N = 20."""
    interferers = tuple(
        Interferer(r, doa, 30.0)
        for r in range(-2, 3)
        for doa in (-60.0, -50.0, -40.0, 40.0, 60.0, 70.0)
    )
    return Scenario(
        n_tx=n_tx,
        n_rx=n_rx,
        n_samples=20,
        energy=20.0,
        snr_db=-15.0,
        sector=TargetSector(center_deg, 10.0),
        interferers=interferers,
    )


def preset(scale: str) -> ExperimentConfig:
    if scale == "desk":
        return ExperimentConfig(scenario=desk_scenario())
    if scale == "paper":
        run = RunBlock(design_starts=1, multistart_starts=50, increment_tol=5e-3)
        return ExperimentConfig(scenario=paper_scenario(), run=run)
    raise ConfigError("scale", f"unknown scale {scale!r} (expected desk or paper)")


# ---------------------------------------------------------------- parsing


def _expect_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected a mapping, got {type(obj).__name__}")
    return obj


def _coerce(value, target, path: str):
    if target is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true or false")
        return value
    if target is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if target is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if target is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(target)


def _merge_block(base, data, path: str):
    """Overlay mapping ``data`` onto dataclass instance ``base`` with strict keys."""
    data = _expect_mapping(data, path)
    known = {f.name: f for f in dataclasses.fields(base)}
    updates = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigError(sub, "unknown key")
        current = getattr(base, key)
        if dataclasses.is_dataclass(current):
            updates[key] = _merge_block(current, value, sub)
        elif isinstance(current, tuple):
            if not isinstance(value, list):
                raise ConfigError(sub, "expected a list")
            kind = type(current[0]) if current else float
            updates[key] = tuple(_coerce(v, kind, f"{sub}[{i}]") for i, v in enumerate(value))
        else:
            updates[key] = _coerce(value, type(current), sub)
    return dataclasses.replace(base, **updates)


_SCENARIO_KEYS = {"n_tx": int, "n_rx": int, "n_samples": int, "energy": float, "snr_db": float}


def _parse_scenario(data, base: Scenario) -> Scenario:
    data = _expect_mapping(data, "scenario")
    fields = scenario_to_dict(base)
    for key, value in data.items():
        path = f"scenario.{key}"
        if key in _SCENARIO_KEYS:
            fields[key] = _coerce(value, _SCENARIO_KEYS[key], path)
        elif key == "sector":
            sec = dict(fields["sector"])
            for k, v in _expect_mapping(value, path).items():
                if k not in sec:
                    raise ConfigError(f"{path}.{k}", "unknown key")
                sec[k] = _coerce(v, float, f"{path}.{k}")
            fields["sector"] = sec
        elif key == "interferers":
            if not isinstance(value, list):
                raise ConfigError(path, "expected a list")
            items = []
            for i, item in enumerate(value):
                ip = f"{path}[{i}]"
                item = _expect_mapping(item, ip)
                missing = {"range_offset", "doa_deg", "inr_db"} - set(item)
                if missing:
                    raise ConfigError(ip, f"missing keys {sorted(missing)}")
                for k in item:
                    if k not in ("range_offset", "doa_deg", "inr_db"):
                        raise ConfigError(f"{ip}.{k}", "unknown key")
                items.append(
                    {
                        "range_offset": _coerce(item["range_offset"], int, f"{ip}.range_offset"),
                        "doa_deg": _coerce(item["doa_deg"], float, f"{ip}.doa_deg"),
                        "inr_db": _coerce(item["inr_db"], float, f"{ip}.inr_db"),
                    }
                )
            fields["interferers"] = items
        else:
            raise ConfigError(path, "unknown key")
    return build_scenario(fields)


def build_scenario(fields: dict[str, Any]) -> Scenario:
    try:
        sector = TargetSector(**fields["sector"])
    except ContractError as exc:
        raise ConfigError("scenario.sector", str(exc)) from exc
    interferers = []
    for i, item in enumerate(fields["interferers"]):
        try:
            interferers.append(Interferer(**item))
        except ContractError as exc:
            raise ConfigError(f"scenario.interferers[{i}]", str(exc)) from exc
    try:
        return Scenario(
            n_tx=fields["n_tx"],
            n_rx=fields["n_rx"],
            n_samples=fields["n_samples"],
            energy=fields["energy"],
            snr_db=fields["snr_db"],
            sector=sector,
            interferers=tuple(interferers),
        )
    except ContractError as exc:
        raise ConfigError("scenario", str(exc)) from exc


def _validate_run(run: RunBlock) -> None:
    positive = {
        "run.design_starts": run.design_starts,
        "run.multistart_starts": run.multistart_starts,
        "run.max_iterations": run.max_iterations,
        "run.workers": run.workers,
        "run.solver.max_iterations": run.solver.max_iterations,
        "run.synthesis.qcqp_iters": run.synthesis.qcqp_iters,
        "run.synthesis.samples": run.synthesis.samples,
    }
    for path, value in positive.items():
        if value < 1:
            raise ConfigError(path, "must be at least 1")
    for path, value in {
        "run.curve_points": run.curve_points,
        "run.certify_points": run.certify_points,
        "run.beampattern_points": run.beampattern_points,
        "run.synthesis.shape_points": run.synthesis.shape_points,
        "run.synthesis.omega_points": run.synthesis.omega_points,
    }.items():
        if value < 2:
            raise ConfigError(path, "must be at least 2")
    if run.seed < 0 or run.seed >= 2**64:
        raise ConfigError("run.seed", "must be an unsigned 64-bit integer")
    if run.increment_tol <= 0:
        raise ConfigError("run.increment_tol", "must be positive")
    if not run.deltas_deg:
        raise ConfigError("run.deltas_deg", "must not be empty")
    if any(d < 0 for d in run.deltas_deg) or list(run.deltas_deg) != sorted(run.deltas_deg):
        raise ConfigError("run.deltas_deg", "must be non-negative and ascending")
    if run.solver.backend not in ("cvxopt", "clarabel"):
        raise ConfigError("run.solver.backend", f"unknown backend {run.solver.backend!r}")
    if run.synthesis.pair not in ("design", "mix"):
        raise ConfigError("run.synthesis.pair", "expected design or mix")


def parse_config(data, scale: str = "desk") -> ExperimentConfig:
    """Build a config from an already-loaded mapping, overlaying the ``scale`` preset."""
    base = preset(scale)
    if data is None:
        data = {}
    data = _expect_mapping(data, "")
    for key in data:
        if key not in ("version", "scenario", "run", "output"):
            raise ConfigError(str(key), "unknown key")
    version = data.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("version", f"unsupported schema version {version!r}")
    scenario = _parse_scenario(data["scenario"], base.scenario) if "scenario" in data else base.scenario
    run = _merge_block(base.run, data["run"], "run") if "run" in data else base.run
    output = _merge_block(base.output, data["output"], "output") if "output" in data else base.output
    _validate_run(run)
    for i, fmt in enumerate(output.formats):
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output.formats[{i}]", f"unknown format {fmt!r}")
    return ExperimentConfig(scenario=scenario, run=run, output=output)


def load_config(path: str | Path | None, scale: str = "desk") -> ExperimentConfig:
    if path is None:
        return parse_config({}, scale)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML in {path}: {exc}") from exc
    return parse_config(data, scale)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
